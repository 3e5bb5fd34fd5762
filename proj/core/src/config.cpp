#include "aiasim/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace aiasim {

namespace {

void only_keys(const Json& j, std::string_view where, std::initializer_list<std::string_view> keys) {
  if (!j.is_object()) throw ConfigError(std::string(where) + ": expected an object");
  for (const auto& [k, v] : j.items()) {
    bool known = false;
    for (std::string_view allowed : keys) known = known || k == allowed;
    if (!known) throw ConfigError(std::string(where) + ": unknown key '" + k + "'");
  }
}

std::uint64_t get_u64(const Json& j, std::string_view where, const char* key, std::uint64_t def) {
  if (!j.contains(key)) return def;
  const Json& v = j.at(key);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
    throw ConfigError(std::string(where) + "." + key + ": expected a non-negative integer");
  return v.get<std::uint64_t>();
}

bool get_bool(const Json& j, std::string_view where, const char* key, bool def) {
  if (!j.contains(key)) return def;
  if (!j.at(key).is_boolean()) throw ConfigError(std::string(where) + "." + key + ": expected true or false");
  return j.at(key).get<bool>();
}

std::string get_str(const Json& j, std::string_view where, const char* key) {
  if (!j.contains(key) || !j.at(key).is_string())
    throw ConfigError(std::string(where) + "." + key + ": expected a string");
  return j.at(key).get<std::string>();
}

std::uint64_t parse_hex(const std::string& s, std::string_view where) {
  std::string_view t = s;
  if (t.starts_with("0x") || t.starts_with("0X")) t.remove_prefix(2);
  if (t.empty() || t.size() > 16) throw ConfigError(std::string(where) + ": bad hex '" + s + "'");
  std::uint64_t v = 0;
  for (char c : t) {
    int d;
    if (c >= '0' && c <= '9') d = c - '0';
    else if (c >= 'a' && c <= 'f') d = c - 'a' + 10;
    else if (c >= 'A' && c <= 'F') d = c - 'A' + 10;
    else if (c == '_') continue;
    else throw ConfigError(std::string(where) + ": bad hex '" + s + "'");
    v = v << 4 | static_cast<std::uint64_t>(d);
  }
  return v;
}

std::string propagation_name(Propagation p) { return p == Propagation::Eager ? "eager" : "teardown_only"; }

Propagation parse_propagation(const std::string& s) {
  if (s == "eager") return Propagation::Eager;
  if (s == "teardown_only") return Propagation::TeardownOnly;
  throw ConfigError("kd_policy.unmap_propagation: expected 'eager' or 'teardown_only', got '" + s + "'");
}

Json translation_to_json(const Preset& p) {
  const TranslationParams& t = p.params;
  Json j;
  j["kind"] = model_kind_name(p.model);
  if (t.granularity_shift) j["granularity_shift"] = *t.granularity_shift;
  j["extended_bit"] = t.extended_bit;
  j["capacities"] = {{"simple", t.simple_capacity},         {"extended", t.extended_capacity},
                     {"mtlb", t.mtlb_capacity},             {"l1", t.l1_capacity},
                     {"per_use", t.per_use_capacity}};
  if (t.deterministic_l1_base) j["deterministic_l1_base_hex"] = to_hex(*t.deterministic_l1_base);
  Json win = Json::array();
  for (RegionTag tag : t.identity_window) win.push_back(tag_name(tag));
  j["identity_window"] = win;
  return j;
}

Json policy_to_json(const KdPolicy& k) {
  return {{"validate_on_map", k.validate_on_map},
          {"unmap_propagation", propagation_name(k.unmap_propagation)},
          {"scrub_on_release", k.scrub_on_release},
          {"exclusive_access", k.exclusive_access},
          {"tagged_entries", k.tagged_entries}};
}

}  // namespace

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

MemoryMap parse_memory_map(const Json& regions) {
  if (!regions.is_array()) throw ConfigError("memory_map: expected a list of regions");
  std::vector<Region> out;
  for (std::size_t i = 0; i < regions.size(); ++i) {
    const std::string where = "memory_map[" + std::to_string(i) + "]";
    const Json& r = regions[i];
    only_keys(r, where, {"start_hex", "end_hex", "kind", "pid"});
    const auto tag = parse_tag(get_str(r, where, "kind"));
    if (!tag) throw ConfigError(where + ".kind: unknown region kind '" + r.at("kind").get<std::string>() + "'");
    RegionKind kind{*tag, 0};
    if (*tag == RegionTag::UMem) {
      if (!r.contains("pid")) throw ConfigError(where + ": UMem region needs a pid");
      kind.pid = static_cast<Pid>(get_u64(r, where, "pid", 0));
    } else if (r.contains("pid")) {
      throw ConfigError(where + ": pid is only meaningful for UMem");
    }
    out.push_back({{parse_hex(get_str(r, where, "start_hex"), where + ".start_hex")},
                   {parse_hex(get_str(r, where, "end_hex"), where + ".end_hex")},
                   kind});
  }
  return MemoryMap(std::move(out));
}

Json memory_map_to_json(const MemoryMap& map) {
  Json out = Json::array();
  for (const Region& r : map.regions()) {
    Json j{{"start_hex", to_hex(r.start.value)}, {"end_hex", to_hex(r.end.value)}, {"kind", tag_name(r.kind.tag)}};
    if (r.kind.tag == RegionTag::UMem) j["pid"] = r.kind.pid;
    out.push_back(std::move(j));
  }
  return out;
}

Defense parse_defense(const Json& j) {
  const std::string kind = get_str(j, "defense", "kind");
  if (kind == "none") {
    only_keys(j, "defense", {"kind"});
    return NoDefense{};
  }
  if (kind == "validator") {
    only_keys(j, "defense", {"kind", "latency_ns", "page_shift"});
    ValidatorConfig v;
    v.latency_ticks = ns_to_ticks(get_u64(j, "defense", "latency_ns", 8367));
    v.page_shift = static_cast<unsigned>(get_u64(j, "defense", "page_shift", 12));
    (void)Validator{v};  // range checks
    return v;
  }
  if (kind == "iommu") {
    only_keys(j, "defense", {"kind", "tlb_size", "hit_ns", "miss_ns", "serialize_misses"});
    IommuConfig c;
    c.tlb_size = get_u64(j, "defense", "tlb_size", 8);
    c.hit_ticks = ns_to_ticks(get_u64(j, "defense", "hit_ns", 2));
    c.miss_ticks = ns_to_ticks(get_u64(j, "defense", "miss_ns", 1000));
    c.serialize_misses = get_bool(j, "defense", "serialize_misses", true);
    (void)Iotlb{c};
    return c;
  }
  if (kind == "kd_check") {
    only_keys(j, "defense", {"kind", "latency_ns"});
    const std::uint64_t ns = get_u64(j, "defense", "latency_ns", 8367);
    if (ns == 0) throw ConfigError("defense.latency_ns must be positive");
    return KdCheckConfig{ns_to_ticks(ns)};
  }
  throw ConfigError("defense.kind: expected none, validator, iommu or kd_check, got '" + kind + "'");
}

Json defense_to_json(const Defense& d) {
  Json j{{"kind", defense_name(d)}};
  if (auto* v = std::get_if<ValidatorConfig>(&d)) {
    j["latency_ns"] = v->latency_ticks / kTicksPerNs;
    j["page_shift"] = v->page_shift;
  } else if (auto* c = std::get_if<IommuConfig>(&d)) {
    j["tlb_size"] = c->tlb_size;
    j["hit_ns"] = c->hit_ticks / kTicksPerNs;
    j["miss_ns"] = c->miss_ticks / kTicksPerNs;
    j["serialize_misses"] = c->serialize_misses;
  } else if (auto* k = std::get_if<KdCheckConfig>(&d)) {
    j["latency_ns"] = k->latency_per_smid / kTicksPerNs;
  }
  return j;
}

SynthParams parse_synth(const Json& j) {
  only_keys(j, "synth", {"pipelines", "ops_per_pipeline", "unique_pages", "mem_to_compute_ratio", "pattern",
                         "dma_reprogram_every", "compute_ticks", "base_addr_hex", "pid"});
  SynthParams p;
  p.pipelines = get_u64(j, "synth", "pipelines", p.pipelines);
  p.ops_per_pipeline = get_u64(j, "synth", "ops_per_pipeline", p.ops_per_pipeline);
  p.unique_pages = get_u64(j, "synth", "unique_pages", p.unique_pages);
  if (j.contains("mem_to_compute_ratio")) {
    if (!j.at("mem_to_compute_ratio").is_number()) throw ConfigError("synth.mem_to_compute_ratio: expected a number");
    p.mem_to_compute_ratio = j.at("mem_to_compute_ratio").get<double>();
  }
  if (j.contains("pattern")) {
    const auto pat = parse_pattern(get_str(j, "synth", "pattern"));
    if (!pat) throw ConfigError("synth.pattern: expected sequential, strided:<s> or random");
    p.pattern = *pat;
  }
  if (j.contains("dma_reprogram_every") && !j.at("dma_reprogram_every").is_null())
    p.dma_reprogram_every = get_u64(j, "synth", "dma_reprogram_every", 0);
  p.compute_ticks = get_u64(j, "synth", "compute_ticks", p.compute_ticks);
  if (j.contains("base_addr_hex")) p.base_addr = parse_hex(get_str(j, "synth", "base_addr_hex"), "synth.base_addr_hex");
  p.pid = static_cast<Pid>(get_u64(j, "synth", "pid", p.pid));
  return p;
}

Json synth_to_json(const SynthParams& p) {
  Json j{{"pipelines", p.pipelines},
         {"ops_per_pipeline", p.ops_per_pipeline},
         {"unique_pages", p.unique_pages},
         {"mem_to_compute_ratio", p.mem_to_compute_ratio},
         {"pattern", pattern_name(p.pattern)}};
  j["dma_reprogram_every"] = p.dma_reprogram_every ? Json(*p.dma_reprogram_every) : Json(nullptr);
  j["compute_ticks"] = p.compute_ticks;
  j["base_addr_hex"] = to_hex(p.base_addr);
  j["pid"] = p.pid;
  return j;
}

MemoryMap default_probe_map() {
  return MemoryMap({
      {{0x0}, {0x10000}, {RegionTag::KMem, 0}},
      {{0x10000}, {0x20000}, {RegionTag::HMem, 0}},
      {{0x20000}, {0x28000}, RegionKind::umem(1)},
      {{0x28000}, {0x30000}, RegionKind::umem(2)},
      {{0x1000000}, {0x1020000}, {RegionTag::DMem, 0}},
      {{0x2000000}, {0x2008000}, {RegionTag::AIRMem, 0}},
      {{0x3000000}, {0x3004000}, {RegionTag::AIMem, 0}},
  });
}

RunConfig load_config(const Json& doc) {
  only_keys(doc, "config", {"memory_map", "translation", "kd_policy", "defense", "engine", "seed", "preset"});
  RunConfig rc;
  rc.map = doc.contains("memory_map") ? parse_memory_map(doc.at("memory_map")) : default_probe_map();

  // A named preset seeds translation and policy; explicit sections override.
  rc.system = *find_preset("ti");
  if (doc.contains("preset")) {
    const std::string name = get_str(doc, "config", "preset");
    auto p = find_preset(name);
    if (!p) throw ConfigError("config.preset: unknown preset '" + name + "'");
    rc.system = *p;
  } else {
    rc.system.name = "custom";
  }

  if (doc.contains("translation")) {
    const Json& t = doc.at("translation");
    only_keys(t, "translation",
              {"kind", "granularity_shift", "extended_bit", "capacities", "deterministic_l1_base_hex", "identity_window"});
    if (t.contains("kind")) {
      const std::string kind = get_str(t, "translation", "kind");
      auto m = parse_model_kind(kind);
      if (!m) throw ConfigError("translation.kind: unknown model '" + kind + "'");
      rc.system.model = *m;
    }
    TranslationParams& tp = rc.system.params;
    if (t.contains("granularity_shift"))
      tp.granularity_shift = static_cast<unsigned>(get_u64(t, "translation", "granularity_shift", 0));
    tp.extended_bit = static_cast<unsigned>(get_u64(t, "translation", "extended_bit", tp.extended_bit));
    if (t.contains("capacities")) {
      const Json& c = t.at("capacities");
      only_keys(c, "translation.capacities", {"simple", "extended", "mtlb", "l1", "per_use"});
      tp.simple_capacity = get_u64(c, "translation.capacities", "simple", tp.simple_capacity);
      tp.extended_capacity = get_u64(c, "translation.capacities", "extended", tp.extended_capacity);
      tp.mtlb_capacity = get_u64(c, "translation.capacities", "mtlb", tp.mtlb_capacity);
      tp.l1_capacity = get_u64(c, "translation.capacities", "l1", tp.l1_capacity);
      tp.per_use_capacity = get_u64(c, "translation.capacities", "per_use", tp.per_use_capacity);
    }
    if (t.contains("deterministic_l1_base_hex"))
      tp.deterministic_l1_base =
          parse_hex(get_str(t, "translation", "deterministic_l1_base_hex"), "translation.deterministic_l1_base_hex");
    if (t.contains("identity_window")) {
      const Json& w = t.at("identity_window");
      if (!w.is_array()) throw ConfigError("translation.identity_window: expected a list of region kinds");
      tp.identity_window.clear();
      for (const Json& k : w) {
        auto tag = k.is_string() ? parse_tag(k.get<std::string>()) : std::nullopt;
        if (!tag) throw ConfigError("translation.identity_window: bad region kind " + k.dump());
        tp.identity_window.push_back(*tag);
      }
    }
  }

  if (doc.contains("kd_policy")) {
    const Json& k = doc.at("kd_policy");
    only_keys(k, "kd_policy",
              {"validate_on_map", "unmap_propagation", "scrub_on_release", "exclusive_access", "tagged_entries"});
    KdPolicy& p = rc.system.policy;
    p.validate_on_map = get_bool(k, "kd_policy", "validate_on_map", p.validate_on_map);
    if (k.contains("unmap_propagation"))
      p.unmap_propagation = parse_propagation(get_str(k, "kd_policy", "unmap_propagation"));
    p.scrub_on_release = get_bool(k, "kd_policy", "scrub_on_release", p.scrub_on_release);
    p.exclusive_access = get_bool(k, "kd_policy", "exclusive_access", p.exclusive_access);
    p.tagged_entries = get_bool(k, "kd_policy", "tagged_entries", p.tagged_entries);
  }

  rc.sim.defense = doc.contains("defense") ? parse_defense(doc.at("defense")) : Defense{NoDefense{}};
  if (doc.contains("engine")) {
    const Json& e = doc.at("engine");
    only_keys(e, "engine", {"mem_lat_ticks", "pid", "invalidate_on_start"});
    rc.sim.mem_lat = get_u64(e, "engine", "mem_lat_ticks", rc.sim.mem_lat);
    rc.pid = static_cast<Pid>(get_u64(e, "engine", "pid", rc.pid));
    rc.sim.invalidate_on_start = get_bool(e, "engine", "invalidate_on_start", rc.sim.invalidate_on_start);
  }
  if (rc.sim.mem_lat == 0) throw ConfigError("engine.mem_lat_ticks must be positive");
  rc.seed = get_u64(doc, "config", "seed", 0);

  // Building the driver checks the model against the map.
  KernelDriver probe(rc.map, rc.system);
  (void)probe;

  rc.echo["memory_map"] = memory_map_to_json(rc.map);
  rc.echo["preset"] = rc.system.name;
  rc.echo["translation"] = translation_to_json(rc.system);
  rc.echo["kd_policy"] = policy_to_json(rc.system.policy);
  rc.echo["defense"] = defense_to_json(rc.sim.defense);
  rc.echo["engine"] = {{"mem_lat_ticks", rc.sim.mem_lat},
                       {"pid", rc.pid},
                       {"invalidate_on_start", rc.sim.invalidate_on_start}};
  rc.echo["seed"] = rc.seed;
  return rc;
}

RunConfig load_config_file(const std::filesystem::path& path) { return load_config(read_json_file(path)); }

}  // namespace aiasim
