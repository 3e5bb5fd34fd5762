#include "aiasim/report.hpp"

#include <fstream>
#include <system_error>
#include <unistd.h>

namespace aiasim {

Json sim_report(const Json& config_echo, std::uint64_t seed, const SimResult& r) {
  Json j;
  j["config_echo"] = config_echo;
  j["seed"] = seed;
  j["baseline_ticks"] = r.baseline_ticks;
  j["protected_ticks"] = r.protected_ticks;
  j["overhead_pct"] = format_pct(r.overhead_pct);
  j["overhead_pct_exact"] = {{"num", r.overhead_pct.numerator()}, {"den", r.overhead_pct.denominator()}};
  Json outcomes;
  for (Outcome o : kAllOutcomes) outcomes[std::string(outcome_name(o))] = r.outcomes[o];
  j["outcomes"] = outcomes;
  j["validations"] = r.validations;
  j["iotlb"] = {{"hits", r.iotlb_hits}, {"misses", r.iotlb_misses}};
  j["digest"] = to_hex(r.digest);
  return j;
}

Json class_to_json(const CdaClass& c) {
  Json addr{{"axis", addr_axis_name(c.addr.axis)}};
  if (c.addr.axis == AddrAxis::Limited) {
    Json kinds = Json::array();
    for (RegionTag t : c.addr.kinds) kinds.push_back(tag_name(t));
    addr["kinds"] = kinds;
  }
  return {{"read", c.read},
          {"write", c.write},
          {"addr", addr},
          {"value", c.value ? Json(value_control_name(*c.value)) : Json(nullptr)},
          {"stale_only", c.stale_only}};
}

Json probe_report(const CdaProbe& probe, const ProbeReport& r) {
  Json j;
  j["preset"] = probe.preset().name;
  j["model"] = model_kind_name(probe.preset().model);
  j["attacker_pid"] = probe.attacker();
  j["memory_map"] = memory_map_to_json(probe.map());
  j["class"] = class_to_json(r.cls);
  j["summary"] = format_class(r.cls);
  Json ev = Json::array();
  for (const Evidence& e : r.evidence) {
    Json words = Json::array();
    for (std::uint64_t w : e.words) words.push_back(to_hex(w));
    ev.push_back({{"probe", e.probe}, {"victim_page", to_hex(e.victim)}, {"result", e.result}, {"words", words}});
  }
  j["evidence"] = ev;
  return j;
}

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp" + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw std::runtime_error("short write to " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw std::runtime_error("cannot rename into " + path.string());
  }
}

}  // namespace aiasim
