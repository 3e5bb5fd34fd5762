#include "aiasim/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <sstream>
#include <thread>

#include "aiasim/report.hpp"
#include "aiasim/trace.hpp"

namespace aiasim {

namespace {

template <class T>
std::vector<T> u64_list(const Json& doc, const char* key) {
  if (!doc.contains(key) || !doc.at(key).is_array() || doc.at(key).empty())
    throw ConfigError(std::string("sweep.") + key + ": expected a non-empty list");
  std::vector<T> out;
  for (const Json& v : doc.at(key)) {
    if (!v.is_number_unsigned() || v.get<std::uint64_t>() == 0)
      throw ConfigError(std::string("sweep.") + key + ": entries must be positive integers");
    out.push_back(v.get<T>());
  }
  return out;
}

bool safe_name(const std::string& s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
  }) && s != "." && s != "..";
}

}  // namespace

SweepSpec load_sweep_spec(const Json& doc, const std::filesystem::path& base_dir) {
  if (!doc.is_object()) throw ConfigError("sweep spec: expected an object");
  for (const auto& [k, v] : doc.items()) {
    static const std::vector<std::string> known{"tlb_sizes", "miss_lat_ns", "hit_ns", "validator_latency_ns",
                                                "validator", "mem_lat_ns", "seed", "workloads"};
    if (std::find(known.begin(), known.end(), k) == known.end())
      throw ConfigError("sweep spec: unknown key '" + k + "'");
  }
  SweepSpec s;
  s.tlb_sizes = u64_list<std::size_t>(doc, "tlb_sizes");
  s.miss_lat_ns = u64_list<std::uint64_t>(doc, "miss_lat_ns");
  auto num = [&](const char* key, std::uint64_t def) {
    if (!doc.contains(key)) return def;
    if (!doc.at(key).is_number_unsigned()) throw ConfigError(std::string("sweep.") + key + ": expected an integer");
    return doc.at(key).get<std::uint64_t>();
  };
  s.hit_ns = num("hit_ns", s.hit_ns);
  s.validator_latency_ns = num("validator_latency_ns", s.validator_latency_ns);
  s.mem_lat = ns_to_ticks(num("mem_lat_ns", 100));
  s.seed = num("seed", 0);
  if (doc.contains("validator")) {
    if (!doc.at("validator").is_boolean()) throw ConfigError("sweep.validator: expected true or false");
    s.validator = doc.at("validator").get<bool>();
  }
  if (s.mem_lat == 0) throw ConfigError("sweep.mem_lat_ns must be positive");
  if (s.validator_latency_ns == 0) throw ConfigError("sweep.validator_latency_ns must be positive");
  for (std::uint64_t m : s.miss_lat_ns)
    if (m < s.hit_ns) throw ConfigError("sweep.miss_lat_ns: " + std::to_string(m) + " is below hit_ns");

  if (!doc.contains("workloads") || !doc.at("workloads").is_array() || doc.at("workloads").empty())
    throw ConfigError("sweep.workloads: expected a non-empty list");
  std::set<std::string> names;
  for (const Json& w : doc.at("workloads")) {
    if (!w.is_object() || !w.contains("name") || !w.at("name").is_string())
      throw ConfigError("sweep.workloads: each entry needs a string name");
    SweepWorkload sw;
    sw.name = w.at("name").get<std::string>();
    if (!safe_name(sw.name)) throw ConfigError("sweep.workloads: bad name '" + sw.name + "'");
    if (!names.insert(sw.name).second) throw ConfigError("sweep.workloads: duplicate name '" + sw.name + "'");
    const bool has_synth = w.contains("synth");
    const bool has_trace = w.contains("trace");
    if (has_synth == has_trace) throw ConfigError("sweep.workloads[" + sw.name + "]: give exactly one of synth or trace");
    for (const auto& [k, v] : w.items())
      if (k != "name" && k != "synth" && k != "trace" && k != "seed")
        throw ConfigError("sweep.workloads[" + sw.name + "]: unknown key '" + k + "'");
    const std::uint64_t seed =
        w.contains("seed") && w.at("seed").is_number_unsigned() ? w.at("seed").get<std::uint64_t>() : s.seed;
    if (has_synth) {
      const SynthParams p = parse_synth(w.at("synth"));
      sw.workload = synth(p, seed);
      sw.source = {{"synth", synth_to_json(p)}, {"seed", seed}};
    } else {
      if (!w.at("trace").is_string()) throw ConfigError("sweep.workloads[" + sw.name + "].trace: expected a path");
      const std::filesystem::path path = base_dir / w.at("trace").get<std::string>();
      std::ifstream in(path);
      if (!in) throw ConfigError("cannot read trace " + path.string());
      sw.workload = parse_trace(in);
      sw.source = {{"trace", w.at("trace")}};
    }
    s.workloads.push_back(std::move(sw));
  }
  return s;
}

std::vector<SweepRow> run_sweep(const SweepSpec& spec, unsigned jobs) {
  struct Point {
    const SweepWorkload* w;
    SweepRow row;
    Defense defense;
  };
  std::vector<Point> points;
  for (const SweepWorkload& w : spec.workloads) {
    if (spec.validator) {
      SweepRow r{w.name, "validator", 0, 0, spec.validator_latency_ns, {}, w.name + "__validator.json", {}};
      points.push_back({&w, std::move(r), ValidatorConfig{ns_to_ticks(spec.validator_latency_ns), 12}});
    }
    for (std::size_t size : spec.tlb_sizes)
      for (std::uint64_t miss : spec.miss_lat_ns) {
        SweepRow r{w.name, "iommu", size, miss, 0, {},
                   w.name + "__iommu_s" + std::to_string(size) + "_m" + std::to_string(miss) + ".json", {}};
        points.push_back({&w, std::move(r), IommuConfig{size, ns_to_ticks(spec.hit_ns), ns_to_ticks(miss), true, 12}});
      }
  }

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < points.size();) {
      Point& p = points[i];
      const SimConfig cfg{spec.mem_lat, p.defense, true};
      p.row.result = run(p.w->workload, cfg);
      Json echo{{"workload", p.w->name},
                {"source", p.w->source},
                {"defense", defense_to_json(p.defense)},
                {"engine", {{"mem_lat_ticks", spec.mem_lat}}}};
      p.row.report = sim_report(echo, spec.seed, p.row.result);
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(points.size())));
  {
    std::vector<std::jthread> pool;
    for (unsigned t = 1; t < n; ++t) pool.emplace_back(worker);
    worker();
  }

  std::vector<SweepRow> rows;
  for (Point& p : points) rows.push_back(std::move(p.row));
  std::stable_sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) {
    return std::tie(a.workload, a.defense, a.tlb_size, a.miss_ns) < std::tie(b.workload, b.defense, b.tlb_size, b.miss_ns);
  });
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << "workload,defense,tlb_size,miss_ns,latency_ns,validations,overhead_pct\n";
  for (const SweepRow& r : rows) {
    const bool iommu = r.defense == "iommu";
    out << r.workload << ',' << r.defense << ',' << (iommu ? std::to_string(r.tlb_size) : "") << ','
        << (iommu ? std::to_string(r.miss_ns) : "") << ',' << (iommu ? "" : std::to_string(r.latency_ns)) << ','
        << r.result.validations << ',' << format_pct(r.result.overhead_pct) << '\n';
  }
  return out.str();
}

void write_sweep(const std::vector<SweepRow>& rows, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  for (const SweepRow& r : rows) write_file_atomic(out_dir / r.file, dump(r.report));
  write_file_atomic(out_dir / "summary.csv", sweep_csv(rows));
}

}  // namespace aiasim
