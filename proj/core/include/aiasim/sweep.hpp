#pragma once

#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "aiasim/config.hpp"
#include "aiasim/engine.hpp"

namespace aiasim {

struct SweepWorkload {
  std::string name;
  Workload workload;
  Json source;  // echoed into each report
};

struct SweepSpec {
  std::vector<std::size_t> tlb_sizes;
  std::vector<std::uint64_t> miss_lat_ns;
  std::uint64_t hit_ns = 2;
  std::uint64_t validator_latency_ns = 8367;
  bool validator = true;
  Tick mem_lat = ns_to_ticks(100);
  std::uint64_t seed = 0;
  std::vector<SweepWorkload> workloads;
};

/// Trace paths resolve against `base_dir`. ConfigError on schema problems,
/// TraceError on unreadable traces.
SweepSpec load_sweep_spec(const Json& doc, const std::filesystem::path& base_dir);

struct SweepRow {
  std::string workload;
  std::string defense;
  std::size_t tlb_size = 0;     // iommu only
  std::uint64_t miss_ns = 0;    // iommu only
  std::uint64_t latency_ns = 0; // validator only
  SimResult result;
  std::string file;
  Json report;
};

/// All points, sorted by (workload, defense, tlb_size, miss_ns). Points run
/// on up to `jobs` threads; the output does not depend on `jobs`.
std::vector<SweepRow> run_sweep(const SweepSpec& spec, unsigned jobs);

std::string sweep_csv(const std::vector<SweepRow>& rows);

/// Reports plus summary.csv into `out_dir` (created if missing).
void write_sweep(const std::vector<SweepRow>& rows, const std::filesystem::path& out_dir);

}  // namespace aiasim
