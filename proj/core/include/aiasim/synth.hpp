#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "aiasim/engine.hpp"

namespace aiasim {

enum class PatternKind { Sequential, Strided, Random };

struct AccessPattern {
  PatternKind kind = PatternKind::Sequential;
  std::uint64_t stride = 1;  // Strided only
};

/// "sequential", "strided:<s>" or "random".
std::string pattern_name(const AccessPattern& p);
std::optional<AccessPattern> parse_pattern(std::string_view s);

struct SynthParams {
  std::size_t pipelines = 1;
  std::size_t ops_per_pipeline = 1000;
  std::size_t unique_pages = 64;
  double mem_to_compute_ratio = 1.0;  // fraction of ops that touch memory
  AccessPattern pattern;
  std::optional<std::size_t> dma_reprogram_every;  // memory ops between DMA reprograms
  Tick compute_ticks = ns_to_ticks(100);
  std::uint64_t base_addr = 0x4000'0000;
  Pid pid = 1;
};

/// Deterministic in (params, seed). Every one of `unique_pages` pages is
/// touched at least once whenever the workload has any memory op.
Workload synth(const SynthParams& params, std::uint64_t seed);

}  // namespace aiasim
