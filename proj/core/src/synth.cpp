#include "aiasim/synth.hpp"

#include <charconv>
#include <cmath>
#include <numeric>
#include <random>

namespace aiasim {

std::string pattern_name(const AccessPattern& p) {
  switch (p.kind) {
    case PatternKind::Sequential: return "sequential";
    case PatternKind::Strided: return "strided:" + std::to_string(p.stride);
    case PatternKind::Random: return "random";
  }
  return "?";
}

std::optional<AccessPattern> parse_pattern(std::string_view s) {
  if (s == "sequential") return AccessPattern{PatternKind::Sequential, 1};
  if (s == "random") return AccessPattern{PatternKind::Random, 1};
  if (s.starts_with("strided:")) {
    s.remove_prefix(8);
    std::uint64_t stride = 0;
    const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), stride);
    if (ec != std::errc{} || end != s.data() + s.size() || stride == 0) return std::nullopt;
    return AccessPattern{PatternKind::Strided, stride};
  }
  return std::nullopt;
}

namespace {

// Memory slot j of a pipeline holds a memory op iff floor((j+1)r) > floor(jr).
bool is_memory_slot(std::size_t j, double r) {
  return std::floor(static_cast<double>(j + 1) * r) > std::floor(static_cast<double>(j) * r);
}

std::vector<PageIndex> page_sequence(const SynthParams& p, std::size_t count, std::uint64_t seed) {
  const std::uint64_t u = p.unique_pages;
  std::vector<PageIndex> out(count);
  switch (p.pattern.kind) {
    case PatternKind::Sequential:
      for (std::size_t k = 0; k < count; ++k) out[k] = k % u;
      break;
    case PatternKind::Strided: {
      // Walk each residue class of gcd(stride, u) in turn so all u pages
      // show up within the first u accesses.
      const std::uint64_t s = p.pattern.stride % u;
      const std::uint64_t cycle = u / std::gcd(s == 0 ? u : s, u);
      for (std::size_t k = 0; k < count; ++k) {
        const std::uint64_t i = k % u;
        out[k] = (i * s + i / cycle) % u;
      }
      break;
    }
    case PatternKind::Random: {
      // Plain modulo reduction keeps the stream identical across standard
      // libraries, which std distributions do not promise.
      std::mt19937_64 rng(seed);
      for (std::size_t k = 0; k < count; ++k) out[k] = k < u ? k : rng() % u;
      for (std::size_t i = count; i > 1; --i) std::swap(out[i - 1], out[rng() % i]);
      break;
    }
  }
  return out;
}

}  // namespace

Workload synth(const SynthParams& p, std::uint64_t seed) {
  if (p.unique_pages == 0) throw ConfigError("unique_pages must be at least 1");
  if (p.pipelines == 0) throw ConfigError("pipelines must be at least 1");
  if (!(p.mem_to_compute_ratio >= 0.0 && p.mem_to_compute_ratio <= 1.0))
    throw ConfigError("mem_to_compute_ratio must lie in [0, 1]");
  if (p.compute_ticks == 0) throw ConfigError("compute_ticks must be positive");
  if (p.dma_reprogram_every && *p.dma_reprogram_every == 0) throw ConfigError("dma_reprogram_every must be positive");
  if (p.base_addr & 0xfff) throw ConfigError("base_addr must be page aligned");

  std::size_t mem_per_pipe = 0;
  for (std::size_t j = 0; j < p.ops_per_pipeline; ++j) mem_per_pipe += is_memory_slot(j, p.mem_to_compute_ratio);
  const std::size_t total = mem_per_pipe * p.pipelines;
  if (total && total < p.unique_pages)
    throw ConfigError(std::to_string(total) + " memory ops cannot touch " + std::to_string(p.unique_pages) +
                      " distinct pages");

  const std::vector<PageIndex> pages = page_sequence(p, total, seed);
  const PageIndex base_page = p.base_addr >> 12;
  auto addr = [&](PageIndex pg) { return PhysAddr::of_page(base_page + pg, 12); };

  Workload w;
  w.pid = p.pid;
  w.pipelines.resize(p.pipelines);
  std::size_t k = 0;
  for (Pipeline& pipe : w.pipelines) {
    std::size_t since_dma = 0;
    for (std::size_t j = 0; j < p.ops_per_pipeline; ++j) {
      if (!is_memory_slot(j, p.mem_to_compute_ratio)) {
        pipe.push_back(op::Comp{p.compute_ticks});
        continue;
      }
      const PhysAddr a = addr(pages[k]);
      if (k % 4 == 3)
        pipe.push_back(op::Store{a});
      else
        pipe.push_back(op::Load{a});
      ++k;
      if (p.dma_reprogram_every && ++since_dma == *p.dma_reprogram_every) {
        since_dma = 0;
        pipe.push_back(op::DmaCtl{DmaReg::Src, a});
        pipe.push_back(op::DmaCtl{DmaReg::Dst, addr(pages[(k * 7) % total])});
        pipe.push_back(op::DmaPio{"LEN"});
        pipe.push_back(op::DmaPio{"FLAGS"});
      }
    }
  }
  for (PageIndex pg : pages) w.declared_pages.insert(base_page + pg);
  return w;
}

}  // namespace aiasim
