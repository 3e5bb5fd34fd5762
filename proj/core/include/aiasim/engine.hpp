#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "aiasim/iommu.hpp"
#include "aiasim/types.hpp"
#include "aiasim/validator.hpp"

namespace aiasim {

namespace op {
struct Comp {
  Tick duration;
  friend bool operator==(const Comp&, const Comp&) = default;
};
struct Load {
  PhysAddr addr;
  friend bool operator==(const Load&, const Load&) = default;
};
struct Store {
  PhysAddr addr;
  friend bool operator==(const Store&, const Store&) = default;
};
struct DmaCtl {
  DmaReg reg;
  PhysAddr addr;
  friend bool operator==(const DmaCtl&, const DmaCtl&) = default;
};
struct DmaPio {
  std::string reg;
  friend bool operator==(const DmaPio&, const DmaPio&) = default;
};
struct MsgSub {
  std::uint32_t smids;
  friend bool operator==(const MsgSub&, const MsgSub&) = default;
};
}  // namespace op

using Op = std::variant<op::Comp, op::Load, op::Store, op::DmaCtl, op::DmaPio, op::MsgSub>;
using Pipeline = std::vector<Op>;

struct Workload {
  Pid pid = 1;
  std::vector<Pipeline> pipelines;
  unsigned page_shift = 12;
  std::set<PageIndex> declared_pages;  // working set named in messages (kd_check)

  /// Distinct pages touched by Load/Store.
  std::set<PageIndex> touched_pages() const;
  std::size_t op_count() const;

  friend bool operator==(const Workload&, const Workload&) = default;
};

struct NoDefense {};
struct KdCheckConfig {
  Tick latency_per_smid = ns_to_ticks(8367);
};

using Defense = std::variant<NoDefense, ValidatorConfig, IommuConfig, KdCheckConfig>;

/// "none", "validator", "iommu" or "kd_check".
std::string defense_name(const Defense& d);

struct SimConfig {
  Tick mem_lat = ns_to_ticks(100);
  Defense defense;
  // Invalidate the IOTLB when the workload starts (context switch).
  bool invalidate_on_start = true;
};

struct SimResult {
  Tick baseline_ticks = 0;
  Tick protected_ticks = 0;
  Rational overhead_pct;
  OutcomeCounts outcomes;
  std::uint64_t validations = 0;
  std::uint64_t iotlb_hits = 0;
  std::uint64_t iotlb_misses = 0;
  std::uint64_t digest = 0;

  friend bool operator==(const SimResult&, const SimResult&) = default;
};

/// One pass under `config.defense` plus an identical undefended pass.
SimResult run(const Workload& workload, const SimConfig& config);

/// Runtime of a single pass. `completions`, when given, receives each op's
/// completion tick per pipeline.
Tick run_pass(const Workload& workload, const SimConfig& config, SimResult* stats = nullptr,
              std::vector<std::vector<Tick>>* completions = nullptr);

/// (protected - baseline) / baseline * 100, exact.
Rational overhead(Tick baseline, Tick protected_ticks);

/// Two decimals, rounded half away from zero, e.g. "15.33".
std::string format_pct(const Rational& pct);

}  // namespace aiasim
