#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <utility>

#include "aiasim/types.hpp"

namespace aiasim {

enum class DmaReg { Src, Dst };

std::string_view dma_reg_name(DmaReg r);

enum class AccessType { Load, Store, DmaCtrlWrite, DmaPio };

struct Access {
  AccessType type = AccessType::Load;
  PhysAddr addr;  // Load/Store target, DMA descriptor value otherwise
};

enum class Outcome { CacheHit, Coalesced, ColdMiss, DmaCtrl, Passthrough };

inline constexpr std::size_t kOutcomeCount = 5;
inline constexpr std::array<Outcome, kOutcomeCount> kAllOutcomes{
    Outcome::CacheHit, Outcome::Coalesced, Outcome::ColdMiss, Outcome::DmaCtrl, Outcome::Passthrough};

/// snake_case report key, e.g. "cold_miss".
std::string_view outcome_name(Outcome o);

struct OutcomeCounts {
  std::array<std::uint64_t, kOutcomeCount> n{};

  std::uint64_t& operator[](Outcome o) { return n[static_cast<std::size_t>(o)]; }
  std::uint64_t operator[](Outcome o) const { return n[static_cast<std::size_t>(o)]; }
  std::uint64_t total() const;

  friend bool operator==(const OutcomeCounts&, const OutcomeCounts&) = default;
};

struct ValidatorConfig {
  Tick latency_ticks = ns_to_ticks(8367);
  unsigned page_shift = 12;
};

struct Charge {
  Outcome outcome;
  Tick defer;
};

/// On-demand validation state for one cluster: the per-process validated
/// page cache, in-flight validations and the chip-wide ready deadline.
class Validator {
 public:
  explicit Validator(ValidatorConfig cfg = {});

  Charge charge(Pid pid, const Access& access, Tick now);

  /// Forget every validation; the deadline survives.
  void reset();

  const ValidatorConfig& config() const { return cfg_; }
  Tick next_ready() const { return next_ready_; }
  const OutcomeCounts& counts() const { return counts_; }
  /// KD round trips: cold misses plus DMA descriptor checks.
  std::uint64_t validations() const { return counts_[Outcome::ColdMiss] + counts_[Outcome::DmaCtrl]; }
  bool is_validated(Pid pid, PageIndex page) const { return validated_.contains({pid, page}); }
  std::size_t inflight() const { return inflight_.size(); }

 private:
  using Key = std::pair<Pid, PageIndex>;

  void retire(Tick now);
  Tick serialize(Tick now);

  ValidatorConfig cfg_;
  std::set<Key> validated_;
  std::map<Key, Tick> inflight_;
  Tick next_ready_ = 0;
  OutcomeCounts counts_;
};

/// Page-table walk plus an interrupt each way.
constexpr std::uint64_t derive_validation_latency_ns(std::uint64_t pagewalk_ns, std::uint64_t irq_one_way_ns) {
  return pagewalk_ns + 2 * irq_one_way_ns;
}

/// ns * freq_hz / 1e9, exact.
Rational ns_to_cycles(std::uint64_t ns, std::uint64_t freq_hz);

/// Exact decimal when the expansion terminates within `max_digits`, else
/// "num/den".
std::string rational_to_string(const Rational& r, int max_digits = 12);

}  // namespace aiasim
