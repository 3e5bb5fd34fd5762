#pragma once

#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "aiasim/kd_sim.hpp"

namespace aiasim {

enum class AddrAxis { Full, Limited, NoControl };
enum class ValueControl { Full, Limited, NoControl };

struct AddrControl {
  AddrAxis axis = AddrAxis::NoControl;
  std::set<RegionTag> kinds;  // Limited only

  friend bool operator==(const AddrControl&, const AddrControl&) = default;
};

/// Three-axis attack capability: read/write, victim-address control and
/// written-value control.
struct CdaClass {
  bool read = false;
  bool write = false;
  AddrControl addr;
  std::optional<ValueControl> value;
  bool stale_only = false;

  bool any() const { return read || write; }
  friend bool operator==(const CdaClass&, const CdaClass&) = default;
};

/// Compact form, e.g. "R W A=limited(DMem,AIRMem) V=full stale_only=false",
/// or "no-CDA".
std::string format_class(const CdaClass& c);
std::string_view addr_axis_name(AddrAxis a);
std::string_view value_control_name(ValueControl v);

struct Evidence {
  std::string probe;
  PageIndex victim = 0;
  std::string result;
  std::vector<std::uint64_t> words;
};

struct ProbeReport {
  CdaClass cls;
  std::vector<Evidence> evidence;
};

enum class Route {
  Direct,     // SMID the attacker can construct, or ask an unvalidating driver for
  Escalated,  // forge flat-map table entries first, then go direct
  Stale,      // page mapped while owned, unmapped, then reused
};

std::string_view route_name(Route r);

enum class ProbeStatus { Confirmed, Blocked, Faulted };

struct ProbeOutcome {
  ProbeStatus status = ProbeStatus::Blocked;
  std::vector<std::uint64_t> words;  // written (write probe) or leaked (read probe)
  std::optional<FaultReason> fault;
};

enum class StaleVerdict { Vulnerable, Safe };

/// Flat-map escalation run twice: once forging the table entry first, once
/// going straight for the victim's identity SMID.
struct Escalation {
  ProbeOutcome forged;
  ProbeOutcome unforged;
  SentinelState forged_sentinel = SentinelState::Intact;
  SentinelState unforged_sentinel = SentinelState::Intact;
};

inline constexpr std::uint64_t kSentinelPattern = 0xDEADBEEFDEADBEEFull;

/// Runs the CDA checking procedure for one (translation model, driver
/// policy, memory map) triple. Every probe works on a fresh copy of the
/// system, so probes are independent and the object is immutable.
class CdaProbe {
 public:
  CdaProbe(MemoryMap map, Preset preset, Pid attacker = 1);

  ProbeOutcome probe_write(PageIndex victim, Route route,
                           std::vector<std::uint64_t> model_output = default_output()) const;
  ProbeOutcome probe_read(PageIndex victim, Route route) const;
  StaleVerdict probe_stale() const;
  Escalation two_step_escalation(PageIndex victim) const;

  ProbeReport classify() const;

  /// Brute force over the attacker's SMID space, stale routes excluded.
  std::set<PageIndex> oracle_reachable() const;

  /// Pages the probes treat as victims: restricted pages plus accelerator
  /// MMIO, minus live table pages and the attacker's own buffer.
  std::vector<PageIndex> candidate_victims() const;

  /// Address axis implied by a set of reachable pages over the candidates.
  AddrControl addr_axis_of(const std::set<PageIndex>& reachable) const;

  const MemoryMap& map() const { return map_; }
  const Preset& preset() const { return preset_; }
  Pid attacker() const { return attacker_; }

  static std::vector<std::uint64_t> default_output() { return {0x7, 0x1, 0x3, 0x2}; }

 private:
  struct System;
  System boot() const;
  std::optional<DeviceRef> route_ref(System& sys, PageIndex victim, Route route) const;
  void check_victim(PageIndex victim) const;

  MemoryMap map_;
  Preset preset_;
  Pid attacker_;
  std::shared_ptr<const System> base_;
  std::vector<PageIndex> candidates_;
};

}  // namespace aiasim
