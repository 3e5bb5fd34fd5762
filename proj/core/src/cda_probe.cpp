#include "aiasim/cda_probe.hpp"

#include <algorithm>
#include <stdexcept>

namespace aiasim {

std::string_view addr_axis_name(AddrAxis a) {
  switch (a) {
    case AddrAxis::Full: return "full";
    case AddrAxis::Limited: return "limited";
    case AddrAxis::NoControl: return "none";
  }
  return "?";
}

std::string_view value_control_name(ValueControl v) {
  switch (v) {
    case ValueControl::Full: return "full";
    case ValueControl::Limited: return "limited";
    case ValueControl::NoControl: return "none";
  }
  return "?";
}

std::string_view route_name(Route r) {
  switch (r) {
    case Route::Direct: return "direct";
    case Route::Escalated: return "escalated";
    case Route::Stale: return "stale";
  }
  return "?";
}

std::string format_class(const CdaClass& c) {
  if (!c.any()) return "no-CDA";
  std::string out;
  if (c.read) out += "R ";
  if (c.write) out += "W ";
  out += "A=";
  out += addr_axis_name(c.addr.axis);
  if (c.addr.axis == AddrAxis::Limited) {
    out += '(';
    bool first = true;
    for (RegionTag t : c.addr.kinds) {
      if (!first) out += ',';
      out += tag_name(t);
      first = false;
    }
    out += ')';
  }
  if (c.value) {
    out += " V=";
    out += value_control_name(*c.value);
  }
  out += c.stale_only ? " stale_only=true" : " stale_only=false";
  return out;
}

struct CdaProbe::System {
  KernelDriver kd;
  std::optional<DeviceRef> buffer;
  PageIndex buffer_page = 0;
  std::vector<PageIndex> scratch;  // attacker-owned pages other than the buffer

  Session& session(Pid pid) { return kd.session(pid); }
};

namespace {

constexpr std::size_t kLeakWords = 4;

PhysAddr page_addr(PageIndex p) { return PhysAddr::of_page(p, 12); }

bool round_trips(const KernelDriver& kd, DeviceRef ref, PageIndex page) {
  const TranslateResult r = kd.model().translate(kd.memory(), ref);
  const auto* a = std::get_if<PhysAddr>(&r);
  return a && a->page(12) == page;
}

std::optional<DeviceRef> try_map(KernelDriver& kd, Session& s, PageIndex page) {
  try {
    const PageIndex one[] = {page};
    const DeviceRef ref = kd.map_request(s, one);
    kd.model().set_active_pid(s.pid);
    if (round_trips(kd, ref, page)) return ref;
  } catch (const KdError&) {
  }
  return std::nullopt;
}

// One attacker inference writing `words` at `target`. Ok iff the write landed.
bool inference_write(KernelDriver& kd, Session& s, DeviceRef input, DeviceRef target,
                     std::vector<std::uint64_t> words) {
  const InferenceResult r = kd.submit_inference(s, {input, target, std::move(words), 0});
  return std::holds_alternative<InferenceOk>(r);
}

}  // namespace

CdaProbe::CdaProbe(MemoryMap map, Preset preset, Pid attacker)
    : map_(std::move(map)), preset_(std::move(preset)), attacker_(attacker) {
  if (map_.page_shift() != 12) throw ConfigError("CDA probes need a 4 KiB page map");
  base_ = std::make_shared<const System>(boot());

  std::set<PageIndex> cands = map_.restricted_for(attacker_);
  for (PageIndex p : map_.pages_of(RegionTag::AIMem)) cands.insert(p);
  for (PageIndex p : base_->kd.model().table_pages()) cands.erase(p);
  if (base_->buffer) cands.erase(base_->buffer_page);
  candidates_.assign(cands.begin(), cands.end());
}

CdaProbe::System CdaProbe::boot() const {
  System sys{KernelDriver(map_, preset_), {}, 0, {}};
  Session& s = sys.kd.open_session(attacker_);
  const std::vector<PageIndex> owned(s.owned_pages.begin(), s.owned_pages.end());
  for (PageIndex p : owned) {
    if (auto ref = try_map(sys.kd, s, p)) {
      sys.buffer = ref;
      sys.buffer_page = p;
      break;
    }
  }
  if (!sys.buffer) {
    // No zero-copy path to user memory: ask the driver for a DMA buffer in
    // accelerator-addressable memory instead.
    const std::set<PageIndex> tables = sys.kd.model().table_pages();
    for (RegionTag tag : {RegionTag::DMem, RegionTag::AIRMem, RegionTag::AIMem}) {
      for (PageIndex p : map_.pages_of(tag)) {
        if (tables.contains(p)) continue;
        sys.kd.grant_page(attacker_, p);
        if (auto ref = try_map(sys.kd, s, p)) {
          sys.buffer = ref;
          sys.buffer_page = p;
          break;
        }
        const PageIndex one[] = {p};
        sys.kd.unmap(s, one);
      }
      if (sys.buffer) break;
    }
  }
  for (PageIndex p : owned)
    if (!sys.buffer || p != sys.buffer_page) sys.scratch.push_back(p);
  if (sys.scratch.empty() && sys.buffer) sys.scratch.push_back(sys.buffer_page);
  return sys;
}

std::vector<PageIndex> CdaProbe::candidate_victims() const { return candidates_; }

void CdaProbe::check_victim(PageIndex victim) const {
  if (!std::binary_search(candidates_.begin(), candidates_.end(), victim))
    throw std::invalid_argument("page " + to_hex(victim) + " is not a candidate victim for pid " +
                                std::to_string(attacker_));
}

std::optional<DeviceRef> CdaProbe::route_ref(System& sys, PageIndex victim, Route route) const {
  KernelDriver& kd = sys.kd;
  Session& s = sys.session(attacker_);
  switch (route) {
    case Route::Direct: {
      if (auto ref = kd.model().construct_smid_for_phys(kd.memory(), sys.scratch, victim)) return ref;
      if (kd.policy().validate_on_map) return std::nullopt;
      return try_map(kd, s, victim);
    }
    case Route::Escalated: {
      const auto* fs = std::get_if<detail::FlatMapState>(&kd.model().state());
      if (!fs) return std::nullopt;
      const PhysAddr victim_addr = page_addr(victim);
      const auto mtlb = kd.model().mtlb_entry_addr(victim_addr);
      if (!mtlb) return std::nullopt;
      const DeviceRef victim_ref{Smid{victim_addr.value}, 0};

      // Every forged write goes through an identity SMID of the flat map.
      auto forge = [&](PhysAddr at, std::uint64_t value) {
        if (!kd.model().construct_smid_for_phys(kd.memory(), sys.scratch, at.page(12))) return false;
        return inference_write(kd, s, *sys.buffer, {Smid{at.value}, 0}, {value});
      };

      const std::uint64_t e = kd.memory().read_word(*mtlb);
      if (e & kEntryFlat) return victim_ref;
      const std::size_t entries = std::size_t{1} << (fs->granule_shift - 12);
      const std::uint64_t idx = victim & (entries - 1);
      if (e & kEntryValid) {
        const PhysAddr slot{(entry_page(e) << 12) + idx * 8};
        if (!forge(slot, make_entry(victim))) return std::nullopt;
        return victim_ref;
      }
      // No second-level table for this granule yet: plant one whose slot for
      // the victim falls on a flat-mapped scratch page, then point the MTLB
      // at it.
      const std::set<PageIndex> tables = kd.model().table_pages();
      for (PageIndex d : map_.pages_of(RegionTag::DMem)) {
        if (tables.contains(d) || d == victim || d == sys.buffer_page || d < idx / 512) continue;
        const PageIndex table = d - idx / 512;
        if (!forge({(d << 12) + (idx % 512) * 8}, make_entry(victim))) return std::nullopt;
        if (!forge(*mtlb, make_entry(table))) return std::nullopt;
        return victim_ref;
      }
      return std::nullopt;
    }
    case Route::Stale: {
      kd.grant_page(attacker_, victim);
      auto ref = try_map(kd, s, victim);
      const PageIndex one[] = {victim};
      kd.unmap(s, one);
      return ref;
    }
  }
  return std::nullopt;
}

ProbeOutcome CdaProbe::probe_write(PageIndex victim, Route route, std::vector<std::uint64_t> model_output) const {
  check_victim(victim);
  System sys = *base_;
  if (!sys.buffer) return {};
  const auto ref = route_ref(sys, victim, route);
  if (!ref) return {};

  KernelDriver& kd = sys.kd;
  kd.memory().store(fill_sentinel(victim, kSentinelPattern));
  const InferenceResult r = kd.submit_inference(sys.session(attacker_), {*sys.buffer, *ref, model_output, 0});
  if (const auto* f = std::get_if<Fault>(&r)) return {ProbeStatus::Faulted, {}, f->reason};
  if (check_sentinel(kd.memory().capture(victim, kSentinelPattern)) == SentinelState::Intact) return {};
  return {ProbeStatus::Confirmed, kd.memory().read_words(page_addr(victim), model_output.size()), {}};
}

ProbeOutcome CdaProbe::probe_read(PageIndex victim, Route route) const {
  check_victim(victim);
  System sys = *base_;
  if (!sys.buffer) return {};
  const auto ref = route_ref(sys, victim, route);
  if (!ref) return {};

  KernelDriver& kd = sys.kd;
  kd.memory().store(fill_sentinel(victim, kSentinelPattern));
  for (std::size_t i = 0; i < kLeakWords; ++i)
    kd.memory().write_word({page_addr(victim).value + 8 * i}, 0x5EC0'0000'0000'0000ull | (victim << 4) | i);
  const std::vector<std::uint64_t> secret = kd.memory().read_words(page_addr(victim), kLeakWords);

  const InferenceResult r = kd.submit_inference(sys.session(attacker_), {*ref, *sys.buffer, {}, kLeakWords});
  if (const auto* f = std::get_if<Fault>(&r)) return {ProbeStatus::Faulted, {}, f->reason};
  const TranslateResult out = kd.model().translate(kd.memory(), *sys.buffer);
  std::vector<std::uint64_t> leaked = kd.memory().read_words(std::get<PhysAddr>(out), kLeakWords);
  if (leaked != secret) return {ProbeStatus::Blocked, std::move(leaked), {}};
  return {ProbeStatus::Confirmed, std::move(leaked), {}};
}

StaleVerdict CdaProbe::probe_stale() const {
  System sys = *base_;
  if (!sys.buffer) return StaleVerdict::Safe;
  KernelDriver& kd = sys.kd;
  Session& s = sys.session(attacker_);

  std::optional<PageIndex> page;
  std::optional<DeviceRef> ref;
  for (PageIndex p : sys.scratch) {
    if (p == sys.buffer_page) continue;
    if ((ref = try_map(kd, s, p))) {
      page = p;
      break;
    }
  }
  if (!page) {
    // Only the buffer is mappable; stale it on a second driver-granted page.
    for (PageIndex p : candidates_) {
      if ((ref = route_ref(sys, p, Route::Stale))) {
        page = p;
        break;
      }
    }
    if (!page) return StaleVerdict::Safe;
  } else {
    const PageIndex one[] = {*page};
    kd.unmap(s, one);
  }

  kd.memory().store(fill_sentinel(*page, kSentinelPattern));
  kd.submit_inference(s, {*sys.buffer, *ref, default_output(), 0});
  return check_sentinel(kd.memory().capture(*page, kSentinelPattern)) == SentinelState::Altered
             ? StaleVerdict::Vulnerable
             : StaleVerdict::Safe;
}

Escalation CdaProbe::two_step_escalation(PageIndex victim) const {
  check_victim(victim);
  Escalation out;
  out.forged = probe_write(victim, Route::Escalated);
  out.forged_sentinel = out.forged.status == ProbeStatus::Confirmed ? SentinelState::Altered : SentinelState::Intact;

  // Same second step with the forging skipped.
  System sys = *base_;
  if (!sys.buffer) return out;
  KernelDriver& kd = sys.kd;
  kd.memory().store(fill_sentinel(victim, kSentinelPattern));
  const InferenceResult r =
      kd.submit_inference(sys.session(attacker_), {*sys.buffer, {Smid{page_addr(victim).value}, 0}, default_output(), 0});
  if (const auto* f = std::get_if<Fault>(&r)) out.unforged = {ProbeStatus::Faulted, {}, f->reason};
  out.unforged_sentinel = check_sentinel(kd.memory().capture(victim, kSentinelPattern));
  if (out.unforged_sentinel == SentinelState::Altered)
    out.unforged = {ProbeStatus::Confirmed, kd.memory().read_words(page_addr(victim), 4), {}};
  return out;
}

AddrControl CdaProbe::addr_axis_of(const std::set<PageIndex>& reachable) const {
  AddrControl out;
  bool all_smem = true;
  bool any_smem = false;
  for (PageIndex p : candidates_) {
    const RegionTag tag = map_.page_kind(p).tag;
    const bool hit = reachable.contains(p);
    if (hit) out.kinds.insert(tag);
    if (tag == RegionTag::AIMem) continue;
    any_smem = true;
    if (!hit) all_smem = false;
  }
  if (out.kinds.empty()) return {};
  if (any_smem && all_smem) return {AddrAxis::Full, {}};
  out.axis = AddrAxis::Limited;
  return out;
}

ProbeReport CdaProbe::classify() const {
  ProbeReport rep;
  CdaClass& c = rep.cls;

  auto evidence = [&](std::string probe, PageIndex victim, const ProbeOutcome& o) {
    std::string result = o.status == ProbeStatus::Confirmed ? "altered"
                         : o.status == ProbeStatus::Faulted ? "fault:" + std::string(fault_name(*o.fault))
                                                            : "intact";
    rep.evidence.push_back({std::move(probe), victim, std::move(result), o.words});
  };

  std::set<PageIndex> reached;
  std::map<RegionTag, std::pair<PageIndex, ProbeOutcome>> first_of_kind;
  std::optional<std::pair<PageIndex, Route>> rep_victim;
  for (PageIndex v : candidates_) {
    for (Route route : {Route::Direct, Route::Escalated}) {
      if (route == Route::Escalated && preset_.model != ModelKind::FlatMapMtlbStlb) continue;
      ProbeOutcome o = probe_write(v, route);
      if (o.status != ProbeStatus::Confirmed) continue;
      reached.insert(v);
      const RegionTag tag = map_.page_kind(v).tag;
      if (!first_of_kind.contains(tag))
        first_of_kind.emplace(tag, std::make_pair(v, std::move(o)));
      if (!rep_victim) rep_victim = {v, route};
      break;
    }
  }
  for (const auto& [tag, vo] : first_of_kind)
    evidence("write/" + std::string(tag_name(tag)), vo.first, vo.second);

  c.addr = addr_axis_of(reached);
  if (!rep_victim && probe_stale() == StaleVerdict::Vulnerable) {
    rep.evidence.push_back({"stale", 0, "vulnerable", {}});
    for (PageIndex v : candidates_) {
      ProbeOutcome o = probe_write(v, Route::Stale);
      if (o.status != ProbeStatus::Confirmed) continue;
      evidence("write/stale", v, o);
      rep_victim = {v, Route::Stale};
      c.stale_only = true;
      break;
    }
  }
  if (!rep_victim) return rep;

  const auto [victim, route] = *rep_victim;
  c.write = true;
  const ProbeOutcome rd = probe_read(victim, route);
  evidence("read/" + std::string(route_name(route)), victim, rd);
  c.read = rd.status == ProbeStatus::Confirmed;

  // Two runs with different outputs: the victim ends up holding exactly what
  // the attacker asked for each time.
  const std::vector<std::uint64_t> a = default_output();
  const std::vector<std::uint64_t> b = {0x4141414141414141ull, 0x4242424242424242ull, 0x4343434343434343ull,
                                        0x4444444444444444ull};
  const ProbeOutcome wa = probe_write(victim, route, a);
  const ProbeOutcome wb = probe_write(victim, route, b);
  evidence("value/" + std::string(route_name(route)), victim, wb);
  if (wa.words == a && wb.words == b)
    c.value = ValueControl::Full;
  else if (wa.words != wb.words)
    c.value = ValueControl::Limited;
  else
    c.value = ValueControl::NoControl;
  return rep;
}

std::set<PageIndex> CdaProbe::oracle_reachable() const {
  System sys = *base_;
  KernelDriver& kd = sys.kd;
  Session& s = sys.session(attacker_);
  kd.model().set_active_pid(attacker_);

  std::set<PageIndex> reach;
  auto take = [&](const TranslateResult& r) {
    if (const auto* a = std::get_if<PhysAddr>(&r)) reach.insert(a->page(12));
  };

  // Whatever the driver agrees to map.
  const std::vector<PageIndex> all = map_.pages();
  for (PageIndex p : all) {
    if (!kd.policy().validate_on_map || s.owned_pages.contains(p)) {
      try {
        const PageIndex one[] = {p};
        take(kd.model().translate(kd.memory(), kd.map_request(s, one)));
      } catch (const KdError&) {
      }
    }
  }

  const TranslationModel& m = kd.model();
  const PhysMemory& mem = kd.memory();
  switch (preset_.model) {
    case ModelKind::IdentitySmid:
      for (PageIndex p : all) take(m.translate(mem, Smid{p << 12}));
      break;
    case ModelKind::FlatMapMtlbStlb: {
      for (PageIndex p : all) take(m.translate(mem, Smid{p << 12}));
      // Writable MTLB plus a writable page to hold a forged STLB slot opens
      // every granule the MTLB indexes.
      const auto& fs = std::get<detail::FlatMapState>(m.state());
      const std::set<PageIndex> tables = m.table_pages();
      const PageIndex mtlb_page = fs.mtlb_base.page(12);
      const bool scratch = std::any_of(reach.begin(), reach.end(), [&](PageIndex p) {
        return !tables.contains(p) && p != sys.buffer_page && map_.page_kind(p).tag == RegionTag::DMem;
      });
      if (reach.contains(mtlb_page) && scratch)
        for (PageIndex p : all)
          if ((p << 12) >> fs.granule_shift < fs.mtlb_capacity) reach.insert(p);
      break;
    }
    case ModelKind::PagetableBaseAsSmid: {
      const auto& ps = std::get<detail::PagetableBaseState>(m.state());
      for (std::uint64_t i = 0; i < ps.l1_capacity; ++i)
        take(m.translate(mem, Smid{ps.l1_base.value}, i << ps.granule_shift));
      // A one-entry fake table in any attacker page, aimed at every page.
      PhysMemory forged = mem;
      const std::uint64_t span = std::min<std::uint64_t>(512, ps.l1_capacity);
      for (PageIndex a : s.owned_pages) {
        for (PageIndex t : all) {
          const PhysAddr slot{(a << 12) + (t % span) * 8};
          const std::uint64_t saved = forged.read_word(slot);
          forged.write_word(slot, make_entry(t));
          take(m.translate(forged, Smid{a << 12}, (t % span) << ps.granule_shift));
          forged.write_word(slot, saved);
        }
      }
      break;
    }
    case ModelKind::TwoLevelSimpleExtended: {
      const auto& ts = std::get<detail::TwoLevelState>(m.state());
      const std::uint64_t ext = std::uint64_t{1} << ts.extended_bit;
      for (std::uint64_t i = 0; i < ts.simple.size(); ++i) take(m.translate(mem, Smid{i << 12}));
      for (std::uint64_t hi = 0; hi < ts.extended_capacity; ++hi)
        for (std::uint64_t lo = 0; lo < 512; ++lo) take(m.translate(mem, Smid{ext | (hi << 21) | (lo << 12)}));
      break;
    }
    case ModelKind::PerUsePagetables: {
      const auto& us = std::get<detail::PerUseState>(m.state());
      for (std::uint64_t i = 0; i < us.capacity; ++i) take(m.translate(mem, Smid{i << 12}));
      break;
    }
    case ModelKind::MessagePassing:
      break;
  }

  std::set<PageIndex> out;
  for (PageIndex p : reach)
    if (map_.page_kind(p).tag != RegionTag::Unmapped) out.insert(p);
  return out;
}

}  // namespace aiasim
