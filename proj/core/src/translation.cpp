#include "aiasim/translation.hpp"

#include <algorithm>

namespace aiasim {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

constexpr std::pair<ModelKind, std::string_view> kModelNames[] = {
    {ModelKind::TwoLevelSimpleExtended, "two_level"},
    {ModelKind::FlatMapMtlbStlb, "flat_map"},
    {ModelKind::PagetableBaseAsSmid, "pagetable_base"},
    {ModelKind::IdentitySmid, "identity"},
    {ModelKind::PerUsePagetables, "per_use"},
    {ModelKind::MessagePassing, "message_passing"},
};

constexpr std::uint64_t kPageMask = 0xfff;

[[noreturn]] void out_of_range(const std::string& what) {
  throw TranslationError(FaultReason::OutOfRange, what);
}

bool in_window(const std::vector<Region>& window, PhysAddr a) {
  return std::any_of(window.begin(), window.end(),
                     [a](const Region& r) { return r.start <= a && a < r.end; });
}

// ---- two-level simple/extended -------------------------------------------

struct TwoLevelSlot {
  bool extended;
  std::uint64_t hi;  // simple index, or level-1 index for extended
  std::uint64_t lo;  // level-2 index (extended only)
};

TwoLevelSlot decode(const detail::TwoLevelState& s, std::uint64_t da) {
  const std::uint64_t ext_mask = std::uint64_t{1} << s.extended_bit;
  const bool ext = da & ext_mask;
  const std::uint64_t bits = da & ~ext_mask;
  if (!ext) return {false, bits >> 12, 0};
  return {true, bits >> 21, (bits >> 12) & 511};
}

const detail::Slot* lookup(const detail::TwoLevelState& s, std::uint64_t da) {
  const TwoLevelSlot d = decode(s, da);
  if (!d.extended) {
    if (d.hi >= s.simple.size()) out_of_range("simple slot beyond capacity");
    return &s.simple[d.hi];
  }
  if (d.hi >= s.extended_capacity) out_of_range("extended root beyond capacity");
  const auto& table = s.extended[d.hi];
  return table.empty() ? nullptr : &table[d.lo];
}

detail::Slot* locate(detail::TwoLevelState& s, std::uint64_t da, bool allocate) {
  const TwoLevelSlot d = decode(s, da);
  if (!d.extended) {
    if (d.hi >= s.simple.size()) out_of_range("simple slot " + std::to_string(d.hi) + " beyond capacity");
    return &s.simple[d.hi];
  }
  if (d.hi >= s.extended_capacity)
    out_of_range("extended root " + std::to_string(d.hi) + " beyond capacity");
  auto& table = s.extended[d.hi];
  if (table.empty()) {
    if (!allocate) return nullptr;
    table.resize(512);
  }
  return &table[d.lo];
}

// ---- flat map MTLB/STLB ----------------------------------------------------

std::size_t stlb_entries(const detail::FlatMapState& s) { return std::size_t{1} << (s.granule_shift - 12); }

std::size_t stlb_pages(const detail::FlatMapState& s) {
  return std::max<std::size_t>(1, stlb_entries(s) * 8 / 4096);
}

PhysAddr mtlb_slot(const detail::FlatMapState& s, std::uint64_t granule) {
  return {s.mtlb_base.value + granule * 8};
}

PhysAddr stlb_slot(const detail::FlatMapState& s, PageIndex table, PhysAddr phys) {
  const std::uint64_t idx = (phys.value >> 12) & (stlb_entries(s) - 1);
  return {(table << 12) + idx * 8};
}

}  // namespace

std::string_view model_kind_name(ModelKind kind) {
  for (auto [k, n] : kModelNames)
    if (k == kind) return n;
  return "?";
}

std::optional<ModelKind> parse_model_kind(std::string_view name) {
  for (auto [k, n] : kModelNames)
    if (n == name) return k;
  return std::nullopt;
}

std::string_view fault_name(FaultReason reason) {
  switch (reason) {
    case FaultReason::NoMapping: return "NoMapping";
    case FaultReason::OutOfRange: return "OutOfRange";
    case FaultReason::NotZeroCopy: return "NotZeroCopy";
  }
  return "?";
}

TranslationModel TranslationModel::init(ModelKind kind, const MemoryMap& map, PhysMemory& mem,
                                        const TranslationParams& params) {
  const Region* dmem = map.first_region(RegionTag::DMem);
  switch (kind) {
    case ModelKind::TwoLevelSimpleExtended: {
      if (params.extended_bit < 22 || params.extended_bit > 63)
        throw ConfigError("extended_bit must lie in [22, 63]");
      detail::TwoLevelState s;
      s.extended_bit = params.extended_bit;
      s.simple.resize(params.simple_capacity);
      s.extended.resize(params.extended_capacity);
      s.extended_capacity = params.extended_capacity;
      return TranslationModel(std::move(s));
    }
    case ModelKind::FlatMapMtlbStlb: {
      if (!dmem) throw ConfigError("flat_map translation requires a DMem region");
      detail::FlatMapState s;
      s.granule_shift = params.granularity_shift.value_or(24);
      if (s.granule_shift < 12 || s.granule_shift > 40) throw ConfigError("MTLB granularity_shift out of range");
      s.mtlb_capacity = params.mtlb_capacity;
      const PageIndex lo = dmem->start.value >> 12;
      const PageIndex hi = dmem->end.value >> 12;
      const std::size_t mtlb_pages = (s.mtlb_capacity * 8 + 4095) / 4096;
      if (hi - lo < mtlb_pages) throw ConfigError("DMem too small to hold the MTLB");
      const PageIndex mtlb_page = hi - mtlb_pages;
      s.mtlb_base = PhysAddr::of_page(mtlb_page, 12);
      for (std::size_t i = 0; i < mtlb_pages; ++i) s.tables_location.insert(mtlb_page + i);
      for (PageIndex p = lo; p < mtlb_page; ++p) s.stlb_pool.push_back(p);
      for (const Region& r : map.regions()) {
        if (r.kind.tag != RegionTag::DMem && r.kind.tag != RegionTag::AIRMem) continue;
        for (std::uint64_t g = r.start.value >> s.granule_shift; g <= (r.end.value - 1) >> s.granule_shift; ++g) {
          if (g >= s.mtlb_capacity) throw ConfigError("DMem/AIRMem extends beyond MTLB capacity");
          mem.write_word(mtlb_slot(s, g), make_entry(g << (s.granule_shift - 12), kEntryValid | kEntryFlat));
        }
      }
      return TranslationModel(std::move(s));
    }
    case ModelKind::PagetableBaseAsSmid: {
      if (!dmem) throw ConfigError("pagetable_base translation requires a DMem region");
      detail::PagetableBaseState s;
      s.granule_shift = params.granularity_shift.value_or(16);
      s.l1_capacity = params.l1_capacity;
      s.l1_base = PhysAddr{params.deterministic_l1_base.value_or(dmem->start.value)};
      s.used.assign(s.l1_capacity, false);
      const PhysAddr last{s.l1_base.value + s.l1_capacity * 8 - 1};
      if (s.l1_base.value & 7) throw ConfigError("L1 base must be 8-byte aligned");
      if (map.classify(s.l1_base).tag != RegionTag::DMem || map.classify(last).tag != RegionTag::DMem)
        throw ConfigError("L1 table at " + to_hex(s.l1_base.value) + " must lie inside DMem");
      return TranslationModel(std::move(s));
    }
    case ModelKind::IdentitySmid: {
      detail::IdentityState s;
      for (const Region& r : map.regions())
        if (std::find(params.identity_window.begin(), params.identity_window.end(), r.kind.tag) !=
            params.identity_window.end())
          s.window.push_back(r);
      if (s.window.empty()) throw ConfigError("identity translation: no region of the addressable kinds in map");
      return TranslationModel(std::move(s));
    }
    case ModelKind::PerUsePagetables: {
      detail::PerUseState s;
      s.capacity = params.per_use_capacity;
      return TranslationModel(std::move(s));
    }
    case ModelKind::MessagePassing:
      return TranslationModel(detail::MessagePassingState{});
  }
  throw ConfigError("unknown translation model");
}

ModelKind TranslationModel::kind() const { return static_cast<ModelKind>(state_.index()); }

DeviceRef TranslationModel::smid_for(Smid slot, PageIndex page) const {
  return std::visit(
      overloaded{
          [&](const detail::TwoLevelState&) { return DeviceRef{slot, 0}; },
          [&](const detail::PerUseState&) { return DeviceRef{slot, 0}; },
          [&](const detail::PagetableBaseState& s) { return DeviceRef{Smid{s.l1_base.value}, slot.value}; },
          [&](const detail::FlatMapState&) { return DeviceRef{Smid{page << 12}, 0}; },
          [&](const detail::IdentityState&) { return DeviceRef{Smid{page << 12}, 0}; },
          [&](const detail::MessagePassingState&) -> DeviceRef {
            throw TranslationError(FaultReason::NotZeroCopy, "accelerator does not share memory by SMID");
          },
      },
      state_);
}

Smid TranslationModel::next_slot(Pid pid) const {
  return std::visit(
      overloaded{
          [&](const detail::TwoLevelState& s) -> Smid {
            for (std::size_t i = 0; i < s.simple.size(); ++i)
              if (!s.simple[i]) return Smid{i << 12};
            out_of_range("simple table full");
          },
          [&](const detail::PerUseState& s) -> Smid {
            auto it = s.tables.find(pid);
            for (std::uint64_t i = 1; i < s.capacity; ++i)
              if (it == s.tables.end() || !it->second.contains(i)) return Smid{i << 12};
            out_of_range("per-process table full");
          },
          [&](const detail::PagetableBaseState& s) -> Smid {
            for (std::size_t i = 0; i < s.used.size(); ++i)
              if (!s.used[i]) return Smid{i << s.granule_shift};
            out_of_range("L1 table full");
          },
          [&](const detail::MessagePassingState&) -> Smid {
            throw TranslationError(FaultReason::NotZeroCopy, "accelerator does not share memory by SMID");
          },
          [&](const auto&) { return Smid{0}; },
      },
      state_);
}

void TranslationModel::install_mapping(PhysMemory& mem, Pid pid, Smid slot, PageIndex page) {
  std::visit(
      overloaded{
          [&](detail::TwoLevelState& s) { *locate(s, slot.value, true) = page; },
          [&](detail::FlatMapState& s) {
            const PhysAddr phys = PhysAddr::of_page(page, 12);
            const std::uint64_t g = phys.value >> s.granule_shift;
            if (g >= s.mtlb_capacity) out_of_range("page beyond MTLB capacity");
            std::uint64_t e = mem.read_word(mtlb_slot(s, g));
            if (e & kEntryFlat) return;
            if (!(e & kEntryValid)) {
              const std::size_t n = stlb_pages(s);
              if (s.stlb_pool.size() < n) out_of_range("no DMem left for an STLB table");
              const PageIndex table = s.stlb_pool[s.stlb_pool.size() - n];
              s.stlb_pool.resize(s.stlb_pool.size() - n);
              for (std::size_t i = 0; i < n; ++i) s.tables_location.insert(table + i);
              e = make_entry(table);
              mem.write_word(mtlb_slot(s, g), e);
            }
            mem.write_word(stlb_slot(s, entry_page(e), phys), make_entry(page));
          },
          [&](detail::PagetableBaseState& s) {
            const std::uint64_t idx = slot.value >> s.granule_shift;
            if (idx >= s.l1_capacity) out_of_range("L1 index " + std::to_string(idx) + " beyond capacity");
            mem.write_word({s.l1_base.value + idx * 8}, make_entry(page));
            s.used[idx] = true;
          },
          [&](detail::IdentityState& s) {
            if (!in_window(s.window, PhysAddr::of_page(page, 12)))
              out_of_range("page " + to_hex(page) + " is not addressable");
          },
          [&](detail::PerUseState& s) {
            const std::uint64_t idx = slot.value >> 12;
            if (idx >= s.capacity) out_of_range("device page " + std::to_string(idx) + " beyond capacity");
            s.tables[pid][idx] = page;
          },
          [&](detail::MessagePassingState&) {
            throw TranslationError(FaultReason::NotZeroCopy, "accelerator does not share memory by SMID");
          },
      },
      state_);
  installed_[pid].push_back(kind() == ModelKind::FlatMapMtlbStlb || kind() == ModelKind::IdentitySmid
                                ? Smid{page << 12}
                                : slot);
}

namespace {

void clear_entry(TranslationModel::State& state, PhysMemory& mem, Pid pid, Smid slot) {
  std::visit(
      overloaded{
          [&](detail::TwoLevelState& s) {
            try {
              if (auto* e = locate(s, slot.value, false)) e->reset();
            } catch (const TranslationError&) {
            }
          },
          [&](detail::FlatMapState& s) {
            const PhysAddr phys{slot.value & ~kPageMask};
            const std::uint64_t g = phys.value >> s.granule_shift;
            if (g >= s.mtlb_capacity) return;
            const std::uint64_t e = mem.read_word(mtlb_slot(s, g));
            if (!(e & kEntryValid) || (e & kEntryFlat)) return;
            mem.write_word(stlb_slot(s, entry_page(e), phys), 0);
          },
          [&](detail::PagetableBaseState& s) {
            const std::uint64_t idx = slot.value >> s.granule_shift;
            if (idx >= s.l1_capacity) return;
            mem.write_word({s.l1_base.value + idx * 8}, 0);
            s.used[idx] = false;
          },
          [&](detail::PerUseState& s) {
            if (auto it = s.tables.find(pid); it != s.tables.end()) it->second.erase(slot.value >> 12);
          },
          [&](auto&) {},
      },
      state);
}

}  // namespace

void TranslationModel::remove_mapping(PhysMemory& mem, Pid pid, Smid slot, Propagation propagation) {
  if (propagation == Propagation::Eager) {
    clear_entry(state_, mem, pid, slot);
    if (auto it = installed_.find(pid); it != installed_.end()) std::erase(it->second, slot);
  }
}

void TranslationModel::teardown(PhysMemory& mem, Pid pid, bool scrub) {
  auto it = installed_.find(pid);
  const bool memory_resident = kind() == ModelKind::FlatMapMtlbStlb || kind() == ModelKind::PagetableBaseAsSmid;
  if (it != installed_.end()) {
    for (Smid slot : it->second) {
      if (!memory_resident || scrub) {
        clear_entry(state_, mem, pid, slot);
      } else if (auto* s = std::get_if<detail::PagetableBaseState>(&state_)) {
        // The driver forgets the slot; the entry bytes stay behind.
        const std::uint64_t idx = slot.value >> s->granule_shift;
        if (idx < s->l1_capacity) s->used[idx] = false;
      }
    }
    installed_.erase(it);
  }
  if (auto* s = std::get_if<detail::PerUseState>(&state_)) {
    s->tables.erase(pid);
    if (s->active_pid == pid) s->active_pid.reset();
  }
}

TranslateResult TranslationModel::translate(const PhysMemory& mem, Smid smid, std::uint64_t off) const {
  const std::uint64_t da = smid.value + off;
  try {
    return std::visit(
        overloaded{
            [&](const detail::TwoLevelState& s) -> TranslateResult {
              const detail::Slot* e = lookup(s, da);
              if (!e || !*e) return Fault{FaultReason::NoMapping};
              return PhysAddr{(**e << 12) | (da & kPageMask)};
            },
            [&](const detail::FlatMapState& s) -> TranslateResult {
              const PhysAddr phys{da};
              const std::uint64_t g = phys.value >> s.granule_shift;
              if (g >= s.mtlb_capacity) return Fault{FaultReason::OutOfRange};
              const std::uint64_t e = mem.read_word(mtlb_slot(s, g));
              if (!(e & kEntryValid)) return Fault{FaultReason::NoMapping};
              if (e & kEntryFlat) return phys;
              const std::uint64_t leaf = mem.read_word(stlb_slot(s, entry_page(e), phys));
              if (!(leaf & kEntryValid)) return Fault{FaultReason::NoMapping};
              return PhysAddr{(entry_page(leaf) << 12) | (da & kPageMask)};
            },
            [&](const detail::PagetableBaseState& s) -> TranslateResult {
              // The walk starts wherever the SMID points, table or not.
              const std::uint64_t idx = off >> s.granule_shift;
              if (idx >= s.l1_capacity || (smid.value & 7)) return Fault{FaultReason::OutOfRange};
              const std::uint64_t e = mem.read_word({smid.value + idx * 8});
              if (!(e & kEntryValid)) return Fault{FaultReason::NoMapping};
              const std::uint64_t granule_mask = (std::uint64_t{1} << s.granule_shift) - 1;
              return PhysAddr{(entry_page(e) << 12) + (off & granule_mask)};
            },
            [&](const detail::IdentityState& s) -> TranslateResult {
              if (!in_window(s.window, PhysAddr{da})) return Fault{FaultReason::OutOfRange};
              return PhysAddr{da};
            },
            [&](const detail::PerUseState& s) -> TranslateResult {
              if (!s.active_pid) return Fault{FaultReason::NoMapping};
              const std::uint64_t idx = da >> 12;
              if (idx >= s.capacity) return Fault{FaultReason::OutOfRange};
              auto t = s.tables.find(*s.active_pid);
              if (t == s.tables.end()) return Fault{FaultReason::NoMapping};
              auto e = t->second.find(idx);
              if (e == t->second.end()) return Fault{FaultReason::NoMapping};
              return PhysAddr{(e->second << 12) | (da & kPageMask)};
            },
            [&](const detail::MessagePassingState&) -> TranslateResult { return Fault{FaultReason::NotZeroCopy}; },
        },
        state_);
  } catch (const TranslationError& e) {
    return Fault{e.reason()};
  }
}

std::optional<DeviceRef> TranslationModel::construct_smid_for_phys(PhysMemory& mem,
                                                                   std::span<const PageIndex> attacker_pages,
                                                                   PageIndex target) const {
  const PhysAddr addr = PhysAddr::of_page(target, 12);
  return std::visit(
      overloaded{
          [&](const detail::IdentityState& s) -> std::optional<DeviceRef> {
            if (!in_window(s.window, addr)) return std::nullopt;
            return DeviceRef{Smid{addr.value}, 0};
          },
          [&](const detail::FlatMapState& s) -> std::optional<DeviceRef> {
            const std::uint64_t g = addr.value >> s.granule_shift;
            if (g >= s.mtlb_capacity) return std::nullopt;
            if (!(mem.read_word(mtlb_slot(s, g)) & kEntryFlat)) return std::nullopt;
            return DeviceRef{Smid{addr.value}, 0};
          },
          [&](const detail::PagetableBaseState&) -> std::optional<DeviceRef> {
            if (attacker_pages.empty()) return std::nullopt;
            // Fake single-entry table in the attacker's own page.
            const PhysAddr base = PhysAddr::of_page(attacker_pages.front(), 12);
            mem.write_word(base, make_entry(target));
            return DeviceRef{Smid{base.value}, 0};
          },
          [&](const auto&) -> std::optional<DeviceRef> { return std::nullopt; },
      },
      state_);
}

void TranslationModel::set_active_pid(std::optional<Pid> pid) {
  if (auto* s = std::get_if<detail::PerUseState>(&state_)) s->active_pid = pid;
}

std::set<PageIndex> TranslationModel::table_pages() const {
  if (auto* s = std::get_if<detail::FlatMapState>(&state_)) return s->tables_location;
  if (auto* s = std::get_if<detail::PagetableBaseState>(&state_)) {
    std::set<PageIndex> out;
    const std::uint64_t end = s->l1_base.value + s->l1_capacity * 8;
    for (PageIndex p = s->l1_base.value >> 12; p <= (end - 1) >> 12; ++p) out.insert(p);
    return out;
  }
  return {};
}

std::size_t TranslationModel::mtlb_populated(const PhysMemory& mem) const {
  auto* s = std::get_if<detail::FlatMapState>(&state_);
  if (!s) return 0;
  std::size_t n = 0;
  for (std::uint64_t g = 0; g < s->mtlb_capacity; ++g)
    if (mem.read_word(mtlb_slot(*s, g)) & kEntryValid) ++n;
  return n;
}

std::optional<PhysAddr> TranslationModel::mtlb_entry_addr(PhysAddr addr) const {
  auto* s = std::get_if<detail::FlatMapState>(&state_);
  if (!s) return std::nullopt;
  const std::uint64_t g = addr.value >> s->granule_shift;
  if (g >= s->mtlb_capacity) return std::nullopt;
  return mtlb_slot(*s, g);
}

unsigned TranslationModel::granule_shift() const {
  if (auto* s = std::get_if<detail::FlatMapState>(&state_)) return s->granule_shift;
  if (auto* s = std::get_if<detail::PagetableBaseState>(&state_)) return s->granule_shift;
  return 12;
}

}  // namespace aiasim
