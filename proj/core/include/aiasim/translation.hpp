#pragma once

#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string_view>
#include <variant>
#include <vector>

#include "aiasim/memory_model.hpp"
#include "aiasim/types.hpp"

namespace aiasim {

enum class ModelKind {
  TwoLevelSimpleExtended,
  FlatMapMtlbStlb,
  PagetableBaseAsSmid,
  IdentitySmid,
  PerUsePagetables,
  MessagePassing,
};

std::string_view model_kind_name(ModelKind kind);
std::optional<ModelKind> parse_model_kind(std::string_view name);

enum class FaultReason { NoMapping, OutOfRange, NotZeroCopy };

std::string_view fault_name(FaultReason reason);

struct Fault {
  FaultReason reason;
  friend bool operator==(Fault, Fault) = default;
};

using TranslateResult = std::variant<PhysAddr, Fault>;

enum class Propagation { Eager, TeardownOnly };

/// Table layout and capacity knobs. Defaults are desk-scale.
struct TranslationParams {
  std::optional<unsigned> granularity_shift;  // MTLB granule (24) or L1 granule (16)
  unsigned extended_bit = 63;
  std::size_t simple_capacity = 512;
  std::size_t extended_capacity = 512;
  std::size_t mtlb_capacity = 256;
  std::size_t l1_capacity = 1024;
  std::size_t per_use_capacity = 4096;
  std::optional<std::uint64_t> deterministic_l1_base;
  std::vector<RegionTag> identity_window{RegionTag::DMem, RegionTag::AIRMem};
};

/// Thrown by table mutations the model cannot honor.
class TranslationError : public std::runtime_error {
 public:
  TranslationError(FaultReason reason, const std::string& what)
      : std::runtime_error(what), reason_(reason) {}
  FaultReason reason() const { return reason_; }

 private:
  FaultReason reason_;
};

// In-memory table entries: bit 0 valid, bit 1 flat (MTLB only), bits 63:12
// hold a 4 KiB page index.
inline constexpr std::uint64_t kEntryValid = 1;
inline constexpr std::uint64_t kEntryFlat = 2;
constexpr std::uint64_t make_entry(PageIndex page, std::uint64_t flags = kEntryValid) {
  return (page << 12) | flags;
}
constexpr PageIndex entry_page(std::uint64_t entry) { return entry >> 12; }

namespace detail {

using Slot = std::optional<PageIndex>;

struct TwoLevelState {
  unsigned extended_bit = 63;
  std::vector<Slot> simple;
  std::vector<std::vector<Slot>> extended;  // lazily sized level-2 tables
  std::size_t extended_capacity = 0;
};

struct FlatMapState {
  PhysAddr mtlb_base;
  unsigned granule_shift = 24;
  std::size_t mtlb_capacity = 256;
  std::set<PageIndex> tables_location;
  std::vector<PageIndex> stlb_pool;  // free DMem pages, ascending
};

struct PagetableBaseState {
  PhysAddr l1_base;
  unsigned granule_shift = 16;
  std::size_t l1_capacity = 1024;
  std::vector<bool> used;  // driver-side allocation bitmap
};

struct IdentityState {
  std::vector<Region> window;
};

struct PerUseState {
  std::map<Pid, std::map<std::uint64_t, PageIndex>> tables;
  std::optional<Pid> active_pid;
  std::size_t capacity = 4096;
};

struct MessagePassingState {};

}  // namespace detail

/// One accelerator's SMID-to-physical semantics plus its table state.
/// Tables that live in simulated memory (flat-map MTLB/STLB, base-as-SMID
/// L1) are read and written through the PhysMemory passed to each call.
class TranslationModel {
 public:
  static TranslationModel init(ModelKind kind, const MemoryMap& map, PhysMemory& mem,
                               const TranslationParams& params = {});

  ModelKind kind() const;

  /// The SMID the kernel driver hands out for a mapping installed at `slot`.
  DeviceRef smid_for(Smid slot, PageIndex page) const;

  void install_mapping(PhysMemory& mem, Pid pid, Smid slot, PageIndex page);
  void remove_mapping(PhysMemory& mem, Pid pid, Smid slot, Propagation propagation);
  void teardown(PhysMemory& mem, Pid pid, bool scrub);

  TranslateResult translate(const PhysMemory& mem, Smid smid, std::uint64_t dva_offset = 0) const;
  TranslateResult translate(const PhysMemory& mem, DeviceRef ref) const {
    return translate(mem, ref.smid, ref.offset);
  }

  /// An SMID the attacker can present that reaches `target` without the
  /// kernel driver's cooperation. May write attacker-owned memory (fake
  /// tables). Absent when no such SMID exists.
  std::optional<DeviceRef> construct_smid_for_phys(PhysMemory& mem,
                                                   std::span<const PageIndex> attacker_pages,
                                                   PageIndex target) const;

  void set_active_pid(std::optional<Pid> pid);

  /// Pages holding live accelerator page tables.
  std::set<PageIndex> table_pages() const;

  /// Flat-map only: number of valid MTLB entries.
  std::size_t mtlb_populated(const PhysMemory& mem) const;
  /// Flat-map only: physical address of the MTLB entry covering `addr`.
  std::optional<PhysAddr> mtlb_entry_addr(PhysAddr addr) const;
  /// Flat-map only: log2 of the MTLB granule.
  unsigned granule_shift() const;

  /// Next free slot for a kernel-driver allocated mapping.
  Smid next_slot(Pid pid) const;

  using State = std::variant<detail::TwoLevelState, detail::FlatMapState, detail::PagetableBaseState,
                             detail::IdentityState, detail::PerUseState, detail::MessagePassingState>;
  const State& state() const { return state_; }

 private:
  explicit TranslationModel(State s) : state_(std::move(s)) {}

  State state_;
  std::map<Pid, std::vector<Smid>> installed_;
};

}  // namespace aiasim
