#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "aiasim/types.hpp"

namespace aiasim {

enum class RegionTag { AIMem, AIRMem, DMem, HMem, KMem, UMem, Unmapped };

struct RegionKind {
  RegionTag tag = RegionTag::Unmapped;
  Pid pid = 0;  // meaningful only for UMem

  static constexpr RegionKind umem(Pid p) { return {RegionTag::UMem, p}; }

  friend constexpr bool operator==(RegionKind, RegionKind) = default;
  friend constexpr auto operator<=>(RegionKind, RegionKind) = default;
};

std::string_view tag_name(RegionTag tag);
std::optional<RegionTag> parse_tag(std::string_view name);
std::string kind_name(RegionKind kind);

struct Region {
  PhysAddr start;
  PhysAddr end;  // exclusive
  RegionKind kind;
};

/// Tagged physical address space. Regions are disjoint, sorted and
/// page-aligned; anything outside them classifies as Unmapped.
class MemoryMap {
 public:
  MemoryMap() = default;
  explicit MemoryMap(std::vector<Region> regions, unsigned page_shift = 12);

  RegionKind classify(PhysAddr addr) const;
  RegionKind page_kind(PageIndex page) const { return classify(PhysAddr::of_page(page, page_shift_)); }

  /// Pages the given process may not touch from user space.
  std::set<PageIndex> restricted_for(Pid pid) const;

  std::vector<PageIndex> pages() const;
  std::vector<PageIndex> pages_of(RegionTag tag) const;
  std::vector<PageIndex> pages_of(RegionKind kind) const;
  std::size_t page_count() const;

  bool has(RegionTag tag) const;
  const Region* first_region(RegionTag tag) const;

  const std::vector<Region>& regions() const { return regions_; }
  unsigned page_shift() const { return page_shift_; }
  std::uint64_t page_bytes() const { return std::uint64_t{1} << page_shift_; }

 private:
  std::vector<Region> regions_;
  unsigned page_shift_ = 12;
};

inline constexpr std::size_t kWordsPer4K = 512;

/// One probed page filled with a repeating 64-bit pattern.
struct SentinelPage {
  PageIndex page = 0;
  std::uint64_t pattern = 0;
  std::vector<std::uint64_t> contents;
};

enum class SentinelState { Intact, Altered };

SentinelPage fill_sentinel(PageIndex page, std::uint64_t pattern, unsigned page_shift = 12);
SentinelState check_sentinel(const SentinelPage& sentinel);

/// Sparse simulated physical memory in 4 KiB frames. Untouched frames read
/// as zero. Words are little-endian 64-bit values at 8-byte alignment.
class PhysMemory {
 public:
  using Frame = std::array<std::uint64_t, kWordsPer4K>;
  static constexpr unsigned kFrameShift = 12;

  std::uint64_t read_word(PhysAddr addr) const;
  void write_word(PhysAddr addr, std::uint64_t value);

  void store(const SentinelPage& sentinel);
  /// Reads a 4 KiB page back into a sentinel carrying the expected pattern.
  SentinelPage capture(PageIndex page, std::uint64_t pattern) const;
  std::vector<std::uint64_t> read_words(PhysAddr addr, std::size_t count) const;

  void clear_page(PageIndex page) { frames_.erase(page); }
  bool touched(PageIndex page) const { return frames_.contains(page); }
  std::size_t frame_count() const { return frames_.size(); }

  friend bool operator==(const PhysMemory&, const PhysMemory&) = default;

 private:
  std::map<PageIndex, Frame> frames_;
};

}  // namespace aiasim
