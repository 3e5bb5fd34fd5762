#include "aiasim/memory_model.hpp"

#include <algorithm>
#include <cstdio>

namespace aiasim {

std::string to_hex(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "0x%llx", static_cast<unsigned long long>(v));
  return buf;
}

namespace {

constexpr std::pair<RegionTag, std::string_view> kTagNames[] = {
    {RegionTag::AIMem, "AIMem"}, {RegionTag::AIRMem, "AIRMem"}, {RegionTag::DMem, "DMem"},
    {RegionTag::HMem, "HMem"},   {RegionTag::KMem, "KMem"},     {RegionTag::UMem, "UMem"},
    {RegionTag::Unmapped, "Unmapped"},
};

}  // namespace

std::string_view tag_name(RegionTag tag) {
  for (auto [t, n] : kTagNames)
    if (t == tag) return n;
  return "?";
}

std::optional<RegionTag> parse_tag(std::string_view name) {
  for (auto [t, n] : kTagNames)
    if (n == name) return t;
  return std::nullopt;
}

std::string kind_name(RegionKind kind) {
  std::string s{tag_name(kind.tag)};
  if (kind.tag == RegionTag::UMem) s += "(" + std::to_string(kind.pid) + ")";
  return s;
}

MemoryMap::MemoryMap(std::vector<Region> regions, unsigned page_shift)
    : regions_(std::move(regions)), page_shift_(page_shift) {
  if (page_shift_ < 12 || page_shift_ > 24)
    throw ConfigError("page_shift must be in [12, 24], got " + std::to_string(page_shift_));
  std::sort(regions_.begin(), regions_.end(),
            [](const Region& a, const Region& b) { return a.start < b.start; });
  const std::uint64_t mask = page_bytes() - 1;
  for (std::size_t i = 0; i < regions_.size(); ++i) {
    const Region& r = regions_[i];
    if (r.kind.tag == RegionTag::Unmapped)
      throw ConfigError("region " + to_hex(r.start.value) + " may not be tagged Unmapped");
    if (!(r.start < r.end))
      throw ConfigError("region " + to_hex(r.start.value) + " is empty or inverted");
    if ((r.start.value & mask) || (r.end.value & mask))
      throw ConfigError("region " + to_hex(r.start.value) + ".." + to_hex(r.end.value) +
                        " is not page-aligned");
    if (i > 0 && regions_[i - 1].end > r.start)
      throw ConfigError("regions overlap at " + to_hex(r.start.value));
  }
}

RegionKind MemoryMap::classify(PhysAddr addr) const {
  auto it = std::upper_bound(regions_.begin(), regions_.end(), addr,
                             [](PhysAddr a, const Region& r) { return a < r.start; });
  if (it == regions_.begin()) return {};
  --it;
  return addr < it->end ? it->kind : RegionKind{};
}

std::set<PageIndex> MemoryMap::restricted_for(Pid pid) const {
  std::set<PageIndex> out;
  for (const Region& r : regions_) {
    switch (r.kind.tag) {
      case RegionTag::KMem:
      case RegionTag::HMem:
      case RegionTag::AIRMem:
      case RegionTag::DMem:
        break;
      case RegionTag::UMem:
        if (r.kind.pid == pid) continue;
        break;
      default:
        continue;
    }
    for (PageIndex p = r.start.page(page_shift_); p < r.end.page(page_shift_); ++p) out.insert(p);
  }
  return out;
}

std::vector<PageIndex> MemoryMap::pages() const {
  std::vector<PageIndex> out;
  for (const Region& r : regions_)
    for (PageIndex p = r.start.page(page_shift_); p < r.end.page(page_shift_); ++p) out.push_back(p);
  return out;
}

std::vector<PageIndex> MemoryMap::pages_of(RegionTag tag) const {
  std::vector<PageIndex> out;
  for (const Region& r : regions_)
    if (r.kind.tag == tag)
      for (PageIndex p = r.start.page(page_shift_); p < r.end.page(page_shift_); ++p) out.push_back(p);
  return out;
}

std::vector<PageIndex> MemoryMap::pages_of(RegionKind kind) const {
  std::vector<PageIndex> out;
  for (const Region& r : regions_)
    if (r.kind == kind)
      for (PageIndex p = r.start.page(page_shift_); p < r.end.page(page_shift_); ++p) out.push_back(p);
  return out;
}

std::size_t MemoryMap::page_count() const {
  std::size_t n = 0;
  for (const Region& r : regions_) n += r.end.page(page_shift_) - r.start.page(page_shift_);
  return n;
}

bool MemoryMap::has(RegionTag tag) const { return first_region(tag) != nullptr; }

const Region* MemoryMap::first_region(RegionTag tag) const {
  for (const Region& r : regions_)
    if (r.kind.tag == tag) return &r;
  return nullptr;
}

SentinelPage fill_sentinel(PageIndex page, std::uint64_t pattern, unsigned page_shift) {
  SentinelPage s{page, pattern, {}};
  s.contents.assign((std::size_t{1} << page_shift) / 8, pattern);
  return s;
}

SentinelState check_sentinel(const SentinelPage& sentinel) {
  for (std::uint64_t w : sentinel.contents)
    if (w != sentinel.pattern) return SentinelState::Altered;
  return SentinelState::Intact;
}

std::uint64_t PhysMemory::read_word(PhysAddr addr) const {
  auto it = frames_.find(addr.value >> kFrameShift);
  if (it == frames_.end()) return 0;
  return it->second[(addr.value & 0xfff) >> 3];
}

void PhysMemory::write_word(PhysAddr addr, std::uint64_t value) {
  auto [it, inserted] = frames_.try_emplace(addr.value >> kFrameShift);
  if (inserted) it->second.fill(0);
  it->second[(addr.value & 0xfff) >> 3] = value;
}

void PhysMemory::store(const SentinelPage& sentinel) {
  // Sentinels are 4 KiB pages; larger logical pages store their first frame.
  auto& frame = frames_[sentinel.page];
  for (std::size_t i = 0; i < kWordsPer4K; ++i)
    frame[i] = i < sentinel.contents.size() ? sentinel.contents[i] : sentinel.pattern;
}

SentinelPage PhysMemory::capture(PageIndex page, std::uint64_t pattern) const {
  SentinelPage s{page, pattern, std::vector<std::uint64_t>(kWordsPer4K, 0)};
  if (auto it = frames_.find(page); it != frames_.end())
    std::copy(it->second.begin(), it->second.end(), s.contents.begin());
  return s;
}

std::vector<std::uint64_t> PhysMemory::read_words(PhysAddr addr, std::size_t count) const {
  std::vector<std::uint64_t> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(read_word({addr.value + 8 * i}));
  return out;
}

}  // namespace aiasim
