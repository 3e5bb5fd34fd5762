#pragma once

#include <cstdint>
#include <list>
#include <unordered_map>
#include <vector>

#include "aiasim/types.hpp"

namespace aiasim {

struct IommuConfig {
  std::size_t tlb_size = 8;
  Tick hit_ticks = ns_to_ticks(2);
  Tick miss_ticks = ns_to_ticks(1000);
  // false: a miss completes at now + miss_ticks with no walk-port queueing.
  bool serialize_misses = true;
  unsigned page_shift = 12;
};

struct TlbCharge {
  bool hit;
  Tick defer;
};

/// Fully associative LRU IOTLB in front of a single page-table-walk port.
class Iotlb {
 public:
  explicit Iotlb(IommuConfig cfg = {});

  TlbCharge translate_charge(PageIndex page, Tick now);
  TlbCharge translate_charge(PhysAddr addr, Tick now) { return translate_charge(addr.page(cfg_.page_shift), now); }

  /// Drops every entry. Deadline and counters are kept.
  void invalidate();

  /// Most recently used first.
  std::vector<PageIndex> entries() const { return {lru_.begin(), lru_.end()}; }
  std::size_t size() const { return lru_.size(); }
  const IommuConfig& config() const { return cfg_; }
  Tick next_ready() const { return next_ready_; }
  std::uint64_t hits() const { return hits_; }
  std::uint64_t misses() const { return misses_; }

 private:
  IommuConfig cfg_;
  std::list<PageIndex> lru_;
  std::unordered_map<PageIndex, std::list<PageIndex>::iterator> where_;
  Tick next_ready_ = 0;
  std::uint64_t hits_ = 0;
  std::uint64_t misses_ = 0;
};

}  // namespace aiasim
