#include "aiasim/iommu.hpp"

#include <algorithm>

namespace aiasim {

Iotlb::Iotlb(IommuConfig cfg) : cfg_(cfg) {
  if (cfg_.tlb_size == 0) throw ConfigError("tlb_size must be at least 1");
  if (cfg_.miss_ticks < cfg_.hit_ticks) throw ConfigError("IOTLB miss latency below hit latency");
  where_.reserve(cfg_.tlb_size);
}

TlbCharge Iotlb::translate_charge(PageIndex page, Tick now) {
  if (auto it = where_.find(page); it != where_.end()) {
    lru_.splice(lru_.begin(), lru_, it->second);
    ++hits_;
    return {true, cfg_.hit_ticks};
  }
  ++misses_;
  Tick done = now + cfg_.miss_ticks;
  if (cfg_.serialize_misses) {
    done = std::max(now, next_ready_) + cfg_.miss_ticks;
    next_ready_ = done;
  }
  if (lru_.size() == cfg_.tlb_size) {
    where_.erase(lru_.back());
    lru_.pop_back();
  }
  lru_.push_front(page);
  where_[page] = lru_.begin();
  return {false, done - now};
}

void Iotlb::invalidate() {
  lru_.clear();
  where_.clear();
}

}  // namespace aiasim
