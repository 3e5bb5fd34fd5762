#include "aiasim/validator.hpp"

#include <algorithm>
#include <numeric>

namespace aiasim {

std::string_view dma_reg_name(DmaReg r) { return r == DmaReg::Src ? "SRC" : "DST"; }

std::string_view outcome_name(Outcome o) {
  switch (o) {
    case Outcome::CacheHit: return "cache_hit";
    case Outcome::Coalesced: return "coalesced";
    case Outcome::ColdMiss: return "cold_miss";
    case Outcome::DmaCtrl: return "dma_ctrl";
    case Outcome::Passthrough: return "passthrough";
  }
  return "?";
}

std::uint64_t OutcomeCounts::total() const { return std::accumulate(n.begin(), n.end(), std::uint64_t{0}); }

Validator::Validator(ValidatorConfig cfg) : cfg_(cfg) {
  if (cfg_.latency_ticks == 0) throw ConfigError("validator latency must be positive");
  if (cfg_.page_shift < 12 || cfg_.page_shift > 24) throw ConfigError("validator page_shift must lie in [12, 24]");
}

void Validator::retire(Tick now) {
  for (auto it = inflight_.begin(); it != inflight_.end();) {
    if (it->second <= now) {
      validated_.insert(it->first);
      it = inflight_.erase(it);
    } else {
      ++it;
    }
  }
}

Tick Validator::serialize(Tick now) {
  next_ready_ = std::max(now, next_ready_) + cfg_.latency_ticks;
  return next_ready_;
}

Charge Validator::charge(Pid pid, const Access& access, Tick now) {
  Charge c{Outcome::Passthrough, 0};
  switch (access.type) {
    case AccessType::DmaPio:
      break;
    case AccessType::DmaCtrlWrite:
      c = {Outcome::DmaCtrl, serialize(now) - now};
      break;
    case AccessType::Load:
    case AccessType::Store: {
      if (!inflight_.empty()) retire(now);
      const Key key{pid, access.addr.page(cfg_.page_shift)};
      if (validated_.contains(key)) {
        c = {Outcome::CacheHit, 0};
      } else if (auto it = inflight_.find(key); it != inflight_.end()) {
        c = {Outcome::Coalesced, it->second - now};
      } else {
        const Tick done = serialize(now);
        inflight_.emplace(key, done);
        c = {Outcome::ColdMiss, done - now};
      }
      break;
    }
  }
  ++counts_[c.outcome];
  return c;
}

void Validator::reset() {
  validated_.clear();
  inflight_.clear();
}

Rational ns_to_cycles(std::uint64_t ns, std::uint64_t freq_hz) {
  if (freq_hz == 0) throw ConfigError("frequency must be positive");
  return Rational(static_cast<std::int64_t>(ns), 1) *
         Rational(static_cast<std::int64_t>(freq_hz), 1'000'000'000);
}

std::string rational_to_string(const Rational& r, int max_digits) {
  std::int64_t num = r.numerator();
  const std::int64_t den = r.denominator();
  std::string out;
  if (num < 0) {
    out += '-';
    num = -num;
  }
  out += std::to_string(num / den);
  std::int64_t rem = num % den;
  if (rem == 0) return out;
  std::string frac;
  for (int i = 0; i < max_digits && rem; ++i) {
    rem *= 10;
    frac += static_cast<char>('0' + rem / den);
    rem %= den;
  }
  if (rem) return std::to_string(r.numerator()) + "/" + std::to_string(den);
  return out + "." + frac;
}

}  // namespace aiasim
