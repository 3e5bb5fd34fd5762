#include "aiasim/engine.hpp"

#include <algorithm>
#include <optional>
#include <queue>
#include <stdexcept>

namespace aiasim {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

class Fnv1a {
 public:
  void add(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h_ ^= (v >> (8 * i)) & 0xff;
      h_ *= 0x100000001b3ull;
    }
  }
  std::uint64_t value() const { return h_; }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ull;
};

}  // namespace

std::set<PageIndex> Workload::touched_pages() const {
  std::set<PageIndex> out;
  for (const Pipeline& p : pipelines)
    for (const Op& o : p) {
      if (auto* l = std::get_if<op::Load>(&o)) out.insert(l->addr.page(page_shift));
      if (auto* s = std::get_if<op::Store>(&o)) out.insert(s->addr.page(page_shift));
    }
  return out;
}

std::size_t Workload::op_count() const {
  std::size_t n = 0;
  for (const Pipeline& p : pipelines) n += p.size();
  return n;
}

std::string defense_name(const Defense& d) {
  return std::visit(overloaded{
                        [](const NoDefense&) { return "none"; },
                        [](const ValidatorConfig&) { return "validator"; },
                        [](const IommuConfig&) { return "iommu"; },
                        [](const KdCheckConfig&) { return "kd_check"; },
                    },
                    d);
}

Tick run_pass(const Workload& w, const SimConfig& cfg, SimResult* stats,
              std::vector<std::vector<Tick>>* completions) {
  if (cfg.mem_lat == 0) throw ConfigError("mem_lat must be positive");

  std::optional<Validator> validator;
  std::optional<Iotlb> iotlb;
  Tick kd_ticks = 0;
  Tick host_ready = 0;
  std::uint64_t kd_checks = 0;
  if (auto* v = std::get_if<ValidatorConfig>(&cfg.defense)) validator.emplace(*v);
  if (auto* i = std::get_if<IommuConfig>(&cfg.defense)) {
    iotlb.emplace(*i);
    if (cfg.invalidate_on_start) iotlb->invalidate();
  }
  if (auto* k = std::get_if<KdCheckConfig>(&cfg.defense)) kd_ticks = k->latency_per_smid;

  const std::size_t n = w.pipelines.size();
  std::vector<Tick> clock(n, 0);
  std::vector<std::size_t> pc(n, 0);
  if (completions) completions->assign(n, {});
  Fnv1a digest;

  // Min-heap on (issue time, pipeline id): ties go to the lowest id.
  using Entry = std::pair<Tick, std::size_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> ready;
  for (std::size_t i = 0; i < n; ++i)
    if (!w.pipelines[i].empty()) ready.push({0, i});

  auto mem_defer = [&](Access a, Tick now) -> Tick {
    if (validator) return validator->charge(w.pid, a, now).defer;
    if (iotlb) return iotlb->translate_charge(a.addr, now).defer;
    return 0;
  };

  while (!ready.empty()) {
    const auto [now, id] = ready.top();
    ready.pop();
    const Op& o = w.pipelines[id][pc[id]];
    const Tick cost = std::visit(
        overloaded{
            [&](const op::Comp& c) { return c.duration; },
            [&](const op::Load& l) { return cfg.mem_lat + mem_defer({AccessType::Load, l.addr}, now); },
            [&](const op::Store& s) { return cfg.mem_lat + mem_defer({AccessType::Store, s.addr}, now); },
            [&](const op::DmaCtl& d) { return mem_defer({AccessType::DmaCtrlWrite, d.addr}, now); },
            [&](const op::DmaPio&) -> Tick {
              if (validator) return validator->charge(w.pid, {AccessType::DmaPio, {}}, now).defer;
              return 0;
            },
            [&](const op::MsgSub& m) -> Tick {
              if (!kd_ticks) return 0;
              kd_checks += m.smids;
              host_ready = std::max(now, host_ready) + kd_ticks * m.smids;
              return host_ready - now;
            },
        },
        o);
    clock[id] = now + cost;
    digest.add(id);
    digest.add(pc[id]);
    digest.add(clock[id]);
    if (completions) (*completions)[id].push_back(clock[id]);
    if (++pc[id] < w.pipelines[id].size()) ready.push({clock[id], id});
  }

  const Tick runtime = n ? *std::max_element(clock.begin(), clock.end()) : 0;
  if (stats) {
    digest.add(runtime);
    if (validator) {
      stats->outcomes = validator->counts();
      stats->validations = validator->validations();
    }
    if (iotlb) {
      stats->iotlb_hits = iotlb->hits();
      stats->iotlb_misses = iotlb->misses();
    }
    if (kd_ticks) stats->validations = kd_checks;
    stats->digest = digest.value();
  }
  return runtime;
}

SimResult run(const Workload& w, const SimConfig& cfg) {
  SimResult r;
  r.protected_ticks = run_pass(w, cfg, &r);
  SimConfig base = cfg;
  base.defense = NoDefense{};
  r.baseline_ticks = run_pass(w, base);
  r.overhead_pct = r.baseline_ticks ? overhead(r.baseline_ticks, r.protected_ticks) : Rational(0);
  Fnv1a d;
  for (std::uint64_t v : {r.digest, r.baseline_ticks, r.protected_ticks, r.validations, r.iotlb_hits, r.iotlb_misses})
    d.add(v);
  for (std::uint64_t v : r.outcomes.n) d.add(v);
  r.digest = d.value();
  return r;
}

Rational overhead(Tick baseline, Tick protected_ticks) {
  if (baseline == 0) throw std::domain_error("overhead needs a positive baseline");
  const auto b = static_cast<std::int64_t>(baseline);
  const auto p = static_cast<std::int64_t>(protected_ticks);
  return Rational(p - b, b) * 100;
}

__extension__ using Wide = __int128;

std::string format_pct(const Rational& pct) {
  Wide num = pct.numerator();
  const Wide den = pct.denominator();
  const bool neg = num < 0;
  if (neg) num = -num;
  // Hundredths, rounded half away from zero.
  const auto hundredths = static_cast<std::int64_t>((num * 200 + den) / (2 * den));
  std::string frac = std::to_string(hundredths % 100);
  if (frac.size() < 2) frac.insert(0, "0");
  return (neg && hundredths ? "-" : "") + std::to_string(hundredths / 100) + "." + frac;
}

}  // namespace aiasim
