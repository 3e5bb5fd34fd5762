#include <doctest.h>

#include <algorithm>
#include <random>

#include "aiasim/cda_probe.hpp"
#include "aiasim/config.hpp"
#include "support/random_maps.hpp"

using namespace aiasim;

namespace {

Region reg(std::uint64_t start, std::uint64_t end, RegionKind kind) { return {{start}, {end}, kind}; }

Preset preset(std::string_view name) {
  auto p = find_preset(name);
  REQUIRE(p);
  return *p;
}

CdaProbe probe(std::string_view name, MemoryMap map = default_probe_map()) {
  return CdaProbe(std::move(map), preset(name));
}

// First candidate of the given kind.
PageIndex victim_of(const CdaProbe& p, RegionTag tag) {
  for (PageIndex v : p.candidate_victims())
    if (p.map().page_kind(v).tag == tag) return v;
  FAIL("no candidate of kind " << tag_name(tag));
  return 0;
}

std::set<PageIndex> pages_of(const MemoryMap& m, std::initializer_list<RegionTag> tags) {
  std::set<PageIndex> out;
  for (RegionTag t : tags)
    for (PageIndex p : m.pages_of(t)) out.insert(p);
  return out;
}

}  // namespace

TEST_CASE("candidate victims") {
  const CdaProbe p = probe("hailo");
  const auto c = p.candidate_victims();
  const MemoryMap& m = p.map();
  for (PageIndex v : c) {
    const RegionTag t = m.page_kind(v).tag;
    CHECK((m.restricted_for(1).contains(v) || t == RegionTag::AIMem));
  }
  // Hailo's L1 table pages are never probed.
  CHECK(std::find(c.begin(), c.end(), PageIndex{0x1000}) == c.end());
  CHECK_THROWS_AS(p.probe_write(0x20, Route::Direct), std::invalid_argument);
  CHECK_THROWS_AS(p.probe_read(0x21, Route::Direct), std::invalid_argument);
  CHECK_THROWS_AS(CdaProbe(MemoryMap({reg(0, 0x10000, {RegionTag::DMem, 0})}, 16), preset("ti")), ConfigError);
}

TEST_CASE("probe_write") {
  SUBCASE("flat map reaches a DMem kernel page directly") {
    const CdaProbe p = probe("nxp");
    const auto o = p.probe_write(victim_of(p, RegionTag::DMem), Route::Direct);
    CHECK(o.status == ProbeStatus::Confirmed);
    CHECK(o.words == CdaProbe::default_output());
  }
  SUBCASE("teardown-only tables: direct is blocked, stale works") {
    const CdaProbe p = probe("google");
    const PageIndex v = victim_of(p, RegionTag::KMem);
    CHECK(p.probe_write(v, Route::Direct).status == ProbeStatus::Blocked);
    const auto stale = p.probe_write(v, Route::Stale);
    CHECK(stale.status == ProbeStatus::Confirmed);
    CHECK(stale.words == CdaProbe::default_output());
  }
  SUBCASE("message passing blocks every victim on every route") {
    const CdaProbe p = probe("rknpu");
    for (PageIndex v : p.candidate_victims())
      for (Route r : {Route::Direct, Route::Escalated, Route::Stale}) CHECK(p.probe_write(v, r).status != ProbeStatus::Confirmed);
  }
  SUBCASE("written values follow the model output") {
    const CdaProbe p = probe("ti");
    const PageIndex v = victim_of(p, RegionTag::AIRMem);
    std::mt19937_64 rng(41);
    for (int i = 0; i < 20; ++i) {
      std::vector<std::uint64_t> out(1 + rng() % 16);
      for (auto& w : out) w = rng();
      CHECK(p.probe_write(v, Route::Direct, out).words == out);
    }
  }
}

TEST_CASE("probe_read") {
  SUBCASE("flat map leaks the victim's words") {
    const CdaProbe p = probe("nxp");
    const PageIndex v = victim_of(p, RegionTag::DMem);
    const auto o = p.probe_read(v, Route::Direct);
    REQUIRE(o.status == ProbeStatus::Confirmed);
    REQUIRE(o.words.size() == 4);
    for (std::uint64_t i = 0; i < 4; ++i) CHECK(o.words[i] == (0x5EC0'0000'0000'0000ull | (v << 4) | i));
  }
  SUBCASE("identity window excludes HMem") {
    const CdaProbe p = probe("ti");
    CHECK(p.probe_read(victim_of(p, RegionTag::HMem), Route::Direct).status != ProbeStatus::Confirmed);
    CHECK(p.probe_read(victim_of(p, RegionTag::DMem), Route::Direct).status == ProbeStatus::Confirmed);
  }
}

TEST_CASE("probe_stale") {
  CHECK(probe("google").probe_stale() == StaleVerdict::Vulnerable);
  CHECK(probe("nvidia").probe_stale() == StaleVerdict::Vulnerable);
  CHECK(probe("nxp").probe_stale() == StaleVerdict::Safe);
  CHECK(probe("rknpu").probe_stale() == StaleVerdict::Safe);
  Preset g = preset("google");
  g.policy.unmap_propagation = Propagation::Eager;
  CHECK(CdaProbe(default_probe_map(), g).probe_stale() == StaleVerdict::Safe);
}

TEST_CASE("classify presets on the default map") {
  const auto cls = [](std::string_view name) { return probe(name).classify().cls; };

  const CdaClass nxp = cls("nxp");
  CHECK(nxp.read);
  CHECK(nxp.write);
  CHECK(nxp.addr.axis == AddrAxis::Full);
  CHECK(nxp.value == ValueControl::Full);
  CHECK_FALSE(nxp.stale_only);

  const CdaClass ti = cls("ti");
  CHECK(ti.addr == AddrControl{AddrAxis::Limited, {RegionTag::DMem, RegionTag::AIRMem}});
  CHECK(ti.value == ValueControl::Full);
  CHECK(format_class(ti) == "R W A=limited(AIRMem,DMem) V=full stale_only=false");

  const CdaClass google = cls("google");
  CHECK(google.write);
  CHECK(google.addr.axis == AddrAxis::NoControl);
  CHECK(google.stale_only);
  CHECK(format_class(google).find("A=none") != std::string::npos);

  CHECK(cls("aws").addr == AddrControl{AddrAxis::Limited, {RegionTag::AIMem}});
  CHECK(cls("hailo").addr.axis == AddrAxis::Full);
  CHECK(cls("nvidia").stale_only);
  CHECK(format_class(cls("rknpu")) == "no-CDA");
}

TEST_CASE("classify evidence names its probes") {
  const ProbeReport rep = probe("google").classify();
  std::vector<std::string> names;
  for (const Evidence& e : rep.evidence) names.push_back(e.probe);
  CHECK(std::find(names.begin(), names.end(), "stale") != names.end());
  CHECK(std::find(names.begin(), names.end(), "write/stale") != names.end());
  CHECK(std::find(names.begin(), names.end(), "read/stale") != names.end());
}

TEST_CASE("oracle_reachable") {
  SUBCASE("hailo on a 64-page map reaches every page") {
    const MemoryMap m({reg(0x0, 0x10000, {RegionTag::KMem, 0}), reg(0x10000, 0x20000, RegionKind::umem(1)),
                       reg(0x20000, 0x38000, {RegionTag::DMem, 0}), reg(0x38000, 0x40000, {RegionTag::AIRMem, 0})});
    REQUIRE(m.page_count() == 64);
    const auto reach = CdaProbe(m, preset("hailo")).oracle_reachable();
    CHECK(reach.size() == 64);
  }
  SUBCASE("ti reaches exactly DMem and AIRMem") {
    const CdaProbe p = probe("ti");
    CHECK(p.oracle_reachable() == pages_of(p.map(), {RegionTag::DMem, RegionTag::AIRMem}));
  }
  SUBCASE("google stays inside the attacker's pages") {
    const CdaProbe p = probe("google");
    const auto reach = p.oracle_reachable();
    const auto owned = p.map().pages_of(RegionKind::umem(1));
    CHECK_FALSE(reach.empty());
    for (PageIndex r : reach) CHECK(std::find(owned.begin(), owned.end(), r) != owned.end());
  }
  SUBCASE("rknpu reaches nothing") { CHECK(probe("rknpu").oracle_reachable().empty()); }
}

TEST_CASE("a kernel region beyond MTLB reach leaves the flat map limited") {
  const std::uint64_t far = std::uint64_t{5} << 30;
  MemoryMap m({reg(0x0, 0x10000, {RegionTag::KMem, 0}), reg(0x20000, 0x28000, RegionKind::umem(1)),
               reg(0x1000000, 0x1020000, {RegionTag::DMem, 0}), reg(far, far + 0x4000, {RegionTag::KMem, 0})});
  const CdaProbe p(m, preset("nxp"));
  const ProbeReport rep = p.classify();
  CHECK(rep.cls.addr.axis == AddrAxis::Limited);
  CHECK(rep.cls.addr.kinds == std::set<RegionTag>{RegionTag::DMem, RegionTag::KMem});
  CHECK(p.addr_axis_of(p.oracle_reachable()) == rep.cls.addr);
  CHECK(p.probe_write(far >> 12, Route::Escalated).status != ProbeStatus::Confirmed);
}

TEST_CASE("two-step escalation reaches kernel memory outside DMem") {
  const CdaProbe p = probe("nxp");
  const PageIndex v = victim_of(p, RegionTag::KMem);
  const Escalation e = p.two_step_escalation(v);
  CHECK(e.forged.status == ProbeStatus::Confirmed);
  CHECK(e.forged_sentinel == SentinelState::Altered);
  CHECK(e.unforged.status != ProbeStatus::Confirmed);
  CHECK(e.unforged_sentinel == SentinelState::Intact);
  CHECK(p.probe_write(v, Route::Direct).status != ProbeStatus::Confirmed);
}

TEST_CASE("property: a confirmed write changes exactly the output words") {
  std::mt19937_64 rng(42);
  const MemoryMap m = default_probe_map();
  for (const char* name : {"nxp", "ti", "hailo"}) {
    CAPTURE(name);
    KernelDriver kd(m, preset(name));
    Session& s = kd.open_session(1);
    const PageIndex buf[] = {0x20};
    DeviceRef in{Smid{0x1001000}, 0};
    if (kd.model().kind() != ModelKind::IdentitySmid) in = kd.map_request(s, buf);
    for (int i = 0; i < 30; ++i) {
      const PageIndex victim = 0x1002 + rng() % 20;
      const std::vector<PageIndex> own{0x21};
      const auto ref = kd.model().construct_smid_for_phys(kd.memory(), own, victim);
      REQUIRE(ref);
      std::vector<std::uint64_t> out(1 + rng() % 32);
      for (auto& w : out) w = rng() | 1;  // never equal to the even pattern
      const std::uint64_t pattern = rng() & ~std::uint64_t{1};
      kd.memory().store(fill_sentinel(victim, pattern));
      const auto r = kd.submit_inference(s, {in, *ref, out});
      REQUIRE(std::holds_alternative<InferenceOk>(r));
      const SentinelPage after = kd.memory().capture(victim, pattern);
      const auto changed = std::count_if(after.contents.begin(), after.contents.end(),
                                         [&](std::uint64_t w) { return w != pattern; });
      CHECK(changed == static_cast<std::ptrdiff_t>(out.size()));
    }
  }
}

TEST_CASE("property: eager propagation and map validation never enlarge reach") {
  std::mt19937_64 rng(43);
  for (int i = 0; i < 8; ++i) {
    const MemoryMap m = testing::random_map(rng);
    for (const std::string& name : preset_names()) {
      CAPTURE(name);
      Preset loose = preset(name);
      loose.policy.validate_on_map = false;
      loose.policy.unmap_propagation = Propagation::TeardownOnly;
      Preset eager = loose;
      eager.policy.unmap_propagation = Propagation::Eager;
      Preset validated = loose;
      validated.policy.validate_on_map = true;

      const auto base = CdaProbe(m, loose).oracle_reachable();
      for (const Preset& tight : {eager, validated}) {
        const auto r = CdaProbe(m, tight).oracle_reachable();
        CHECK(std::includes(base.begin(), base.end(), r.begin(), r.end()));
      }
    }
  }
}
