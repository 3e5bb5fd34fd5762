#include <doctest.h>

#include <random>

#include "aiasim/memory_model.hpp"
#include "support/random_maps.hpp"

using namespace aiasim;

namespace {

Region reg(std::uint64_t start, std::uint64_t end, RegionKind kind) { return {{start}, {end}, kind}; }

constexpr RegionKind kK{RegionTag::KMem, 0};
constexpr RegionKind kD{RegionTag::DMem, 0};
constexpr RegionKind kAir{RegionTag::AIRMem, 0};

// Linear scan reference: every region containing the address.
std::vector<RegionKind> containing(const MemoryMap& m, PhysAddr a) {
  std::vector<RegionKind> out;
  for (const Region& r : m.regions())
    if (r.start <= a && a < r.end) out.push_back(r.kind);
  return out;
}

}  // namespace

TEST_CASE("classify: single covering region and empty map") {
  const MemoryMap m({reg(0x0, 0x1000'0000, kD)});
  CHECK(m.classify({0x42}) == kD);
  CHECK(MemoryMap{}.classify({0x42}).tag == RegionTag::Unmapped);
}

TEST_CASE("classify: region boundary agrees with a linear scan") {
  const MemoryMap m({reg(0x4000'0000, 0x1'0000'0000, kD), reg(0x1'0000'0000, 0x1'1000'0000, kAir)});
  for (std::uint64_t a : {0x3fff'ffffull, 0x4000'0000ull, 0xffff'ffffull, 0x1'0000'0000ull, 0x1'0fff'ffffull,
                          0x1'1000'0000ull}) {
    const auto hits = containing(m, {a});
    const RegionKind want = hits.empty() ? RegionKind{} : hits.front();
    CHECK(m.classify({a}) == want);
  }
  CHECK(m.classify({0x1'0000'0000}).tag == RegionTag::AIRMem);
}

TEST_CASE("restricted_for") {
  SUBCASE("attacker owns everything") {
    const MemoryMap m({reg(0x0, 0x4000, RegionKind::umem(1))});
    CHECK(m.restricted_for(1).empty());
  }
  SUBCASE("one kernel page") {
    const MemoryMap m({reg(0x0, 0x2000, RegionKind::umem(1)), reg(0x2000, 0x3000, kK)});
    CHECK(m.restricted_for(1) == std::set<PageIndex>{2});
  }
  SUBCASE("16-page mixed map against page-by-page classification") {
    const MemoryMap m({reg(0x0, 0x3000, kK), reg(0x3000, 0x7000, RegionKind::umem(1)),
                       reg(0x7000, 0xa000, RegionKind::umem(2)), reg(0xa000, 0xd000, kD),
                       reg(0xe000, 0x10000, {RegionTag::AIMem, 0})});
    std::set<PageIndex> want;
    for (PageIndex p = 0; p < 16; ++p) {
      const RegionKind k = m.classify(PhysAddr::of_page(p, 12));
      const bool restricted = k.tag == RegionTag::KMem || k.tag == RegionTag::HMem || k.tag == RegionTag::AIRMem ||
                              k.tag == RegionTag::DMem || (k.tag == RegionTag::UMem && k.pid != 1);
      if (restricted) want.insert(p);
    }
    CHECK(m.restricted_for(1) == want);
    CHECK(want.size() == 9);
  }
}

TEST_CASE("property: classify is total with at most one containing region") {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 200; ++i) {
    const MemoryMap m = testing::random_map(rng);
    const auto& regs = m.regions();
    for (int j = 0; j < 200; ++j) {
      const Region& r = regs[rng() % regs.size()];
      const std::uint64_t span = r.end.value - r.start.value;
      const PhysAddr a{r.start.value - std::min<std::uint64_t>(r.start.value, 0x3000) + rng() % (span + 0x6000)};
      const auto hits = containing(m, a);
      REQUIRE(hits.size() <= 1);
      CHECK(m.classify(a) == (hits.empty() ? RegionKind{} : hits.front()));
    }
  }
}

TEST_CASE("property: restricted_for excludes the process's own UMem") {
  std::mt19937_64 rng(12);
  for (int i = 0; i < 100; ++i) {
    const MemoryMap m = testing::random_map(rng);
    for (Pid pid : {1u, 2u, 3u}) {
      const auto r = m.restricted_for(pid);
      for (PageIndex p : m.pages_of(RegionKind::umem(pid))) CHECK_FALSE(r.contains(p));
    }
  }
}

TEST_CASE("map construction rejects bad regions") {
  CHECK_THROWS_AS(MemoryMap({reg(0x0, 0x2000, kK), reg(0x1000, 0x3000, kD)}), ConfigError);
  CHECK_THROWS_AS(MemoryMap({reg(0x10, 0x2000, kK)}), ConfigError);
  CHECK_THROWS_AS(MemoryMap({reg(0x2000, 0x2000, kK)}), ConfigError);
  CHECK_THROWS_AS(MemoryMap({reg(0x0, 0x1000, RegionKind{})}), ConfigError);
  CHECK_THROWS_AS(MemoryMap({}, 11), ConfigError);
  CHECK_THROWS_AS(MemoryMap({}, 25), ConfigError);
  CHECK_NOTHROW(MemoryMap({reg(0x0, 0x10000, kK)}, 16));
  // Unsorted input is sorted, not rejected.
  const MemoryMap m({reg(0x2000, 0x3000, kD), reg(0x0, 0x1000, kK)});
  CHECK(m.regions().front().kind == kK);
}

TEST_CASE("page arithmetic over shifts 12..24") {
  const PhysAddr a{0x1234'5678'9abc};
  for (unsigned s = 12; s <= 24; ++s) CHECK(a.page(s) == (a.value >> s));
  const MemoryMap m({reg(0x0, 0x20000, kD)}, 16);
  CHECK(m.page_bytes() == 0x10000);
  CHECK(m.pages() == std::vector<PageIndex>{0, 1});
}

TEST_CASE("sentinel fill and check") {
  const SentinelPage s = fill_sentinel(7, 0xDEADBEEFDEADBEEFull);
  CHECK(s.contents.size() == 512);
  CHECK(check_sentinel(s) == SentinelState::Intact);
  SentinelPage t = s;
  t.contents[300] = 0;
  CHECK(check_sentinel(t) == SentinelState::Altered);

  std::mt19937_64 rng(13);
  for (int i = 0; i < 100; ++i) CHECK(check_sentinel(fill_sentinel(rng(), rng())) == SentinelState::Intact);
}

TEST_CASE("physical memory is sparse, zero-filled and word addressed") {
  PhysMemory mem;
  CHECK(mem.read_word({0x5000}) == 0);
  CHECK(mem.frame_count() == 0);
  mem.write_word({0x5008}, 42);
  CHECK(mem.read_word({0x5008}) == 42);
  CHECK(mem.read_word({0x5000}) == 0);
  CHECK(mem.touched(5));
  mem.store(fill_sentinel(9, 3));
  CHECK(check_sentinel(mem.capture(9, 3)) == SentinelState::Intact);
  mem.write_word({0x9000 + 8 * 17}, 4);
  CHECK(check_sentinel(mem.capture(9, 3)) == SentinelState::Altered);
  CHECK(mem.read_words({0x9000 + 8 * 16}, 3) == std::vector<std::uint64_t>{3, 4, 3});
  PhysMemory copy = mem;
  CHECK(copy == mem);
  copy.clear_page(9);
  CHECK_FALSE(copy == mem);
}

TEST_CASE("region tag names round trip") {
  for (RegionTag t : {RegionTag::AIMem, RegionTag::AIRMem, RegionTag::DMem, RegionTag::HMem, RegionTag::KMem,
                      RegionTag::UMem, RegionTag::Unmapped})
    CHECK(parse_tag(tag_name(t)) == t);
  CHECK_FALSE(parse_tag("SMem"));
  CHECK(kind_name(RegionKind::umem(3)) == "UMem(3)");
}
