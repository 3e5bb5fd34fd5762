#include <doctest.h>

#include <random>

#include "aiasim/kd_sim.hpp"

using namespace aiasim;

namespace {

Region reg(std::uint64_t start, std::uint64_t end, RegionKind kind) { return {{start}, {end}, kind}; }

MemoryMap board() {
  return MemoryMap({reg(0x0, 0x10000, {RegionTag::KMem, 0}), reg(0x10000, 0x20000, {RegionTag::HMem, 0}),
                    reg(0x20000, 0x28000, RegionKind::umem(1)), reg(0x28000, 0x30000, RegionKind::umem(2)),
                    reg(0x1000000, 0x1020000, {RegionTag::DMem, 0}),
                    reg(0x2000000, 0x2008000, {RegionTag::AIRMem, 0})});
}

Preset preset(std::string_view name) {
  auto p = find_preset(name);
  REQUIRE(p);
  return *p;
}

KdErrorCode code_of(auto&& f) {
  try {
    f();
  } catch (const KdError& e) {
    return e.code();
  }
  FAIL("expected KdError");
  return KdErrorCode::SessionClosed;
}

bool faults(const KernelDriver& kd, DeviceRef ref) {
  return std::holds_alternative<Fault>(kd.model().translate(kd.memory(), ref));
}

PageIndex target(const KernelDriver& kd, DeviceRef ref) {
  const auto r = kd.model().translate(kd.memory(), ref);
  REQUIRE(std::holds_alternative<PhysAddr>(r));
  return std::get<PhysAddr>(r).page(12);
}

const PageIndex kOwned[] = {0x20, 0x21, 0x22};

}  // namespace

TEST_CASE("presets") {
  CHECK(preset_names() == std::vector<std::string>{"google", "nxp", "hailo", "ti", "nvidia", "aws", "rknpu"});
  CHECK_FALSE(find_preset("tpu"));
  CHECK(preset("google").policy.exclusive_access);
  CHECK(preset("google").policy.unmap_propagation == Propagation::TeardownOnly);
  CHECK_FALSE(preset("hailo").policy.scrub_on_release);
  CHECK_FALSE(preset("nxp").policy.tagged_entries);
}

TEST_CASE("sessions") {
  SUBCASE("exclusive access rejects a second process") {
    KernelDriver kd(board(), preset("google"));
    kd.open_session(1);
    CHECK(code_of([&] { kd.open_session(2); }) == KdErrorCode::Busy);
    CHECK(kd.open_sessions() == 1);
  }
  SUBCASE("shared access admits both") {
    KernelDriver kd(board(), preset("nxp"));
    kd.open_session(1);
    kd.open_session(2);
    CHECK(kd.is_open(1));
    CHECK(kd.is_open(2));
    CHECK(kd.open_sessions() == 2);
  }
  SUBCASE("reopen after teardown") {
    KernelDriver kd(board(), preset("google"));
    kd.teardown(kd.open_session(1));
    CHECK_FALSE(kd.is_open(1));
    kd.teardown(kd.session(1));  // idempotent
    CHECK_NOTHROW(kd.open_session(2));
    CHECK(kd.session(2).owned_pages.size() == 8);
  }
  SUBCASE("closed sessions reject work") {
    KernelDriver kd(board(), preset("nxp"));
    Session& s = kd.open_session(1);
    kd.teardown(s);
    CHECK(code_of([&] { kd.map_request(s, kOwned); }) == KdErrorCode::SessionClosed);
    CHECK(code_of([&] { kd.session(9); }) == KdErrorCode::SessionClosed);
  }
}

TEST_CASE("map_request validation and SMID shape") {
  SUBCASE("kernel page is denied") {
    KernelDriver kd(board(), preset("google"));
    Session& s = kd.open_session(1);
    const PageIndex kmem[] = {0x3};
    CHECK(code_of([&] { kd.map_request(s, kmem); }) == KdErrorCode::PermissionDenied);
    const PageIndex other[] = {0x28};
    CHECK(code_of([&] { kd.map_request(s, other); }) == KdErrorCode::PermissionDenied);
    CHECK(s.issued.empty());
  }
  SUBCASE("owned page round trips on every zero-copy preset") {
    for (const char* name : {"google", "nxp", "hailo", "nvidia"}) {
      CAPTURE(name);
      KernelDriver kd(board(), preset(name));
      Session& s = kd.open_session(1);
      const DeviceRef ref = kd.map_request(s, kOwned);
      kd.model().set_active_pid(1);
      CHECK(target(kd, ref) == 0x20);
      CHECK(s.issued.size() == 3);
      for (const auto& [r, page] : s.issued) CHECK(target(kd, r) == page);
    }
  }
  SUBCASE("requested slots are honored") {
    KernelDriver kd(board(), preset("google"));
    Session& s = kd.open_session(1);
    const DeviceRef ref = kd.map_request(s, std::span(kOwned, 1), Smid{7 << 12});
    CHECK(ref.smid.value == 7 << 12);
  }
  SUBCASE("identity SMIDs equal the physical address") {
    KernelDriver kd(board(), preset("nxp"));
    Session& s = kd.open_session(1);
    CHECK(kd.map_request(s, std::span(kOwned + 1, 1)).smid.value == 0x21000);
    KernelDriver ti(board(), preset("ti"));
    const PageIndex dmem[] = {0x1004};
    CHECK(ti.map_request(ti.open_session(1), dmem).smid.value == 0x1004000);
  }
  SUBCASE("message passing has no SMIDs") {
    KernelDriver kd(board(), preset("rknpu"));
    CHECK(code_of([&] { kd.map_request(kd.open_session(1), kOwned); }) == KdErrorCode::NotZeroCopy);
  }
  SUBCASE("granted pages become mappable") {
    KernelDriver kd(board(), preset("nxp"));
    Session& s = kd.open_session(1);
    const PageIndex dmem[] = {0x1002};
    CHECK(code_of([&] { kd.map_request(s, dmem); }) == KdErrorCode::PermissionDenied);
    kd.grant_page(1, 0x1002);
    CHECK(kd.map_request(s, dmem).smid.value == 0x1002000);
  }
}

TEST_CASE("unmap propagation") {
  SUBCASE("teardown-only leaves the SMID live") {
    KernelDriver kd(board(), preset("google"));
    Session& s = kd.open_session(1);
    const DeviceRef ref = kd.map_request(s, std::span(kOwned, 1));
    kd.unmap(s, std::span(kOwned, 1));
    CHECK_FALSE(s.owned_pages.contains(0x20));
    CHECK(target(kd, ref) == 0x20);
    kd.teardown(s);
    CHECK(faults(kd, ref));
  }
  SUBCASE("eager removes it") {
    for (const char* name : {"nxp", "hailo"}) {
      CAPTURE(name);
      KernelDriver kd(board(), preset(name));
      Session& s = kd.open_session(1);
      const DeviceRef ref = kd.map_request(s, std::span(kOwned, 1));
      kd.unmap(s, std::span(kOwned, 1));
      CHECK(faults(kd, ref));
    }
  }
  SUBCASE("hailo tables survive teardown byte for byte") {
    KernelDriver kd(board(), preset("hailo"));
    Session& s = kd.open_session(1);
    const DeviceRef ref = kd.map_request(s, kOwned);
    const PhysMemory before = kd.memory();
    kd.teardown(s);
    CHECK(kd.memory() == before);
    CHECK(target(kd, ref) == 0x20);
  }
}

TEST_CASE("submit_inference") {
  SUBCASE("output lands on the target page") {
    KernelDriver kd(board(), preset("nxp"));
    Session& s = kd.open_session(1);
    kd.memory().store(fill_sentinel(0x1003, 0xDEADBEEFDEADBEEFull));
    const DeviceRef in = kd.map_request(s, std::span(kOwned, 1));
    const std::vector<std::uint64_t> out{1, 2, 3, 4};
    const auto r = kd.submit_inference(s, {in, {Smid{0x1003000}, 0}, out});
    REQUIRE(std::holds_alternative<InferenceOk>(r));
    CHECK(std::get<InferenceOk>(r).words == out);
    const SentinelPage after = kd.memory().capture(0x1003, 0xDEADBEEFDEADBEEFull);
    CHECK(check_sentinel(after) == SentinelState::Altered);
    CHECK(std::vector(after.contents.begin(), after.contents.begin() + 4) == out);
    CHECK(after.contents[4] == 0xDEADBEEFDEADBEEFull);
  }
  SUBCASE("the last request's values win") {
    KernelDriver kd(board(), preset("ti"));
    Session& s = kd.open_session(1);
    const DeviceRef victim{Smid{0x1005000}, 0};
    kd.submit_inference(s, {victim, victim, {7, 7}});
    kd.submit_inference(s, {victim, victim, {9, 8}});
    CHECK(kd.memory().read_words({0x1005000}, 2) == std::vector<std::uint64_t>{9, 8});
  }
  SUBCASE("echo copies input words") {
    KernelDriver kd(board(), preset("ti"));
    Session& s = kd.open_session(1);
    kd.memory().write_word({0x1006000}, 0x5EC0);
    const auto r = kd.submit_inference(s, {{Smid{0x1006000}, 0}, {Smid{0x1007000}, 0}, {}, 2});
    REQUIRE(std::holds_alternative<InferenceOk>(r));
    CHECK(kd.memory().read_words({0x1007000}, 2) == std::vector<std::uint64_t>{0x5EC0, 0});
  }
  SUBCASE("message passing faults and leaves memory alone") {
    KernelDriver kd(board(), preset("rknpu"));
    Session& s = kd.open_session(1);
    kd.memory().store(fill_sentinel(0x1003, 0xAA));
    const auto r = kd.submit_inference(s, {{Smid{0x20000}, 0}, {Smid{0x1003000}, 0}, {1}});
    REQUIRE(std::holds_alternative<Fault>(r));
    CHECK(std::get<Fault>(r).reason == FaultReason::NotZeroCopy);
    CHECK(check_sentinel(kd.memory().capture(0x1003, 0xAA)) == SentinelState::Intact);
  }
  SUBCASE("output that would cross the page faults") {
    KernelDriver kd(board(), preset("ti"));
    Session& s = kd.open_session(1);
    const auto r = kd.submit_inference(s, {{Smid{0x1005000}, 0}, {Smid{0x1005ff8}, 0}, {1, 2}});
    CHECK(std::holds_alternative<Fault>(r));
  }
}

TEST_CASE("property: validated eager drivers only ever expose owned pages") {
  std::mt19937_64 rng(31);
  const MemoryMap m = board();
  for (const char* name : {"google", "nxp", "hailo", "nvidia"}) {
    CAPTURE(name);
    Preset p = preset(name);
    p.policy.unmap_propagation = Propagation::Eager;
    p.policy.exclusive_access = false;
    for (int trial = 0; trial < 20; ++trial) {
      KernelDriver kd(m, p);
      Session& s = kd.open_session(1);
      std::vector<DeviceRef> all_refs;
      for (int step = 0; step < 30; ++step) {
        const PageIndex page = 0x1e + rng() % 14;  // straddles HMem, UMem(1), UMem(2)
        const PageIndex one[] = {page};
        if (rng() % 3) {
          const bool owned = s.owned_pages.contains(page);
          try {
            all_refs.push_back(kd.map_request(s, one));
            CHECK(owned);
          } catch (const KdError& e) {
            CHECK_FALSE(owned);
            CHECK(e.code() == KdErrorCode::PermissionDenied);
          }
        } else {
          kd.unmap(s, one);
        }
        kd.model().set_active_pid(1);
        for (const auto& [ref, pg] : s.issued) CHECK(s.owned_pages.contains(pg));
        for (const DeviceRef& ref : all_refs) {
          const auto r = kd.model().translate(kd.memory(), ref);
          if (auto* a = std::get_if<PhysAddr>(&r)) {
            if (p.model == ModelKind::FlatMapMtlbStlb && m.classify(*a).tag == RegionTag::DMem) continue;
            CHECK(s.owned_pages.contains(a->page(12)));
          }
        }
      }
    }
  }
}
