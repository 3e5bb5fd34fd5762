#pragma once

#include <compare>
#include <cstdint>
#include <stdexcept>
#include <string>

#include <boost/rational.hpp>

namespace aiasim {

/// Simulated time. One tick is one picosecond (1 THz tick frequency).
using Tick = std::uint64_t;

inline constexpr Tick kTicksPerNs = 1000;

constexpr Tick ns_to_ticks(std::uint64_t ns) { return ns * kTicksPerNs; }

using Pid = std::uint32_t;
using PageIndex = std::uint64_t;
using Rational = boost::rational<std::int64_t>;

struct PhysAddr {
  std::uint64_t value = 0;

  constexpr PageIndex page(unsigned shift) const { return value >> shift; }
  static constexpr PhysAddr of_page(PageIndex page, unsigned shift) { return {page << shift}; }

  friend constexpr auto operator<=>(PhysAddr, PhysAddr) = default;
};

/// Shared-memory identifier handed to the accelerator. Its meaning depends
/// on the translation model: a device address, a physical address, or the
/// physical base of a page table.
struct Smid {
  std::uint64_t value = 0;

  friend constexpr auto operator<=>(Smid, Smid) = default;
};

/// An SMID plus the device-virtual offset the accelerator applies to it.
struct DeviceRef {
  Smid smid;
  std::uint64_t offset = 0;

  friend constexpr auto operator<=>(const DeviceRef&, const DeviceRef&) = default;
};

/// Raised for malformed configuration (bad maps, missing regions, bad knobs).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string to_hex(std::uint64_t v);

}  // namespace aiasim
