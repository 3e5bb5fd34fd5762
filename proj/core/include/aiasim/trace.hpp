#pragma once

#include <cstddef>
#include <iosfwd>
#include <stdexcept>
#include <string>

#include "aiasim/engine.hpp"

namespace aiasim {

/// Malformed trace input; `line()` is 1-based.
class TraceError : public std::runtime_error {
 public:
  TraceError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// One op per line, '#' starts a comment:
///   P <id>  C <ticks>  L <hex>  S <hex>  D SRC|DST <hex>  Q <reg>  M <k>
/// Pipelines run in ascending id order for tie-breaking.
Workload parse_trace(std::istream& in, Pid pid = 1, unsigned page_shift = 12);
Workload parse_trace(const std::string& text, Pid pid = 1, unsigned page_shift = 12);

void write_trace(std::ostream& out, const Workload& w);
std::string format_trace(const Workload& w);

}  // namespace aiasim
