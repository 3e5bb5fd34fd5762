#include "aiasim/trace.hpp"

#include <charconv>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <vector>

namespace aiasim {

namespace {

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    const std::size_t j = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > j) out.push_back(line.substr(j, i - j));
  }
  return out;
}

std::uint64_t number(std::string_view tok, int base, std::size_t line, const char* what) {
  if (base == 16 && (tok.starts_with("0x") || tok.starts_with("0X"))) tok.remove_prefix(2);
  std::uint64_t v = 0;
  const auto [end, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v, base);
  if (tok.empty() || ec != std::errc{} || end != tok.data() + tok.size())
    throw TraceError(line, std::string("bad ") + what + " '" + std::string(tok) + "'");
  return v;
}

}  // namespace

Workload parse_trace(std::istream& in, Pid pid, unsigned page_shift) {
  std::map<std::uint64_t, Pipeline> blocks;
  Pipeline* cur = nullptr;
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string_view line = raw;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const auto tok = split(line);
    if (tok.empty()) continue;

    auto want = [&](std::size_t n) {
      if (tok.size() != n)
        throw TraceError(lineno, "'" + std::string(tok[0]) + "' takes " + std::to_string(n - 1) + " operand(s)");
    };
    const std::string_view kw = tok[0];
    if (kw == "P") {
      want(2);
      const std::uint64_t id = number(tok[1], 10, lineno, "pipeline id");
      if (blocks.contains(id)) throw TraceError(lineno, "pipeline " + std::to_string(id) + " declared twice");
      cur = &blocks[id];
      continue;
    }
    if (!cur) throw TraceError(lineno, "op before any 'P <id>' line");
    if (kw == "C") {
      want(2);
      const Tick d = number(tok[1], 10, lineno, "tick count");
      if (d == 0) throw TraceError(lineno, "compute duration must be positive");
      cur->push_back(op::Comp{d});
    } else if (kw == "L") {
      want(2);
      cur->push_back(op::Load{{number(tok[1], 16, lineno, "address")}});
    } else if (kw == "S") {
      want(2);
      cur->push_back(op::Store{{number(tok[1], 16, lineno, "address")}});
    } else if (kw == "D") {
      want(3);
      DmaReg reg;
      if (tok[1] == "SRC")
        reg = DmaReg::Src;
      else if (tok[1] == "DST")
        reg = DmaReg::Dst;
      else
        throw TraceError(lineno, "DMA register must be SRC or DST, got '" + std::string(tok[1]) + "'");
      cur->push_back(op::DmaCtl{reg, {number(tok[2], 16, lineno, "address")}});
    } else if (kw == "Q") {
      want(2);
      cur->push_back(op::DmaPio{std::string(tok[1])});
    } else if (kw == "M") {
      want(2);
      const std::uint64_t k = number(tok[1], 10, lineno, "SMID count");
      if (k > UINT32_MAX) throw TraceError(lineno, "SMID count too large");
      cur->push_back(op::MsgSub{static_cast<std::uint32_t>(k)});
    } else {
      throw TraceError(lineno, "unknown op '" + std::string(kw) + "'");
    }
  }

  Workload w;
  w.pid = pid;
  w.page_shift = page_shift;
  for (auto& [id, ops] : blocks) w.pipelines.push_back(std::move(ops));
  w.declared_pages = w.touched_pages();
  return w;
}

Workload parse_trace(const std::string& text, Pid pid, unsigned page_shift) {
  std::istringstream in(text);
  return parse_trace(in, pid, page_shift);
}

void write_trace(std::ostream& out, const Workload& w) {
  for (std::size_t i = 0; i < w.pipelines.size(); ++i) {
    out << "P " << i << '\n';
    for (const Op& o : w.pipelines[i]) {
      if (auto* c = std::get_if<op::Comp>(&o)) out << "C " << c->duration << '\n';
      else if (auto* l = std::get_if<op::Load>(&o)) out << "L " << to_hex(l->addr.value) << '\n';
      else if (auto* s = std::get_if<op::Store>(&o)) out << "S " << to_hex(s->addr.value) << '\n';
      else if (auto* d = std::get_if<op::DmaCtl>(&o)) out << "D " << dma_reg_name(d->reg) << ' ' << to_hex(d->addr.value) << '\n';
      else if (auto* q = std::get_if<op::DmaPio>(&o)) out << "Q " << q->reg << '\n';
      else if (auto* m = std::get_if<op::MsgSub>(&o)) out << "M " << m->smids << '\n';
    }
  }
}

std::string format_trace(const Workload& w) {
  std::ostringstream out;
  write_trace(out, w);
  return out.str();
}

}  // namespace aiasim
