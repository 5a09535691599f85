// SPDX-License-Identifier: Apache-2.0
//
// Plain-text artifacts: deterministic number formatting, CSV rows, NoC trace
// files and state digests.
#pragma once

#include <charconv>
#include <cstdio>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "hima/noc.hpp"

namespace hima {

/// Shortest round-trip decimal form, "." separator, independent of locale.
inline std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string csv_field(const std::string& s) { return s; }
inline std::string csv_field(const char* s) { return s; }
inline std::string csv_field(std::string_view s) { return std::string(s); }
inline std::string csv_field(double v) { return format_double(v); }
inline std::string csv_field(bool v) { return v ? "1" : "0"; }
template <class T>
  requires std::is_integral_v<T>
std::string csv_field(T v) {
  return std::to_string(v);
}

/// Writes one LF-terminated CSV row.
template <class... Fields>
void write_csv_row(std::ostream& os, const Fields&... fields) {
  bool first = true;
  ((os << (first ? "" : ",") << csv_field(fields), first = false), ...);
  os << '\n';
}

/// FNV-1a over the IEEE-754 bit patterns of the values.
inline std::uint64_t fnv1a_digest(std::span<const double> values, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (double v : values) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    for (int b = 0; b < 8; ++b) {
      h ^= (bits >> (8 * b)) & 0xffU;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// ---------------------------------------------------------------------------
// NoC traces

inline constexpr std::string_view kTraceHeader = "cycle,src,dst,words,tag";

inline void write_trace_csv(std::ostream& os, const TrafficTrace& trace) {
  os << kTraceHeader << '\n';
  for (const auto& m : trace) write_csv_row(os, m.cycle, m.src, m.dst, m.words, m.tag);
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

template <class T>
T parse_unsigned(const std::string& s, const char* what, std::size_t line_no) {
  T v{};
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw std::invalid_argument("trace line " + std::to_string(line_no) + ": bad " + what + " '" + s + "'");
  return v;
}

}  // namespace detail

/// Reads `cycle,src,dst,words,tag` rows; the header line is required.
inline TrafficTrace read_trace_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::invalid_argument("trace: empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kTraceHeader) throw std::invalid_argument("trace: expected header '" + std::string(kTraceHeader) + "'");
  TrafficTrace trace;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto f = detail::split_csv_line(line);
    if (f.size() != 5) throw std::invalid_argument("trace line " + std::to_string(line_no) + ": expected 5 fields");
    Message m;
    m.cycle = detail::parse_unsigned<std::uint64_t>(f[0], "cycle", line_no);
    m.src = detail::parse_unsigned<std::size_t>(f[1], "src", line_no);
    m.dst = detail::parse_unsigned<std::size_t>(f[2], "dst", line_no);
    m.words = detail::parse_unsigned<std::size_t>(f[3], "words", line_no);
    m.tag = f[4];
    trace.push_back(std::move(m));
  }
  return trace;
}

/// Per-link utilization: `link,src,dst,port,flits`.
inline void write_link_csv(std::ostream& os, const Topology& topo, const NocReport& r) {
  write_csv_row(os, "link", "src", "dst", "port", "flits");
  for (std::size_t l = 0; l < topo.links().size(); ++l) {
    const auto& link = topo.links()[l];
    write_csv_row(os, l, link.from, link.to, to_string(link.port), r.link_flits[l]);
  }
}

/// Per-message completion: `message,src,dst,words,tag,hops,finish_cycle`.
inline void write_message_csv(std::ostream& os, const TrafficTrace& trace, const NocReport& r) {
  write_csv_row(os, "message", "src", "dst", "words", "tag", "hops", "finish_cycle");
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const auto& m = trace[i];
    write_csv_row(os, i, m.src, m.dst, m.words, m.tag, r.message_hops[i], r.message_finish[i]);
  }
}

}  // namespace hima
