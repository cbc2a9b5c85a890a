#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "svf/errors.hpp"
#include "svf/sampling.hpp"

namespace svf {

/// Shortest decimal string that round-trips the double exactly. Used for all
/// data files so re-reading reproduces bit-identical values.
inline std::string format_full(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

/// 12 significant digits, for printed results.
inline std::string format_sig12(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return std::string(buf);
}

namespace detail {

inline double parse_double_field(std::string_view field, long line) {
  double v = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  const auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc{} || res.ptr != last)
    throw ParseError("expected a decimal number, got '" + std::string(field) + "'", line);
  return v;
}

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    std::string_view f = comma == std::string_view::npos ? line.substr(start)
                                                         : line.substr(start, comma - start);
    while (!f.empty() && (f.front() == ' ' || f.front() == '\t')) f.remove_prefix(1);
    while (!f.empty() && (f.back() == ' ' || f.back() == '\t' || f.back() == '\r'))
      f.remove_suffix(1);
    out.push_back(f);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace detail

/// Grid CSV, schema `i,t,tau`: one row per sampling time t_1..t_N (t_0 = 0 is
/// implicit).
inline void write_grid_csv(std::ostream& out, const SampleGrid& grid) {
  out << "i,t,tau\n";
  for (std::size_t i = 0; i < grid.count(); ++i)
    out << (i + 1) << ',' << format_full(grid.times[i + 1]) << ','
        << format_full(grid.durations[i]) << '\n';
}

inline SampleGrid read_grid_csv(std::istream& in) {
  SampleGrid grid;
  std::string line;
  long lineno = 0;
  if (!std::getline(in, line)) throw ParseError("empty grid file", 1);
  ++lineno;
  if (detail::split_csv_line(line) != std::vector<std::string_view>{"i", "t", "tau"})
    throw ParseError("expected header 'i,t,tau'", lineno);
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != 3) throw ParseError("expected 3 fields", lineno);
    const double t = detail::parse_double_field(fields[1], lineno);
    const double tau = detail::parse_double_field(fields[2], lineno);
    if (!(tau > 0.0) || t <= grid.times.back())
      throw DataError("grid times must be strictly increasing with positive durations");
    grid.times.push_back(t);
    grid.durations.push_back(tau);
  }
  grid.horizon = grid.times.back();
  return grid;
}

/// Path CSV, schema `time,x,sigma2`: one row per sampling time including
/// t = 0.
inline void write_path_csv(std::ostream& out, const SampleGrid& grid,
                           std::span<const double> x, std::span<const double> sigma2) {
  out << "time,x,sigma2\n";
  for (std::size_t i = 0; i < grid.times.size(); ++i)
    out << format_full(grid.times[i]) << ',' << format_full(x[i]) << ','
        << format_full(sigma2[i]) << '\n';
}

struct PathData {
  SampleGrid grid;
  std::vector<double> x;
  std::vector<double> sigma2;
};

inline PathData read_path_csv(std::istream& in) {
  std::string line;
  long lineno = 0;
  if (!std::getline(in, line)) throw ParseError("empty path file", 1);
  ++lineno;
  if (detail::split_csv_line(line) != std::vector<std::string_view>{"time", "x", "sigma2"})
    throw ParseError("expected header 'time,x,sigma2'", lineno);
  std::vector<double> times, xs, s2s;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != 3) throw ParseError("expected 3 fields", lineno);
    times.push_back(detail::parse_double_field(fields[0], lineno));
    xs.push_back(detail::parse_double_field(fields[1], lineno));
    s2s.push_back(detail::parse_double_field(fields[2], lineno));
  }
  if (times.empty()) throw DataError("path file has no rows");
  PathData pd;
  // Anchor the grid at the first observation.
  pd.grid.times.clear();
  for (std::size_t i = 0; i < times.size(); ++i) {
    const double t = times[i] - times.front();
    if (i > 0) {
      const double tau = times[i] - times[i - 1];
      if (!(tau > 0.0)) throw DataError("path times must be strictly increasing");
      pd.grid.durations.push_back(tau);
    }
    pd.grid.times.push_back(t);
  }
  pd.grid.horizon = pd.grid.times.back();
  pd.x = std::move(xs);
  pd.sigma2 = std::move(s2s);
  return pd;
}

}  // namespace svf
