#pragma once

#include <cmath>
#include <istream>
#include <string>
#include <utility>
#include <vector>

#include "svf/errors.hpp"
#include "svf/io.hpp"
#include "svf/sampling.hpp"

namespace svf {

/// Observed transaction series. Prices are log-transformed on ingestion, so
/// `log_prices` is the observed path of the log price.
struct TickSeries {
  std::vector<double> times;  // raw timestamps, strictly increasing
  std::vector<double> log_prices;
  long duplicates_collapsed = 0;

  /// View the series as a sampling grid anchored at the first tick plus the
  /// log-price values on it.
  std::pair<SampleGrid, std::vector<double>> to_grid_series() const {
    SampleGrid grid;
    grid.times.clear();
    for (std::size_t i = 0; i < times.size(); ++i) {
      grid.times.push_back(times[i] - times.front());
      if (i > 0) grid.durations.push_back(times[i] - times[i - 1]);
    }
    grid.horizon = grid.times.empty() ? 0.0 : grid.times.back();
    return {std::move(grid), log_prices};
  }
};

/// Parse a CSV tick file with header `time,price`. Rows with a timestamp
/// equal to the previous row collapse to the last price (counted); times must
/// otherwise be strictly increasing and prices strictly positive.
inline TickSeries ingest_ticks(std::istream& in) {
  std::string line;
  long lineno = 0;
  if (!std::getline(in, line)) throw ParseError("empty tick file", 1);
  ++lineno;
  if (detail::split_csv_line(line) != std::vector<std::string_view>{"time", "price"})
    throw ParseError("expected header 'time,price'", lineno);

  TickSeries series;
  std::vector<double> prices;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != 2) throw ParseError("expected 2 fields 'time,price'", lineno);
    const double t = detail::parse_double_field(fields[0], lineno);
    const double p = detail::parse_double_field(fields[1], lineno);
    if (!(p > 0.0)) throw DataError("non-positive price at line " + std::to_string(lineno));
    if (!series.times.empty() && t == series.times.back()) {
      prices.back() = p;  // duplicate timestamp: keep the last price
      ++series.duplicates_collapsed;
      continue;
    }
    if (!series.times.empty() && t < series.times.back())
      throw DataError("non-increasing time at line " + std::to_string(lineno));
    series.times.push_back(t);
    prices.push_back(p);
  }
  if (series.times.empty()) throw DataError("tick file has no data rows");
  series.log_prices.reserve(prices.size());
  for (double p : prices) series.log_prices.push_back(std::log(p));
  return series;
}

}  // namespace svf
