#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "svf/errors.hpp"
#include "svf/rng.hpp"

namespace svf {

enum class SchemeKind {
  deterministic,  // all durations equal to the mean
  exponential,    // Poisson arrivals
  gamma,          // gamma durations with given shape
  uniform,        // durations uniform on [mean*(1-h), mean*(1+h)]
};

inline const char* to_string(SchemeKind k) {
  switch (k) {
    case SchemeKind::deterministic: return "deterministic";
    case SchemeKind::exponential: return "exponential";
    case SchemeKind::gamma: return "gamma";
    case SchemeKind::uniform: return "uniform";
  }
  return "?";
}

/// An i.i.d. duration law with mean `mean_duration`. The scale families used
/// here keep the dispersion constant Var(tau)/mean^2 invariant as the mean
/// shrinks, so the same scheme can be reused across sampling rates.
struct SamplingScheme {
  SchemeKind kind = SchemeKind::exponential;
  double mean_duration = 0.0;
  double shape = 1.0;            // gamma only
  double half_width_frac = 0.5;  // uniform only, in [0,1)

  void validate() const {
    if (!(mean_duration > 0.0) || !std::isfinite(mean_duration))
      throw ParameterError("SamplingScheme: mean_duration must be positive");
    if (kind == SchemeKind::gamma && (!(shape > 0.0) || !std::isfinite(shape)))
      throw ParameterError("SamplingScheme: gamma shape must be positive");
    if (kind == SchemeKind::uniform && !(half_width_frac >= 0.0 && half_width_frac < 1.0))
      throw ParameterError("SamplingScheme: uniform half_width_frac must lie in [0,1)");
  }

  SamplingScheme with_mean(double mean) const {
    SamplingScheme s = *this;
    s.mean_duration = mean;
    return s;
  }

  static SamplingScheme deterministic(double mean) {
    return {SchemeKind::deterministic, mean, 1.0, 0.0};
  }
  static SamplingScheme exponential(double mean) {
    return {SchemeKind::exponential, mean, 1.0, 0.0};
  }
  static SamplingScheme gamma(double mean, double shape) {
    return {SchemeKind::gamma, mean, shape, 0.0};
  }
  static SamplingScheme uniform(double mean, double half_width_frac) {
    return {SchemeKind::uniform, mean, 1.0, half_width_frac};
  }
};

/// Realized sampling times of one replication: t_0 = 0 < t_1 < ... < t_N,
/// with t_N <= horizon. `durations[i]` = times[i+1] - times[i].
struct SampleGrid {
  std::vector<double> times{0.0};
  std::vector<double> durations;
  double horizon = 0.0;

  std::size_t count() const noexcept { return durations.size(); }
  bool empty() const noexcept { return durations.empty(); }
  double last_time() const noexcept { return times.back(); }
};

/// Dispersion constant Var(tau)/mean^2 of the duration law, in closed form.
inline double analytic_M(const SamplingScheme& scheme) {
  scheme.validate();
  switch (scheme.kind) {
    case SchemeKind::deterministic: return 0.0;
    case SchemeKind::exponential: return 1.0;
    case SchemeKind::gamma: return 1.0 / scheme.shape;
    case SchemeKind::uniform:
      return scheme.half_width_frac * scheme.half_width_frac / 3.0;
  }
  return 0.0;
}

/// Draw i.i.d. durations from the scheme's law and accumulate them from 0,
/// keeping every arrival that lands at or before the horizon. The first
/// duration overshooting the horizon is discarded entirely, so the grid ends
/// at the last arrival <= horizon. Deterministic given the seed.
inline SampleGrid gen_sampling_times(const SamplingScheme& scheme, double horizon, Seed rng_seed) {
  scheme.validate();
  if (!(horizon > 0.0) || !std::isfinite(horizon))
    throw ParameterError("gen_sampling_times: horizon must be positive");

  SampleGrid grid;
  grid.horizon = horizon;
  const std::size_t reserve = static_cast<std::size_t>(horizon / scheme.mean_duration * 1.2) + 8;
  grid.times.reserve(reserve);
  grid.durations.reserve(reserve);

  if (scheme.kind == SchemeKind::deterministic) {
    // Multiply rather than accumulate so t_i = i*mean lands on the horizon
    // without accumulated rounding.
    for (std::size_t i = 1;; ++i) {
      const double t = static_cast<double>(i) * scheme.mean_duration;
      if (t > horizon) break;
      grid.durations.push_back(t - grid.times.back());
      grid.times.push_back(t);
    }
    return grid;
  }

  auto engine = make_engine(rng_seed);
  auto draw = [&]() -> double {
    switch (scheme.kind) {
      case SchemeKind::exponential:
        return std::exponential_distribution<double>(1.0 / scheme.mean_duration)(engine);
      case SchemeKind::gamma:
        return std::gamma_distribution<double>(scheme.shape,
                                               scheme.mean_duration / scheme.shape)(engine);
      case SchemeKind::uniform:
        return std::uniform_real_distribution<double>(
            scheme.mean_duration * (1.0 - scheme.half_width_frac),
            scheme.mean_duration * (1.0 + scheme.half_width_frac))(engine);
      default: return scheme.mean_duration;
    }
  };

  double t = 0.0;
  while (true) {
    double tau = draw();
    double next = t + tau;
    while (!(tau > 0.0) || !(next > t)) {  // zero draws have measure zero; redraw
      tau = draw();
      next = t + tau;
    }
    if (next > horizon) break;
    // Store the realized difference so durations[i] == times[i+1] - times[i]
    // holds exactly for consumers.
    grid.durations.push_back(next - t);
    grid.times.push_back(next);
    t = next;
  }
  return grid;
}

struct DurationStats {
  double mean = 0.0;   // sample mean of the durations
  double m_hat = 0.0;  // unbiased sample variance / mean^2
};

inline DurationStats estimate_duration_stats(const SampleGrid& grid) {
  const std::size_t n = grid.count();
  if (n < 2)
    throw InsufficientDataError("estimate_duration_stats: need at least 2 durations");
  double sum = 0.0;
  for (double tau : grid.durations) sum += tau;
  const double mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (double tau : grid.durations) ss += (tau - mean) * (tau - mean);
  const double var = ss / static_cast<double>(n - 1);
  return {mean, var / (mean * mean)};
}

/// Evenness diagnostics for a realized grid at nominal rate n. Reported, not
/// enforced: the underlying conditions are asymptotic statements.
struct RegularityDiagnostics {
  double sum_sq_scaled = 0.0;  // n * sum tau_i^2
  double count_ratio = 0.0;    // N / n
};

inline RegularityDiagnostics check_regularity(const SampleGrid& grid, long n) {
  if (n <= 0) throw ParameterError("check_regularity: nominal rate n must be positive");
  if (grid.empty()) return {0.0, 0.0};
  double ss = 0.0;
  for (double tau : grid.durations) ss += tau * tau;
  return {static_cast<double>(n) * ss,
          static_cast<double>(grid.count()) / static_cast<double>(n)};
}

}  // namespace svf
