#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <random>
#include <vector>

#include "svf/errors.hpp"
#include "svf/rng.hpp"
#include "svf/sampling.hpp"

namespace svf {

enum class DriftKind { constant, linear, custom };

/// Drift b(t) of the log price. `linear` is b(t) = a + b_slope*t; `custom`
/// takes an arbitrary callable plus a declared bound.
struct DriftSpec {
  DriftKind kind = DriftKind::constant;
  double value = 0.0;  // constant
  double a = 0.0, b_slope = 0.0;
  std::function<double(double)> fn;
  double bound = 0.0;  // declared sup bound for custom drifts

  double operator()(double t) const {
    switch (kind) {
      case DriftKind::constant: return value;
      case DriftKind::linear: return a + b_slope * t;
      case DriftKind::custom: return fn(t);
    }
    return 0.0;
  }

  static DriftSpec constant(double c) {
    DriftSpec d;
    d.value = c;
    return d;
  }
  static DriftSpec linear(double a, double slope) {
    DriftSpec d;
    d.kind = DriftKind::linear;
    d.a = a;
    d.b_slope = slope;
    return d;
  }
  static DriftSpec custom(std::function<double(double)> f, double bound) {
    DriftSpec d;
    d.kind = DriftKind::custom;
    d.fn = std::move(f);
    d.bound = bound;
    return d;
  }
};

enum class VolKind { constant, linear, custom_fn, cir, lognormal_ou };

struct CirParams {
  double kappa = 1.0;  // mean-reversion speed
  double theta = 1.0;  // long-run variance level
  double xi = 0.5;     // vol-of-vol
  double v0 = 1.0;     // initial variance
};

struct LogOuParams {
  double kappa = 1.0;  // mean reversion of ln(variance)
  double theta = 1.0;  // long-run variance level (mean of ln v is ln theta)
  double xi = 0.5;     // diffusion of ln(variance)
  double v0 = 1.0;
};

/// Multiplicative compound-Poisson jumps on the variance: at Poisson(lambda)
/// arrival times, v <- v * exp(N(mean_log, sd_log^2)).
struct VolJumpSpec {
  double intensity = 0.0;
  double mean_log = 0.0;
  double sd_log = 0.0;
};

/// Variance process sigma^2(t). `linear` is sigma^2(t) = a + b*t (must stay
/// nonnegative over the horizon used); `custom_fn` is any deterministic map.
struct VolSpec {
  VolKind kind = VolKind::constant;
  double sigma2 = 1.0;  // constant
  double a = 0.0, b_slope = 0.0;
  std::function<double(double)> fn;
  CirParams cir;
  LogOuParams logou;

  bool stochastic() const noexcept {
    return kind == VolKind::cir || kind == VolKind::lognormal_ou;
  }

  double deterministic_value(double t) const {
    switch (kind) {
      case VolKind::constant: return sigma2;
      case VolKind::linear: return a + b_slope * t;
      case VolKind::custom_fn: return fn(t);
      default: break;
    }
    return 0.0;
  }

  double initial_value() const {
    switch (kind) {
      case VolKind::cir: return cir.v0;
      case VolKind::lognormal_ou: return logou.v0;
      default: return deterministic_value(0.0);
    }
  }

  static VolSpec constant(double s2) {
    VolSpec v;
    v.sigma2 = s2;
    return v;
  }
  static VolSpec linear(double a, double slope) {
    VolSpec v;
    v.kind = VolKind::linear;
    v.a = a;
    v.b_slope = slope;
    return v;
  }
  static VolSpec custom(std::function<double(double)> f) {
    VolSpec v;
    v.kind = VolKind::custom_fn;
    v.fn = std::move(f);
    return v;
  }
  static VolSpec cir_model(double kappa, double theta, double xi, double v0) {
    VolSpec v;
    v.kind = VolKind::cir;
    v.cir = {kappa, theta, xi, v0};
    return v;
  }
  static VolSpec lognormal_ou_model(double kappa, double theta, double xi, double v0) {
    VolSpec v;
    v.kind = VolKind::lognormal_ou;
    v.logou = {kappa, theta, xi, v0};
    return v;
  }
};

/// Parameters of the jointly simulated (sigma, X) model:
///   dX_t = b(t) dt + sigma_t dW_t
struct ModelSpec {
  double x0 = 0.0;
  DriftSpec drift;
  VolSpec vol;
  double leverage = 0.0;  // corr(price driver, variance driver), in [-1,1]
  std::optional<VolJumpSpec> vol_jumps;
  bool cir_truncation = true;  // full truncation at 0 for the CIR scheme

  void validate() const {
    if (!std::isfinite(x0)) throw ParameterError("ModelSpec: x0 must be finite");
    if (!(leverage >= -1.0 && leverage <= 1.0))
      throw ParameterError("ModelSpec: leverage must lie in [-1,1]");
    switch (vol.kind) {
      case VolKind::constant:
        if (!(vol.sigma2 >= 0.0)) throw ParameterError("ModelSpec: constant sigma^2 must be >= 0");
        break;
      case VolKind::cir: {
        const auto& c = vol.cir;
        if (!(c.kappa >= 0.0 && c.theta >= 0.0 && c.xi >= 0.0 && c.v0 >= 0.0))
          throw ParameterError("ModelSpec: CIR parameters must be nonnegative");
        if (!cir_truncation && 2.0 * c.kappa * c.theta < c.xi * c.xi)
          throw ParameterError(
              "ModelSpec: CIR Feller condition 2*kappa*theta >= xi^2 violated and truncation "
              "is disabled");
        break;
      }
      case VolKind::lognormal_ou: {
        const auto& o = vol.logou;
        if (!(o.kappa >= 0.0 && o.theta > 0.0 && o.xi >= 0.0 && o.v0 > 0.0))
          throw ParameterError("ModelSpec: lognormal-OU requires theta > 0, v0 > 0");
        break;
      }
      case VolKind::linear:
      case VolKind::custom_fn: break;
    }
    if (vol_jumps) {
      if (!(vol_jumps->intensity >= 0.0) || !(vol_jumps->sd_log >= 0.0))
        throw ParameterError("ModelSpec: vol jump intensity and sd_log must be >= 0");
    }
    if (drift.kind == DriftKind::custom) {
      if (!drift.fn) throw ParameterError("ModelSpec: custom drift requires a callable");
      if (!std::isfinite(drift.bound))
        throw ParameterError("ModelSpec: custom drift requires a finite declared bound");
    }
    if (vol.kind == VolKind::custom_fn && !vol.fn)
      throw ParameterError("ModelSpec: custom vol requires a callable");
  }
};

/// Jointly simulated variance and log price. The variance path is kept on the
/// fine grid (sampling times plus sub-steps of length <= max_step); the log
/// price is kept at sampling times only.
struct SimulatedPath {
  std::vector<double> fine_times;
  std::vector<double> fine_sigma2;
  std::vector<double> sample_x;       // X(t_i), including X(0) = x0
  std::vector<double> sample_sigma2;  // sigma^2(t_i)
  SampleGrid grid;
};

/// Euler-Maruyama simulation of (sigma^2, X) on the given grid. Each duration
/// is split into sub-steps of length <= max_step. The variance advances by
/// full-truncation Euler for CIR, exactly in log scale for lognormal-OU, and
/// by direct evaluation for deterministic models; X then advances with the
/// left-endpoint spot volatility. Sampling times must come from a seed stream
/// never mixed with `rng_seed` (independence of times and drivers).
inline SimulatedPath simulate_path(const ModelSpec& model, const SampleGrid& grid,
                                   double max_step, Seed rng_seed) {
  model.validate();
  if (!(max_step > 0.0) || !std::isfinite(max_step))
    throw ParameterError("simulate_path: max_step must be positive");

  SimulatedPath path;
  path.grid = grid;

  auto engine = make_engine(rng_seed);
  std::normal_distribution<double> gauss;

  // Jump times and multipliers are drawn up front so the diffusion draw
  // sequence does not depend on where the jumps land.
  std::vector<std::pair<double, double>> jumps;
  if (model.vol_jumps && model.vol_jumps->intensity > 0.0 && !grid.empty()) {
    std::exponential_distribution<double> gap(model.vol_jumps->intensity);
    double tj = gap(engine);
    while (tj <= grid.last_time()) {
      const double mult = std::exp(model.vol_jumps->mean_log +
                                   model.vol_jumps->sd_log * gauss(engine));
      jumps.emplace_back(tj, mult);
      tj += gap(engine);
    }
  }
  std::size_t next_jump = 0;

  const bool stochastic_vol = model.vol.stochastic();
  const double rho = model.leverage;
  const double rho_orth = std::sqrt(std::max(0.0, 1.0 - rho * rho));

  double v = model.vol.initial_value();  // current variance state
  double x = model.x0;

  const std::size_t n_fine_guess = grid.count() * 4 + 8;
  path.fine_times.reserve(n_fine_guess);
  path.fine_sigma2.reserve(n_fine_guess);
  path.fine_times.push_back(0.0);
  path.fine_sigma2.push_back(std::max(v, 0.0));
  path.sample_x.reserve(grid.times.size());
  path.sample_sigma2.reserve(grid.times.size());
  path.sample_x.push_back(x);
  path.sample_sigma2.push_back(std::max(v, 0.0));

  for (std::size_t i = 0; i < grid.count(); ++i) {
    const double t_left_total = grid.times[i];
    const double t_right_total = grid.times[i + 1];
    const double tau = grid.durations[i];
    const auto n_sub = static_cast<std::size_t>(std::ceil(tau / max_step));
    const std::size_t m = n_sub == 0 ? 1 : n_sub;
    const double h = tau / static_cast<double>(m);
    const double sqrt_h = std::sqrt(h);

    for (std::size_t j = 0; j < m; ++j) {
      const double s_left = t_left_total + static_cast<double>(j) * h;
      const double s_right = (j + 1 == m) ? t_right_total
                                          : t_left_total + static_cast<double>(j + 1) * h;
      const double spot_var = std::max(v, 0.0);

      double z_vol = 0.0;
      double z_price;
      if (stochastic_vol) {
        z_vol = gauss(engine);
        z_price = rho * z_vol + rho_orth * gauss(engine);
      } else {
        z_price = gauss(engine);
      }

      x += model.drift(s_left) * h + std::sqrt(spot_var) * sqrt_h * z_price;

      switch (model.vol.kind) {
        case VolKind::constant: break;
        case VolKind::linear:
        case VolKind::custom_fn:
          v = model.vol.deterministic_value(s_right);
          break;
        case VolKind::cir: {
          const auto& c = model.vol.cir;
          v = v + c.kappa * (c.theta - spot_var) * h + c.xi * std::sqrt(spot_var) * sqrt_h * z_vol;
          break;
        }
        case VolKind::lognormal_ou: {
          const auto& o = model.vol.logou;
          const double mu = std::log(o.theta);
          const double decay = std::exp(-o.kappa * h);
          const double stddev = o.kappa > 0.0
                                    ? o.xi * std::sqrt((1.0 - decay * decay) / (2.0 * o.kappa))
                                    : o.xi * sqrt_h;
          v = std::exp(mu + (std::log(v) - mu) * decay + stddev * z_vol);
          break;
        }
      }

      while (next_jump < jumps.size() && jumps[next_jump].first <= s_right) {
        v *= jumps[next_jump].second;
        ++next_jump;
      }

      path.fine_times.push_back(s_right);
      path.fine_sigma2.push_back(std::max(v, 0.0));
    }
    path.sample_x.push_back(x);
    path.sample_sigma2.push_back(std::max(v, 0.0));
  }
  return path;
}

/// Left-endpoint Riemann sum of g(sigma^2(u)) du over the fine grid, i.e. up
/// to the last sampling time.
template <typename G>
double integrate_on_fine_grid(const SimulatedPath& path, G&& g) {
  double acc = 0.0;
  for (std::size_t j = 0; j + 1 < path.fine_times.size(); ++j)
    acc += g(path.fine_sigma2[j]) * (path.fine_times[j + 1] - path.fine_times[j]);
  return acc;
}

}  // namespace svf
