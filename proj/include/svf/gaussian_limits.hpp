#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "svf/errors.hpp"
#include "svf/functionals.hpp"
#include "svf/pathsim.hpp"
#include "svf/quadrature.hpp"
#include "svf/rng.hpp"
#include "svf/sampling.hpp"
#include "svf/stats.hpp"

namespace svf {

namespace detail {

// E|U|^p for U ~ N(0,1), p >= 0. Exact double factorial for even integers,
// 2^{p/2} Gamma((p+1)/2) / sqrt(pi) otherwise.
inline double gaussian_abs_moment(double p) {
  if (p == 0.0) return 1.0;
  if (is_integral(p)) {
    const long n = std::lround(p);
    if (n % 2 == 0 && n <= 300) {
      double r = 1.0;
      for (long j = n - 1; j > 1; j -= 2) r *= static_cast<double>(j);
      return r;
    }
  }
  return std::exp2(0.5 * p) * std::tgamma(0.5 * (p + 1.0)) / std::sqrt(M_PI);
}

// E[m(U)] for one factor m(x) = x^p or |x|^p.
inline double gaussian_factor_moment(double p, bool is_abs) {
  if (!is_abs && std::lround(p) % 2 != 0) return 0.0;
  return gaussian_abs_moment(p);
}

// E[m1(U) m2(U)] for two factors sharing the same Gaussian coordinate. The
// product is an odd function iff an odd number of signed odd powers appear.
inline double merged_factor_moment(double pA, bool absA, double pB, bool absB) {
  int odd_signed = 0;
  if (!absA && pA != 0.0 && std::lround(pA) % 2 != 0) ++odd_signed;
  if (!absB && pB != 0.0 && std::lround(pB) % 2 != 0) ++odd_signed;
  if (odd_signed % 2 != 0) return 0.0;
  return gaussian_abs_moment(pA + pB);
}

// A finite sum  sum_j c_j * sigma^{e_j}  evaluated as a function of sigma^2.
// This is what rho and R' reduce to for monomial-sum test functions.
struct SigmaPoly {
  std::vector<std::pair<double, double>> terms;  // (exponent in sigma, coefficient)

  double eval_sigma2(double sigma2) const {
    double acc = 0.0;
    for (const auto& [e, c] : terms) {
      const double half = 0.5 * e;
      double power;
      if (is_integral(half) && half >= 0.0 && half <= 32.0) {
        power = 1.0;
        const int n = static_cast<int>(std::lround(half));
        for (int i = 0; i < n; ++i) power *= sigma2;
      } else {
        power = std::pow(sigma2, half);
      }
      acc += c * power;
    }
    return acc;
  }
};

inline SigmaPoly to_poly(const std::map<double, double>& m) {
  SigmaPoly p;
  p.terms.reserve(m.size());
  for (const auto& [e, c] : m)
    if (c != 0.0) p.terms.emplace_back(e, c);
  return p;
}

inline std::map<double, double> rho_map(const TestFunction& f) {
  std::map<double, double> acc;
  for (const auto& t : f.terms()) {
    double mom = t.coefficient;
    for (std::size_t j = 0; j < t.exponents.size(); ++j) {
      if (t.exponents[j] == 0.0) continue;
      mom *= gaussian_factor_moment(t.exponents[j], t.abs_flags[j]);
      if (mom == 0.0) break;
    }
    if (mom != 0.0) acc[t.total_degree()] += mom;
  }
  return acc;
}

// rho_sigma^{(x)k}(f) = E f(sigma U_1, ..., sigma U_k) as a SigmaPoly.
inline SigmaPoly rho_poly(const TestFunction& f) { return to_poly(rho_map(f)); }

// The lag-overlap sum  sum_{l=-k+1}^{k-1} E[f(window A) f(window B_l)].
// Each pair of monomial terms factorizes coordinate-wise across the union of
// the two windows; coordinates covered by both windows take the merged
// moment. Lags l and -l give equal expectations, so only l >= 0 is computed.
inline std::map<double, double> overlap_map(const TestFunction& f) {
  const int k = f.dimension();
  std::map<double, double> acc;
  for (int lag = 0; lag < k; ++lag) {
    const double weight = lag == 0 ? 1.0 : 2.0;
    for (const auto& ta : f.terms()) {
      for (const auto& tb : f.terms()) {
        double mom = ta.coefficient * tb.coefficient * weight;
        // Union of coordinates: window A at offsets 0..k-1, B at lag..lag+k-1.
        for (int q = 0; q < k + lag && mom != 0.0; ++q) {
          const bool in_a = q < k;
          const bool in_b = q >= lag;
          const auto ja = static_cast<std::size_t>(q);
          const auto jb = static_cast<std::size_t>(q - lag);
          if (in_a && in_b) {
            mom *= merged_factor_moment(ta.exponents[ja], ta.abs_flags[ja] != 0,
                                        tb.exponents[jb], tb.abs_flags[jb] != 0);
          } else if (in_a) {
            if (ta.exponents[ja] != 0.0)
              mom *= gaussian_factor_moment(ta.exponents[ja], ta.abs_flags[ja] != 0);
          } else {
            if (tb.exponents[jb] != 0.0)
              mom *= gaussian_factor_moment(tb.exponents[jb], tb.abs_flags[jb] != 0);
          }
        }
        if (mom != 0.0) acc[ta.total_degree() + tb.total_degree()] += mom;
      }
    }
  }
  return acc;
}

inline std::map<double, double> square_map(const std::map<double, double>& a) {
  std::map<double, double> acc;
  for (const auto& [ea, ca] : a)
    for (const auto& [eb, cb] : a) acc[ea + eb] += ca * cb;
  return acc;
}

// R'_sigma(f,k) = overlap sum - (2k-1-M) rho^2, as a SigmaPoly.
inline SigmaPoly rprime_poly(const TestFunction& f, double M) {
  const double shift = M - (2.0 * f.dimension() - 1.0);
  std::map<double, double> acc = overlap_map(f);
  for (const auto& [e, c] : square_map(rho_map(f))) acc[e] += shift * c;
  return to_poly(acc);
}

inline SigmaPoly rplain_poly(const TestFunction& f) { return rprime_poly(f, 0.0); }

}  // namespace detail

struct McEstimate {
  double value = 0.0;
  double std_error = 0.0;
};

/// Monte Carlo estimate of rho_sigma(f) over `samples` i.i.d. Gaussian
/// vectors. Production fallback for test functions without monomial form.
inline McEstimate rho_mc(const TestFunction& f, double sigma2, std::size_t samples, Seed seed) {
  if (!(sigma2 >= 0.0)) throw ParameterError("rho_mc: sigma2 must be >= 0");
  auto engine = make_engine(seed);
  std::normal_distribution<double> gauss(0.0, std::sqrt(sigma2));
  const auto k = static_cast<std::size_t>(f.dimension());
  std::vector<double> x(k);
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t i = 0; i < samples; ++i) {
    for (auto& xi : x) xi = gauss(engine);
    const double y = f(std::span<const double>(x));
    sum += y;
    sum_sq += y * y;
  }
  const double m = static_cast<double>(samples);
  const double mean = sum / m;
  const double var = std::max(0.0, sum_sq / m - mean * mean);
  return {mean, std::sqrt(var / m)};
}

/// Monte Carlo estimate of R_sigma(f,k) over a (3k-2)-dimensional Gaussian:
/// per draw the full lag sum f(A) sum_l f(B_l) is accumulated, and
/// (2k-1) rho^2 is subtracted with rho estimated from the same draws.
inline McEstimate r_plain_mc(const TestFunction& f, double sigma2, std::size_t samples,
                             Seed seed) {
  if (!(sigma2 >= 0.0)) throw ParameterError("r_plain_mc: sigma2 must be >= 0");
  auto engine = make_engine(seed);
  std::normal_distribution<double> gauss(0.0, std::sqrt(sigma2));
  const int k = f.dimension();
  const auto dim = static_cast<std::size_t>(3 * k - 2);
  std::vector<double> u(dim);
  double sum_y = 0.0, sum_y2 = 0.0, sum_a = 0.0, sum_a2 = 0.0;
  for (std::size_t i = 0; i < samples; ++i) {
    for (auto& ui : u) ui = gauss(engine);
    // Window A sits in the middle, at offsets k-1 .. 2k-2.
    const double fa = f(std::span<const double>(u.data() + (k - 1), static_cast<std::size_t>(k)));
    double y = 0.0;
    for (int lag = -(k - 1); lag <= k - 1; ++lag)
      y += f(std::span<const double>(u.data() + (k - 1 + lag), static_cast<std::size_t>(k)));
    y *= fa;
    sum_y += y;
    sum_y2 += y * y;
    sum_a += fa;
    sum_a2 += fa * fa;
  }
  const double m = static_cast<double>(samples);
  const double mean_y = sum_y / m;
  const double mean_a = sum_a / m;
  const double var_y = std::max(0.0, sum_y2 / m - mean_y * mean_y);
  const double var_a = std::max(0.0, sum_a2 / m - mean_a * mean_a);
  const double value = mean_y - (2.0 * k - 1.0) * mean_a * mean_a;
  // Conservative first-order error bound for the two estimated pieces.
  const double se = std::sqrt(var_y / m) +
                    std::abs(2.0 * (2.0 * k - 1.0) * mean_a) * std::sqrt(var_a / m);
  return {value, se};
}

namespace detail {
constexpr std::size_t kMcFallbackSamples = 1'000'000;
constexpr Seed kMcFallbackMaster = 0x73766d63ull;  // fallback stream tag
constexpr int kQuadratureNodes = 21;

inline Seed mc_fallback_seed(const TestFunction& f) {
  return derive_seed(kMcFallbackMaster, static_cast<std::uint64_t>(f.dimension()), 0,
                     SeedStream::mc);
}
}  // namespace detail

/// rho_sigma^{(x)k}(f) = E f(X), X ~ N(0, sigma2 I_k). Closed form for
/// monomial sums; tensor Gauss-Hermite quadrature for general f with k <= 3;
/// Monte Carlo with a fixed derived seed beyond that.
inline double rho(const TestFunction& f, double sigma2) {
  if (!(sigma2 >= 0.0)) throw ParameterError("rho: sigma2 must be >= 0");
  if (f.has_monomial_form()) return detail::rho_poly(f).eval_sigma2(sigma2);
  if (f.dimension() <= 3)
    return gauss_expect_nd([&f](std::span<const double> x) { return f(x); }, f.dimension(),
                           sigma2, detail::kQuadratureNodes);
  return rho_mc(f, sigma2, detail::kMcFallbackSamples, detail::mc_fallback_seed(f)).value;
}

/// R_sigma(f,k): lag-overlap sum minus (2k-1) rho^2. Closed form for monomial
/// sums via coordinate-wise moment factorization; Monte Carlo otherwise.
inline double r_plain(const TestFunction& f, double sigma2) {
  if (!(sigma2 >= 0.0)) throw ParameterError("r_plain: sigma2 must be >= 0");
  if (f.has_monomial_form()) return detail::rplain_poly(f).eval_sigma2(sigma2);
  return r_plain_mc(f, sigma2, detail::kMcFallbackSamples, detail::mc_fallback_seed(f)).value;
}

/// R'_sigma(f,k) = R_sigma(f,k) + M rho^2.
inline double r_prime(const TestFunction& f, double sigma2, double M) {
  if (!(M >= 0.0)) throw ParameterError("r_prime: M must be >= 0");
  return r_plain(f, sigma2) + M * rho(f, sigma2) * rho(f, sigma2);
}

enum class LimitMethod { closed_form, quadrature, monte_carlo };

inline const char* to_string(LimitMethod m) {
  switch (m) {
    case LimitMethod::closed_form: return "closed_form";
    case LimitMethod::quadrature: return "quadrature";
    case LimitMethod::monte_carlo: return "monte_carlo";
  }
  return "?";
}

/// The deterministic limit quantities of one realized volatility path:
/// integrals of rho and R' along sigma^2(u) up to the last sampling time.
struct LimitQuantities {
  double rho_integral = 0.0;
  double rprime_integral = 0.0;
  double M = 0.0;
  LimitMethod method = LimitMethod::closed_form;
  std::optional<double> mc_std_error;
  long negativity_count = 0;  // fine-grid points where R' < -1e-10
};

namespace detail {

// Integrand table over sigma^2 levels with linear interpolation, for test
// functions without a closed form. Keeps the per-fine-point cost flat.
struct LevelTable {
  std::vector<double> sig2, rho_v, rprime_v;
  double max_se = 0.0;

  double interp(const std::vector<double>& v, double s) const {
    if (sig2.size() == 1) return v[0];
    if (s <= sig2.front()) return v.front();
    if (s >= sig2.back()) return v.back();
    const auto it = std::upper_bound(sig2.begin(), sig2.end(), s);
    const auto hi = static_cast<std::size_t>(it - sig2.begin());
    const double w = (s - sig2[hi - 1]) / (sig2[hi] - sig2[hi - 1]);
    return v[hi - 1] * (1.0 - w) + v[hi] * w;
  }
};

inline LevelTable build_level_table(const TestFunction& f, double lo, double hi, double M) {
  LevelTable table;
  const std::size_t levels = (hi - lo) <= 1e-12 * std::max(1.0, hi) ? 1 : 33;
  for (std::size_t i = 0; i < levels; ++i) {
    const double s = levels == 1
                         ? lo
                         : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(levels - 1);
    double rho_v, r_v, se = 0.0;
    if (f.dimension() <= 3) {
      rho_v = gauss_expect_nd([&f](std::span<const double> x) { return f(x); }, f.dimension(), s,
                              kQuadratureNodes);
    } else {
      const auto est = rho_mc(f, s, kMcFallbackSamples, mc_fallback_seed(f));
      rho_v = est.value;
      se += est.std_error;
    }
    const auto est_r = r_plain_mc(f, s, kMcFallbackSamples, mc_fallback_seed(f));
    r_v = est_r.value + M * rho_v * rho_v;
    se += est_r.std_error;
    table.sig2.push_back(s);
    table.rho_v.push_back(rho_v);
    table.rprime_v.push_back(r_v);
    table.max_se = std::max(table.max_se, se);
  }
  return table;
}

}  // namespace detail

/// Left-Riemann integrals of rho_{sigma_u}(f) and R'_{sigma_u}(f,k) over the
/// path's fine grid, up to the last sampling time. R' negativity beyond the
/// 1e-10 tolerance is counted and reported, not silently accepted.
inline LimitQuantities limit_integrals(const TestFunction& f, const SimulatedPath& path,
                                       double M) {
  if (!(M >= 0.0)) throw ParameterError("limit_integrals: M must be >= 0");
  LimitQuantities lq;
  lq.M = M;
  if (path.fine_times.size() < 2) return lq;

  const auto& s2 = path.fine_sigma2;
  const bool constant_sigma =
      std::all_of(s2.begin(), s2.end(), [&](double v) { return v == s2.front(); });

  auto accumulate = [&](auto&& rho_at, auto&& rprime_at) {
    if (constant_sigma) {
      const double span_t = path.fine_times.back() - path.fine_times.front();
      const double rv = rho_at(s2.front());
      const double pv = rprime_at(s2.front());
      lq.rho_integral = rv * span_t;
      lq.rprime_integral = pv * span_t;
      if (pv < -1e-10) lq.negativity_count = static_cast<long>(s2.size() - 1);
      return;
    }
    for (std::size_t j = 0; j + 1 < path.fine_times.size(); ++j) {
      const double dt = path.fine_times[j + 1] - path.fine_times[j];
      const double pv = rprime_at(s2[j]);
      lq.rho_integral += rho_at(s2[j]) * dt;
      lq.rprime_integral += pv * dt;
      if (pv < -1e-10) ++lq.negativity_count;
    }
  };

  if (f.has_monomial_form()) {
    const detail::SigmaPoly rp = detail::rho_poly(f);
    const detail::SigmaPoly pp = detail::rprime_poly(f, M);
    accumulate([&](double s) { return rp.eval_sigma2(s); },
               [&](double s) { return pp.eval_sigma2(s); });
    lq.method = LimitMethod::closed_form;
    return lq;
  }

  const auto [lo, hi] = std::minmax_element(s2.begin(), s2.end());
  const detail::LevelTable table = detail::build_level_table(f, *lo, *hi, M);
  accumulate([&](double s) { return table.interp(table.rho_v, s); },
             [&](double s) { return table.interp(table.rprime_v, s); });
  lq.method = f.dimension() <= 3 && table.max_se == 0.0 ? LimitMethod::quadrature
                                                        : LimitMethod::monte_carlo;
  if (table.max_se > 0.0)
    lq.mc_std_error = table.max_se * (path.fine_times.back() - path.fine_times.front());
  return lq;
}

/// The studentized statistic of the central limit theorem:
/// [Delta_n V'(f,k) - int rho] / sqrt(Delta_n int R'). Asymptotically N(0,1)
/// conditionally on the volatility path.
inline double studentize(double v_prime_value, const LimitQuantities& lq, double delta_n) {
  if (!(delta_n > 0.0)) throw ParameterError("studentize: delta_n must be positive");
  if (!(lq.rprime_integral > 0.0))
    throw DegenerateVarianceError("studentize: variance integral must be positive");
  return (delta_n * v_prime_value - lq.rho_integral) /
         std::sqrt(delta_n * lq.rprime_integral);
}

struct IvConfidenceInterval {
  double iv_hat = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  double delta_hat = 0.0;  // estimated mean duration
  double m_hat = 0.0;      // estimated duration dispersion
};

/// Feasible confidence interval for integrated volatility from an observed
/// series: IV_hat = Delta_hat * V'(x^2) with Delta_hat = t_N / N, and the
/// plug-in variance
///
///   Delta_hat * [ (2 + M_hat) q_hat - M_hat IV_hat^2 / t_N ],
///   q_hat = Delta_hat * V'(x^4) / 3.
///
/// Normalizing by the estimated mean duration cancels the duration-count
/// fluctuation against the average volatility level, so the dispersion
/// constant enters only through the variability of sigma^2 along the path;
/// for constant volatility the bracket collapses to 2 q_hat. Purely
/// data-driven; no knowledge of the volatility path.
inline IvConfidenceInterval feasible_iv_ci(const SampleGrid& grid, std::span<const double> x,
                                           double confidence) {
  if (!(confidence > 0.0 && confidence < 1.0))
    throw ParameterError("feasible_iv_ci: confidence must lie in (0,1)");
  if (grid.count() < 2)
    throw InsufficientDataError("feasible_iv_ci: need at least 2 increments");

  static const TestFunction x2 = TestFunction::parse("x^2");
  static const TestFunction x4 = TestFunction::parse("x^4");

  const DurationStats ds = estimate_duration_stats(grid);
  const double v2 = v_prime_functional(x2, grid, x).value;
  const double v4 = v_prime_functional(x4, grid, x).value;

  IvConfidenceInterval ci;
  ci.delta_hat = ds.mean;
  ci.m_hat = ds.m_hat;
  ci.iv_hat = ds.mean * v2;
  const double quarticity = ds.mean * v4 / 3.0;
  const double bracket =
      (2.0 + ds.m_hat) * quarticity - ds.m_hat * ci.iv_hat * ci.iv_hat / grid.last_time();
  const double variance = ds.mean * bracket;
  if (!(variance > 0.0))
    throw DegenerateVarianceError("feasible_iv_ci: variance estimate is not positive");
  const double half = normal_quantile(0.5 * (1.0 + confidence)) * std::sqrt(variance);
  ci.lo = ci.iv_hat - half;
  ci.hi = ci.iv_hat + half;
  return ci;
}

inline IvConfidenceInterval feasible_iv_ci(const SimulatedPath& path, double confidence) {
  return feasible_iv_ci(path.grid, path.sample_x, confidence);
}

}  // namespace svf
