#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <mutex>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "svf/errors.hpp"
#include "svf/functionals.hpp"
#include "svf/gaussian_limits.hpp"
#include "svf/io.hpp"
#include "svf/pathsim.hpp"
#include "svf/rng.hpp"
#include "svf/sampling.hpp"
#include "svf/stats.hpp"

namespace svf {

// ---------------------------------------------------------------------------
// Standalone statistics used by the harness
// ---------------------------------------------------------------------------

struct KsResult {
  double d = 0.0;
  double p_value = 0.0;
};

/// One-sample Kolmogorov-Smirnov test against N(0,1). The p-value uses the
/// Kolmogorov series Q(lambda) = 2 sum_j (-1)^{j-1} exp(-2 j^2 lambda^2) at
/// lambda = (sqrt(m) + 0.12 + 0.11/sqrt(m)) * D, truncated when the terms
/// drop below 1e-10.
inline KsResult ks_test(std::span<const double> samples) {
  const std::size_t m = samples.size();
  if (m < 10) throw InsufficientDataError("ks_test: need at least 10 samples");
  std::vector<double> s(samples.begin(), samples.end());
  std::sort(s.begin(), s.end());
  double d = 0.0;
  const double dm = static_cast<double>(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double cdf = normal_cdf(s[i]);
    d = std::max(d, std::max(static_cast<double>(i + 1) / dm - cdf,
                             cdf - static_cast<double>(i) / dm));
  }
  const double lambda = (std::sqrt(dm) + 0.12 + 0.11 / std::sqrt(dm)) * d;
  double p;
  if (lambda < 1e-6) {
    p = 1.0;
  } else {
    p = 0.0;
    double sign = 1.0;
    for (long j = 1; j <= 500000; ++j) {
      const double term = 2.0 * std::exp(-2.0 * lambda * lambda * static_cast<double>(j) *
                                         static_cast<double>(j));
      p += sign * term;
      if (term < 1e-10) break;
      sign = -sign;
    }
  }
  return {d, std::clamp(p, 0.0, 1.0)};
}

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

/// OLS of log(rms) on log(delta_n) over (delta_n, rms) pairs.
inline RateFit rate_fit(std::span<const std::pair<double, double>> pairs) {
  if (pairs.size() < 3) throw ParameterError("rate_fit: need at least 3 pairs");
  std::vector<double> xs, ys;
  xs.reserve(pairs.size());
  ys.reserve(pairs.size());
  for (const auto& [delta, rms] : pairs) {
    if (!(delta > 0.0) || !(rms > 0.0))
      throw ParameterError("rate_fit: deltas and rms errors must be positive");
    xs.push_back(std::log(delta));
    ys.push_back(std::log(rms));
  }
  const double xbar = sample_mean(xs);
  const double ybar = sample_mean(ys);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - xbar) * (xs[i] - xbar);
    sxy += (xs[i] - xbar) * (ys[i] - ybar);
    syy += (ys[i] - ybar) * (ys[i] - ybar);
  }
  if (sxx <= 0.0) throw ParameterError("rate_fit: singular design (identical delta values)");
  RateFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = ybar - fit.slope * xbar;
  const double ss_res = syy - fit.slope * fit.slope * sxx;
  fit.r2 = syy > 0.0 ? 1.0 - std::max(0.0, ss_res) / syy : 1.0;
  return fit;
}

namespace detail {

/// Run fn(0..count-1) on up to `threads` workers. Replication results must be
/// written into preassigned slots so assembly order never depends on thread
/// scheduling.
template <typename Fn>
void parallel_for(long count, int threads, Fn&& fn) {
  int t = threads > 0 ? threads : static_cast<int>(std::thread::hardware_concurrency());
  t = static_cast<int>(std::min<long>(std::max(t, 1), std::max<long>(count, 1)));
  if (t <= 1) {
    for (long i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<long> next{0};
  std::atomic<bool> failed{false};
  std::mutex err_mutex;
  std::exception_ptr error;
  auto worker = [&]() {
    while (!failed.load(std::memory_order_relaxed)) {
      const long i = next.fetch_add(1, std::memory_order_relaxed);
      if (i >= count) break;
      try {
        fn(i);
      } catch (...) {
        std::scoped_lock lock(err_mutex);
        if (!error) error = std::current_exception();
        failed.store(true, std::memory_order_relaxed);
        break;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(t));
  for (int i = 0; i < t; ++i) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

/// rho_sigma(f) as a cheap per-point evaluator: closed form for monomial
/// sums, otherwise a quadrature/MC table over the sigma^2 range.
struct RhoEvaluator {
  bool closed = false;
  SigmaPoly poly;
  std::vector<double> sig2, vals;

  static RhoEvaluator build(const TestFunction& f, double lo, double hi) {
    RhoEvaluator ev;
    if (f.has_monomial_form()) {
      ev.closed = true;
      ev.poly = rho_poly(f);
      return ev;
    }
    const std::size_t levels = (hi - lo) <= 1e-12 * std::max(1.0, hi) ? 1 : 33;
    for (std::size_t i = 0; i < levels; ++i) {
      const double s =
          levels == 1 ? lo
                      : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(levels - 1);
      double v;
      if (f.dimension() <= 3) {
        v = gauss_expect_nd([&f](std::span<const double> x) { return f(x); }, f.dimension(), s,
                            kQuadratureNodes);
      } else {
        v = rho_mc(f, s, kMcFallbackSamples, mc_fallback_seed(f)).value;
      }
      ev.sig2.push_back(s);
      ev.vals.push_back(v);
    }
    return ev;
  }

  double operator()(double s) const {
    if (closed) return poly.eval_sigma2(s);
    if (sig2.size() == 1) return vals[0];
    if (s <= sig2.front()) return vals.front();
    if (s >= sig2.back()) return vals.back();
    const auto it = std::upper_bound(sig2.begin(), sig2.end(), s);
    const auto hi = static_cast<std::size_t>(it - sig2.begin());
    const double w = (s - sig2[hi - 1]) / (sig2[hi] - sig2[hi - 1]);
    return vals[hi - 1] * (1.0 - w) + vals[hi] * w;
  }
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Experiment configuration and report
// ---------------------------------------------------------------------------

enum class ExperimentMode { lln, clt };

inline const char* to_string(ExperimentMode m) {
  return m == ExperimentMode::lln ? "lln" : "clt";
}

struct ExperimentConfig {
  SamplingScheme scheme;  // its mean_duration is overridden per n as horizon/n
  ModelSpec model;
  TestFunction f = TestFunction::parse("x^2");
  double horizon = 1.0;
  std::vector<long> n_grid{500, 1000, 2000, 4000, 8000};
  long replications = 0;  // 0 = mode default (lln: 200, clt: 2000)
  Seed master_seed = 42;
  ExperimentMode mode = ExperimentMode::lln;
  double max_step_frac = 0.25;  // max_step = max_step_frac * delta_n
  int threads = 0;              // 0 = hardware concurrency; never affects results
  int sup_checkpoints = 0;      // lln: take the max error over this many checkpoints
  bool synthetic_null = false;  // clt: draw statistics directly from N(0,1)

  long effective_replications() const {
    if (replications > 0) return replications;
    return mode == ExperimentMode::clt ? 2000 : 200;
  }

  void validate() const {
    if (!(horizon > 0.0)) throw ParameterError("ExperimentConfig: horizon must be positive");
    if (n_grid.empty()) throw ParameterError("ExperimentConfig: n_grid must be nonempty");
    for (std::size_t i = 0; i < n_grid.size(); ++i) {
      if (n_grid[i] <= 0) throw ParameterError("ExperimentConfig: n values must be positive");
      if (i > 0 && n_grid[i] <= n_grid[i - 1])
        throw ParameterError("ExperimentConfig: n_grid must be strictly increasing");
    }
    if (replications < 0) throw ParameterError("ExperimentConfig: replications must be >= 1");
    if (!(max_step_frac > 0.0))
      throw ParameterError("ExperimentConfig: max_step_frac must be positive");
    if (sup_checkpoints < 0)
      throw ParameterError("ExperimentConfig: sup_checkpoints must be >= 0");
    model.validate();
    SamplingScheme probe = scheme.with_mean(1.0);
    probe.validate();
  }
};

struct Histogram {
  double lo = -5.0;
  double hi = 5.0;
  std::vector<long> counts;
  long below = 0;
  long above = 0;
};

struct PerNStats {
  long n = 0;
  double delta_n = 0.0;
  std::vector<double> values;  // per-replication error (lln) or statistic (clt)
  double rms = 0.0;
  Moments moments;
  std::optional<Histogram> histogram;  // clt mode
};

struct ExperimentReport {
  ExperimentConfig config;
  std::vector<PerNStats> per_n;
  std::optional<KsResult> ks;       // clt: for the largest n
  long ks_n = 0;
  std::optional<RateFit> rate_fit;  // lln with >= 3 rates
  std::vector<std::string> warnings;
  double wall_seconds = 0.0;  // measured; not part of the serialized body

  std::string to_json(int indent = 2) const;
  void write_stats_csv(std::ostream& out) const;
};

namespace detail {

inline Histogram make_histogram(std::span<const double> values, double lo = -5.0,
                                double hi = 5.0, std::size_t bins = 40) {
  Histogram h;
  h.lo = lo;
  h.hi = hi;
  h.counts.assign(bins, 0);
  const double width = (hi - lo) / static_cast<double>(bins);
  for (double v : values) {
    if (v < lo) {
      ++h.below;
    } else if (v >= hi) {
      ++h.above;
    } else {
      ++h.counts[std::min(static_cast<std::size_t>((v - lo) / width), bins - 1)];
    }
  }
  return h;
}

// Terminal LLN error: delta_n V'(f,k) - int_0^{t_N} rho du.
inline double lln_error_terminal(const TestFunction& f, const SimulatedPath& path,
                                 double delta_n, const RhoEvaluator& rho_eval) {
  const double v = v_prime_functional(f, path).value;
  const double rho_int = integrate_on_fine_grid(path, [&](double s) { return rho_eval(s); });
  return delta_n * v - rho_int;
}

// Checkpointed LLN error: the max over checkpoint times s_c = c*T/C of
// |delta_n V'(f,k)_{s_c} - int_0^{t_{N_{s_c}}} rho du|, approximating the
// uniform (sup over s <= T) convergence statement.
inline double lln_error_checkpointed(const TestFunction& f, const SimulatedPath& path,
                                     double delta_n, const RhoEvaluator& rho_eval,
                                     int checkpoints, double horizon) {
  const auto k = static_cast<std::size_t>(f.dimension());
  const auto& grid = path.grid;
  const std::size_t n_inc = grid.count();

  std::vector<double> norm_inc(n_inc);
  for (std::size_t i = 0; i < n_inc; ++i)
    norm_inc[i] = (path.sample_x[i + 1] - path.sample_x[i]) / std::sqrt(grid.durations[i]);

  // prefix_v[w] = sum of the first w window values.
  std::vector<double> prefix_v(n_inc >= k ? n_inc - k + 2 : 1, 0.0);
  if (n_inc >= k)
    for (std::size_t i = 0; i + k <= n_inc; ++i)
      prefix_v[i + 1] = prefix_v[i] + f(std::span<const double>(norm_inc.data() + i, k));

  double worst = 0.0;
  std::size_t fine_j = 0;
  double rho_prefix = 0.0;
  for (int c = 1; c <= checkpoints; ++c) {
    const double s_c = horizon * static_cast<double>(c) / static_cast<double>(checkpoints);
    const auto it = std::upper_bound(grid.times.begin(), grid.times.end(), s_c);
    const auto count_le = static_cast<std::size_t>(it - grid.times.begin());  // includes t_0
    const std::size_t n_c = count_le - 1;
    const double cut = grid.times[n_c];
    while (fine_j + 1 < path.fine_times.size() && path.fine_times[fine_j + 1] <= cut) {
      rho_prefix += rho_eval(path.fine_sigma2[fine_j]) *
                    (path.fine_times[fine_j + 1] - path.fine_times[fine_j]);
      ++fine_j;
    }
    const std::size_t windows = n_c >= k ? n_c - k + 1 : 0;
    const double v_c = n_inc >= k ? prefix_v[std::min(windows, n_inc - k + 1)] : 0.0;
    worst = std::max(worst, std::abs(delta_n * v_c - rho_prefix));
  }
  return worst;
}

inline nlohmann::json scheme_json(const SamplingScheme& s) {
  return {{"kind", to_string(s.kind)},
          {"shape", s.shape},
          {"half_width_frac", s.half_width_frac},
          {"mean_duration_rule", "horizon/n"}};
}

inline nlohmann::json model_json(const ModelSpec& m) {
  nlohmann::json drift;
  switch (m.drift.kind) {
    case DriftKind::constant: drift = {{"kind", "constant"}, {"value", m.drift.value}}; break;
    case DriftKind::linear:
      drift = {{"kind", "linear"}, {"a", m.drift.a}, {"b", m.drift.b_slope}};
      break;
    case DriftKind::custom: drift = {{"kind", "custom"}, {"bound", m.drift.bound}}; break;
  }
  nlohmann::json vol;
  switch (m.vol.kind) {
    case VolKind::constant: vol = {{"kind", "constant"}, {"sigma2", m.vol.sigma2}}; break;
    case VolKind::linear:
      vol = {{"kind", "linear"}, {"a", m.vol.a}, {"b", m.vol.b_slope}};
      break;
    case VolKind::custom_fn: vol = {{"kind", "custom"}}; break;
    case VolKind::cir:
      vol = {{"kind", "cir"},
             {"kappa", m.vol.cir.kappa},
             {"theta", m.vol.cir.theta},
             {"xi", m.vol.cir.xi},
             {"v0", m.vol.cir.v0}};
      break;
    case VolKind::lognormal_ou:
      vol = {{"kind", "lognormal_ou"},
             {"kappa", m.vol.logou.kappa},
             {"theta", m.vol.logou.theta},
             {"xi", m.vol.logou.xi},
             {"v0", m.vol.logou.v0}};
      break;
  }
  nlohmann::json jumps = nullptr;
  if (m.vol_jumps)
    jumps = {{"intensity", m.vol_jumps->intensity},
             {"mean_log", m.vol_jumps->mean_log},
             {"sd_log", m.vol_jumps->sd_log}};
  return {{"x0", m.x0},
          {"drift", drift},
          {"vol", vol},
          {"leverage", m.leverage},
          {"vol_jumps", jumps},
          {"cir_truncation", m.cir_truncation}};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Experiment runners
// ---------------------------------------------------------------------------

namespace detail {

inline ExperimentReport run_experiment(const ExperimentConfig& config) {
  config.validate();
  const auto t_start = std::chrono::steady_clock::now();

  ExperimentReport report;
  report.config = config;
  const long reps = config.effective_replications();
  const bool clt = config.mode == ExperimentMode::clt;
  const double scheme_m = analytic_M(config.scheme.with_mean(1.0));

  if (clt && !(config.f.is_polynomial() && config.f.globally_even()) &&
      !config.f.even_in_each_argument()) {
    report.warnings.push_back(
        "test function satisfies neither CLT hypothesis: it is not a globally even polynomial "
        "and not even in each argument");
  }

  for (const long n : config.n_grid) {
    const double delta_n = config.horizon / static_cast<double>(n);
    const SamplingScheme scheme_n = config.scheme.with_mean(delta_n);
    const double max_step = config.max_step_frac * delta_n;

    PerNStats stats;
    stats.n = n;
    stats.delta_n = delta_n;
    stats.values.assign(static_cast<std::size_t>(reps), 0.0);
    std::vector<long> negativity(static_cast<std::size_t>(reps), 0);

    parallel_for(reps, config.threads, [&](long rep) {
      const Seed grid_seed = derive_seed(config.master_seed, static_cast<std::uint64_t>(n),
                                         static_cast<std::uint64_t>(rep), SeedStream::grid);
      const Seed path_seed = derive_seed(config.master_seed, static_cast<std::uint64_t>(n),
                                         static_cast<std::uint64_t>(rep), SeedStream::path);
      try {
        if (clt && config.synthetic_null) {
          auto engine = make_engine(path_seed);
          std::normal_distribution<double> gauss;
          stats.values[static_cast<std::size_t>(rep)] = gauss(engine);
          return;
        }
        const SampleGrid grid = gen_sampling_times(scheme_n, config.horizon, grid_seed);
        const SimulatedPath path = simulate_path(config.model, grid, max_step, path_seed);
        if (clt) {
          const double v = v_prime_functional(config.f, path).value;
          const LimitQuantities lq = limit_integrals(config.f, path, scheme_m);
          negativity[static_cast<std::size_t>(rep)] = lq.negativity_count;
          stats.values[static_cast<std::size_t>(rep)] = studentize(v, lq, delta_n);
        } else {
          const auto [lo, hi] =
              std::minmax_element(path.fine_sigma2.begin(), path.fine_sigma2.end());
          const RhoEvaluator rho_eval = RhoEvaluator::build(config.f, *lo, *hi);
          stats.values[static_cast<std::size_t>(rep)] =
              config.sup_checkpoints > 0
                  ? lln_error_checkpointed(config.f, path, delta_n, rho_eval,
                                           config.sup_checkpoints, config.horizon)
                  : lln_error_terminal(config.f, path, delta_n, rho_eval);
        }
      } catch (const std::exception& e) {
        throw Error("replication failed (n=" + std::to_string(n) +
                    ", rep=" + std::to_string(rep) + ", grid_seed=" + std::to_string(grid_seed) +
                    ", path_seed=" + std::to_string(path_seed) + "): " + e.what());
      }
    });

    long neg_total = 0;
    for (long c : negativity) neg_total += c;
    if (neg_total > 0)
      report.warnings.push_back("R' fell below -1e-10 at " + std::to_string(neg_total) +
                                " fine-grid points (n=" + std::to_string(n) + ")");

    double sumsq = 0.0;
    for (double v : stats.values) sumsq += v * v;
    stats.rms = std::sqrt(sumsq / static_cast<double>(reps));
    stats.moments = compute_moments(stats.values);
    if (clt) {
      stats.histogram = make_histogram(stats.values);
      if (reps >= 10) {
        report.ks = ks_test(stats.values);
        report.ks_n = n;
      } else {
        report.warnings.push_back("KS test skipped: fewer than 10 replications");
      }
    }
    report.per_n.push_back(std::move(stats));
  }

  if (!clt && report.per_n.size() >= 3) {
    std::vector<std::pair<double, double>> pairs;
    bool fittable = true;
    for (const auto& s : report.per_n) {
      if (!(s.rms > 0.0)) fittable = false;
      pairs.emplace_back(s.delta_n, s.rms);
    }
    if (fittable)
      report.rate_fit = rate_fit(pairs);
    else
      report.warnings.push_back("rate fit skipped: some RMS errors are zero");
  }

  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return report;
}

}  // namespace detail

/// Verify the law of large numbers: per (n, replication), the error
/// delta_n V'(f,k)_T - int_0^{t_N} rho du, with RMS per rate and a log-log
/// rate fit across rates.
inline ExperimentReport run_lln(ExperimentConfig config) {
  config.mode = ExperimentMode::lln;
  return detail::run_experiment(config);
}

/// Verify the central limit theorem: per replication the studentized
/// statistic (realized volatility path, analytic M), with a KS test against
/// N(0,1) and moment summaries.
inline ExperimentReport run_clt(ExperimentConfig config) {
  config.mode = ExperimentMode::clt;
  return detail::run_experiment(config);
}

// ---------------------------------------------------------------------------
// Report serialization. The JSON body is deterministic: it contains no
// timings and no thread counts, so runs with different parallelism are
// byte-identical.
// ---------------------------------------------------------------------------

inline std::string ExperimentReport::to_json(int indent) const {
  nlohmann::json j;
  j["config"] = {{"mode", svf::to_string(config.mode)},
                 {"scheme", detail::scheme_json(config.scheme)},
                 {"model", detail::model_json(config.model)},
                 {"f", config.f.to_string()},
                 {"k", config.f.dimension()},
                 {"horizon", config.horizon},
                 {"n_grid", config.n_grid},
                 {"replications", config.effective_replications()},
                 {"master_seed", config.master_seed},
                 {"max_step_frac", config.max_step_frac},
                 {"sup_checkpoints", config.sup_checkpoints},
                 {"synthetic_null", config.synthetic_null},
                 {"seed_streams", {{"grid", 1}, {"path", 2}, {"mc", 3}}}};
  j["per_n"] = nlohmann::json::array();
  for (const auto& s : per_n) {
    nlohmann::json e = {{"n", s.n},           {"delta_n", s.delta_n},
                        {"count", s.values.size()}, {"rms", s.rms},
                        {"mean", s.moments.mean},   {"variance", s.moments.variance},
                        {"skewness", s.moments.skewness}, {"kurtosis", s.moments.kurtosis}};
    if (s.histogram) {
      e["histogram"] = {{"lo", s.histogram->lo},
                        {"hi", s.histogram->hi},
                        {"counts", s.histogram->counts},
                        {"below", s.histogram->below},
                        {"above", s.histogram->above}};
    }
    j["per_n"].push_back(std::move(e));
  }
  j["ks"] = nullptr;
  if (ks) j["ks"] = {{"n", ks_n}, {"d", ks->d}, {"p_value", ks->p_value}};
  j["rate_fit"] = nullptr;
  if (rate_fit)
    j["rate_fit"] = {
        {"slope", rate_fit->slope}, {"intercept", rate_fit->intercept}, {"r2", rate_fit->r2}};
  j["warnings"] = warnings;
  return j.dump(indent) + "\n";
}

inline void ExperimentReport::write_stats_csv(std::ostream& out) const {
  out << "n,rep,value\n";
  for (const auto& s : per_n)
    for (std::size_t rep = 0; rep < s.values.size(); ++rep)
      out << s.n << ',' << rep << ',' << format_full(s.values[rep]) << '\n';
}

}  // namespace svf
