// svf: simulate semimartingales under random sampling schemes, evaluate
// variation functionals, and run the LLN/CLT verification experiments.

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "svf/svf.hpp"

namespace {

using namespace svf;

SchemeKind parse_scheme_kind(const std::string& s) {
  if (s == "deterministic") return SchemeKind::deterministic;
  if (s == "exponential") return SchemeKind::exponential;
  if (s == "gamma") return SchemeKind::gamma;
  if (s == "uniform") return SchemeKind::uniform;
  throw ParameterError("unknown scheme '" + s + "'");
}

std::vector<double> parse_params(const std::string& spec, const std::string& prefix,
                                 std::size_t expected) {
  std::vector<double> out;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw ParameterError("bad numeric value '" + item + "' in --" + prefix);
    }
  }
  if (out.size() != expected)
    throw ParameterError("--" + prefix + " expects " + std::to_string(expected) +
                         " comma-separated values");
  return out;
}

DriftSpec parse_drift(const std::string& spec) {
  const auto colon = spec.find(':');
  const std::string kind = spec.substr(0, colon);
  const std::string rest = colon == std::string::npos ? "" : spec.substr(colon + 1);
  if (kind == "const") return DriftSpec::constant(parse_params(rest, "drift", 1)[0]);
  if (kind == "lin") {
    const auto p = parse_params(rest, "drift", 2);
    return DriftSpec::linear(p[0], p[1]);
  }
  throw ParameterError("unknown drift spec '" + spec + "' (use const:c or lin:a,b)");
}

VolSpec parse_vol(const std::string& spec) {
  const auto colon = spec.find(':');
  const std::string kind = spec.substr(0, colon);
  const std::string rest = colon == std::string::npos ? "" : spec.substr(colon + 1);
  if (kind == "const") return VolSpec::constant(parse_params(rest, "sigma", 1)[0]);
  if (kind == "lin") {
    const auto p = parse_params(rest, "sigma", 2);
    return VolSpec::linear(p[0], p[1]);
  }
  if (kind == "cir") {
    const auto p = parse_params(rest, "sigma", 4);
    return VolSpec::cir_model(p[0], p[1], p[2], p[3]);
  }
  if (kind == "logou") {
    const auto p = parse_params(rest, "sigma", 4);
    return VolSpec::lognormal_ou_model(p[0], p[1], p[2], p[3]);
  }
  throw ParameterError("unknown vol spec '" + spec +
                       "' (use const:v, lin:a,b, cir:kappa,theta,xi,v0, or "
                       "logou:kappa,theta,xi,v0)");
}

std::vector<long> parse_n_grid(const std::string& spec) {
  std::vector<long> out;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stol(item));
    } catch (const std::exception&) {
      throw ParameterError("bad n value '" + item + "' in --n-grid");
    }
  }
  return out;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open output file '" + path + "'");
  return out;
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open input file '" + path + "'");
  return in;
}

// Shared flag bundles -------------------------------------------------------

struct SchemeFlags {
  std::string kind = "exponential";
  double shape = 1.0;
  double half_width = 0.5;

  void attach(CLI::App* cmd) {
    cmd->add_option("--scheme", kind,
                    "sampling scheme: deterministic|exponential|gamma|uniform")
        ->capture_default_str();
    cmd->add_option("--shape", shape, "gamma shape parameter")->capture_default_str();
    cmd->add_option("--half-width", half_width,
                    "uniform scheme half width as a fraction of the mean, in [0,1)")
        ->capture_default_str();
  }

  SamplingScheme build(double mean_duration) const {
    SamplingScheme s;
    s.kind = parse_scheme_kind(kind);
    s.mean_duration = mean_duration;
    s.shape = shape;
    s.half_width_frac = half_width;
    return s;
  }
};

struct ModelFlags {
  double x0 = 0.0;
  std::string drift = "const:0";
  std::string sigma = "const:1";
  double leverage = 0.0;
  std::string vol_jumps;  // "lambda,mean_log,sd_log"
  bool no_cir_truncation = false;

  void attach(CLI::App* cmd) {
    cmd->add_option("--x0", x0, "initial log price")->capture_default_str();
    cmd->add_option("--drift", drift, "drift spec: const:c or lin:a,b")->capture_default_str();
    cmd->add_option("--sigma", sigma,
                    "variance spec: const:v | lin:a,b | cir:kappa,theta,xi,v0 | "
                    "logou:kappa,theta,xi,v0")
        ->capture_default_str();
    cmd->add_option("--leverage", leverage, "corr(price driver, vol driver) in [-1,1]")
        ->capture_default_str();
    cmd->add_option("--vol-jumps", vol_jumps,
                    "multiplicative variance jumps: lambda,mean_log,sd_log");
    cmd->add_flag("--no-cir-truncation", no_cir_truncation,
                  "reject CIR parameters violating the Feller condition instead of truncating");
  }

  ModelSpec build() const {
    ModelSpec m;
    m.x0 = x0;
    m.drift = parse_drift(drift);
    m.vol = parse_vol(sigma);
    m.leverage = leverage;
    m.cir_truncation = !no_cir_truncation;
    if (!vol_jumps.empty()) {
      const auto p = parse_params(vol_jumps, "vol-jumps", 3);
      m.vol_jumps = VolJumpSpec{p[0], p[1], p[2]};
    }
    return m;
  }
};

void print_kv(const char* key, double value) {
  std::cout << key << " = " << format_sig12(value) << "\n";
}

// Every subcommand accepts `--config FILE` holding `key=value` lines with
// keys identical to the long flag names. The file only fills in options the
// command line left unset. Handled by rewriting the argument list before
// CLI11 sees it.
std::vector<std::string> apply_config_file(std::vector<std::string> args) {
  std::string config_path;
  std::vector<std::string> out;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw ParameterError("--config expects a file path");
      config_path = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      config_path = args[i].substr(9);
    } else {
      out.push_back(args[i]);
    }
  }
  if (config_path.empty()) return out;

  std::ifstream in(config_path);
  if (!in) throw DataError("cannot open config file '" + config_path + "'");

  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  auto user_set = [&out](const std::string& key) {
    const std::string flag = "--" + key;
    for (const auto& a : out)
      if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
    return false;
  };

  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ParseError("config line is not key=value", lineno);
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (!user_set(key)) out.push_back("--" + key + "=" + value);
  }
  return out;
}

// Subcommands ----------------------------------------------------------------

int cmd_sample_times(const SchemeFlags& sf, double mean_duration, double horizon, Seed seed,
                     const std::string& out_path) {
  const SampleGrid grid = gen_sampling_times(sf.build(mean_duration), horizon, seed);
  if (out_path.empty()) {
    write_grid_csv(std::cout, grid);
  } else {
    auto out = open_output(out_path);
    write_grid_csv(out, grid);
  }
  return 0;
}

int cmd_simulate(const SchemeFlags& sf, const ModelFlags& mf, double mean_duration,
                 double horizon, double max_step_frac, Seed seed, const std::string& out_path) {
  const SampleGrid grid = gen_sampling_times(sf.build(mean_duration), horizon,
                                             derive_seed(seed, 0, 0, SeedStream::grid));
  const SimulatedPath path = simulate_path(mf.build(), grid, max_step_frac * mean_duration,
                                           derive_seed(seed, 0, 0, SeedStream::path));
  if (out_path.empty()) {
    write_path_csv(std::cout, path.grid, path.sample_x, path.sample_sigma2);
  } else {
    auto out = open_output(out_path);
    write_path_csv(out, path.grid, path.sample_x, path.sample_sigma2);
  }
  return 0;
}

int cmd_functional(const std::string& f_expr, const std::string& stat, double p,
                   const std::string& path_file, const std::string& ticks_file) {
  SampleGrid grid;
  std::vector<double> x;
  if (!path_file.empty()) {
    auto in = open_input(path_file);
    PathData pd = read_path_csv(in);
    grid = std::move(pd.grid);
    x = std::move(pd.x);
  } else {
    auto in = open_input(ticks_file);
    auto [g, lx] = ingest_ticks(in).to_grid_series();
    grid = std::move(g);
    x = std::move(lx);
  }

  FunctionalResult r;
  if (stat == "vprime") {
    r = v_prime_functional(TestFunction::parse(f_expr), grid, x);
  } else if (stat == "v") {
    r = v_functional(TestFunction::parse(f_expr), grid, x);
  } else if (stat == "b") {
    r = b_variation(p, grid, x);
  } else {
    throw ParameterError("unknown --stat '" + stat + "' (use vprime, v, or b)");
  }
  print_kv("value", r.value);
  std::cout << "terms_used = " << r.terms_used << "\n";
  return 0;
}

int cmd_ci(const std::string& ticks_file, double confidence) {
  auto in = open_input(ticks_file);
  const auto [grid, x] = ingest_ticks(in).to_grid_series();
  const IvConfidenceInterval ci = feasible_iv_ci(grid, x, confidence);
  print_kv("iv_hat", ci.iv_hat);
  print_kv("lo", ci.lo);
  print_kv("hi", ci.hi);
  print_kv("delta_hat", ci.delta_hat);
  print_kv("m_hat", ci.m_hat);
  return 0;
}

int cmd_check(const std::string& ticks_file, long n_opt) {
  auto in = open_input(ticks_file);
  const TickSeries ticks = ingest_ticks(in);
  const auto [grid, x] = ticks.to_grid_series();
  const long n = n_opt > 0 ? n_opt : static_cast<long>(grid.count());
  if (n <= 0) throw InsufficientDataError("check: series has no increments");
  const RegularityDiagnostics diag = check_regularity(grid, n);
  print_kv("sum_sq_scaled", diag.sum_sq_scaled);
  print_kv("count_ratio", diag.count_ratio);
  if (ticks.duplicates_collapsed > 0)
    std::cout << "duplicate_timestamps_collapsed = " << ticks.duplicates_collapsed << "\n";
  if (grid.count() >= 2) {
    const DurationStats ds = estimate_duration_stats(grid);
    print_kv("delta_hat", ds.mean);
    print_kv("m_hat", ds.m_hat);
  }
  return 0;
}

struct HarnessFlags {
  SchemeFlags scheme;
  ModelFlags model;
  std::string f_expr = "x^2";
  double horizon = 1.0;
  long n_single = 0;
  std::string n_grid_spec;
  long reps = 0;
  Seed seed = 42;
  int threads = 0;
  double max_step_frac = 0.25;
  int checkpoints = 0;
  std::string out_path = "report.json";
  std::string stats_path = "stats.csv";

  void attach(CLI::App* cmd, bool clt) {
    scheme.attach(cmd);
    model.attach(cmd);
    cmd->add_option("--f", f_expr, "test function, e.g. \"x^2\" or \"x1^2*x2^2\"")
        ->capture_default_str();
    cmd->add_option("--horizon", horizon, "time horizon T")->capture_default_str();
    cmd->add_option("--n", n_single, "single nominal rate n (delta_n = T/n)");
    cmd->add_option("--n-grid", n_grid_spec, "comma-separated list of nominal rates");
    cmd->add_option("--reps", reps, "replications (default: 200 lln, 2000 clt)");
    cmd->add_option("--seed", seed, "master seed")->capture_default_str();
    cmd->add_option("--threads", threads, "worker threads (0 = hardware; results identical)")
        ->capture_default_str();
    cmd->add_option("--max-step-frac", max_step_frac,
                    "Euler max step as a fraction of delta_n")
        ->capture_default_str();
    if (!clt)
      cmd->add_option("--checkpoints", checkpoints,
                      "evaluate the sup error over this many checkpoints (0 = terminal only)");
    cmd->add_option("--out", out_path, "report JSON output path")->capture_default_str();
    cmd->add_option("--stats", stats_path, "per-replication CSV output path")
        ->capture_default_str();
  }

  ExperimentConfig build(ExperimentMode mode) const {
    ExperimentConfig config;
    config.mode = mode;
    config.scheme = scheme.build(1.0);  // mean is horizon/n per rate
    config.model = model.build();
    config.f = TestFunction::parse(f_expr);
    config.horizon = horizon;
    if (!n_grid_spec.empty()) {
      config.n_grid = parse_n_grid(n_grid_spec);
    } else if (n_single > 0) {
      config.n_grid = {n_single};
    } else if (mode == ExperimentMode::clt) {
      config.n_grid = {2000};
    }  // else keep the default lln ladder
    if (n_single > 0 && !n_grid_spec.empty())
      throw ParameterError("use either --n or --n-grid, not both");
    config.replications = reps;
    config.master_seed = seed;
    config.threads = threads;
    config.max_step_frac = max_step_frac;
    config.sup_checkpoints = checkpoints;
    return config;
  }
};

int cmd_harness(const HarnessFlags& hf, ExperimentMode mode) {
  const ExperimentConfig config = hf.build(mode);
  const ExperimentReport report =
      mode == ExperimentMode::clt ? run_clt(config) : run_lln(config);

  {
    auto out = open_output(hf.out_path);
    out << report.to_json();
  }
  {
    auto out = open_output(hf.stats_path);
    report.write_stats_csv(out);
  }

  for (const auto& s : report.per_n) {
    std::cout << "n = " << s.n << "  delta_n = " << format_sig12(s.delta_n)
              << "  rms = " << format_sig12(s.rms)
              << "  mean = " << format_sig12(s.moments.mean)
              << "  variance = " << format_sig12(s.moments.variance) << "\n";
  }
  if (report.ks)
    std::cout << "ks_d = " << format_sig12(report.ks->d)
              << "  ks_p = " << format_sig12(report.ks->p_value) << " (n = " << report.ks_n
              << ")\n";
  if (report.rate_fit)
    std::cout << "rate_slope = " << format_sig12(report.rate_fit->slope)
              << "  intercept = " << format_sig12(report.rate_fit->intercept)
              << "  r2 = " << format_sig12(report.rate_fit->r2) << "\n";
  for (const auto& w : report.warnings) std::cout << "warning: " << w << "\n";
  std::cerr << "elapsed_seconds = " << format_sig12(report.wall_seconds) << "\n";
  std::cout << "report written to " << hf.out_path << ", stats to " << hf.stats_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"functionals of semimartingale increments under random sampling"};
  app.require_subcommand(1);
  app.footer(
      "Every subcommand also accepts --config FILE with key=value lines; keys match the\n"
      "long flag names and command-line flags take precedence.");

  std::function<int()> action;

  // sample-times
  {
    auto* cmd = app.add_subcommand("sample-times", "generate a random sampling grid CSV");
    auto sf = std::make_shared<SchemeFlags>();
    auto mean = std::make_shared<double>(0.001);
    auto horizon = std::make_shared<double>(1.0);
    auto seed = std::make_shared<Seed>(42);
    auto out = std::make_shared<std::string>();
    sf->attach(cmd);
    cmd->add_option("--mean-duration", *mean, "mean duration delta_n")->required();
    cmd->add_option("--horizon", *horizon, "time horizon T")->capture_default_str();
    cmd->add_option("--seed", *seed, "rng seed")->capture_default_str();
    cmd->add_option("--out", *out, "output CSV path (default stdout)");
    cmd->callback([&action, sf, mean, horizon, seed, out]() {
      action = [=]() { return cmd_sample_times(*sf, *mean, *horizon, *seed, *out); };
    });
  }

  // simulate
  {
    auto* cmd = app.add_subcommand("simulate", "simulate a path on a random grid, emit CSV");
    auto sf = std::make_shared<SchemeFlags>();
    auto mf = std::make_shared<ModelFlags>();
    auto mean = std::make_shared<double>(0.001);
    auto horizon = std::make_shared<double>(1.0);
    auto max_step_frac = std::make_shared<double>(0.25);
    auto seed = std::make_shared<Seed>(42);
    auto out = std::make_shared<std::string>();
    sf->attach(cmd);
    mf->attach(cmd);
    cmd->add_option("--mean-duration", *mean, "mean duration delta_n")->required();
    cmd->add_option("--horizon", *horizon, "time horizon T")->capture_default_str();
    cmd->add_option("--max-step-frac", *max_step_frac,
                    "Euler max step as a fraction of the mean duration")
        ->capture_default_str();
    cmd->add_option("--seed", *seed, "rng seed")->capture_default_str();
    cmd->add_option("--out", *out, "output CSV path (default stdout)");
    cmd->callback([&action, sf, mf, mean, horizon, max_step_frac, seed, out]() {
      action = [=]() {
        return cmd_simulate(*sf, *mf, *mean, *horizon, *max_step_frac, *seed, *out);
      };
    });
  }

  // functional
  {
    auto* cmd = app.add_subcommand("functional", "evaluate V, V', or B on a path or tick file");
    auto f_expr = std::make_shared<std::string>("x^2");
    auto stat = std::make_shared<std::string>("vprime");
    auto p = std::make_shared<double>(3.0);
    auto path_file = std::make_shared<std::string>();
    auto ticks_file = std::make_shared<std::string>();
    cmd->add_option("--f", *f_expr, "test function")->capture_default_str();
    cmd->add_option("--stat", *stat, "which functional: vprime|v|b")->capture_default_str();
    cmd->add_option("--p", *p, "order for --stat b")->capture_default_str();
    auto* po = cmd->add_option("--path", *path_file, "path CSV (time,x,sigma2)");
    auto* to = cmd->add_option("--ticks", *ticks_file, "tick CSV (time,price)");
    po->excludes(to);
    cmd->callback([&action, cmd, f_expr, stat, p, path_file, ticks_file]() {
      if (path_file->empty() && ticks_file->empty())
        throw CLI::RequiredError(cmd->get_name() + ": one of --path/--ticks");
      action = [=]() { return cmd_functional(*f_expr, *stat, *p, *path_file, *ticks_file); };
    });
  }

  // lln / clt
  {
    auto* cmd = app.add_subcommand("lln", "law-of-large-numbers verification experiment");
    auto hf = std::make_shared<HarnessFlags>();
    hf->attach(cmd, false);
    cmd->callback([&action, hf]() {
      action = [=]() { return cmd_harness(*hf, ExperimentMode::lln); };
    });
  }
  {
    auto* cmd = app.add_subcommand("clt", "central-limit-theorem verification experiment");
    auto hf = std::make_shared<HarnessFlags>();
    hf->attach(cmd, true);
    cmd->callback([&action, hf]() {
      action = [=]() { return cmd_harness(*hf, ExperimentMode::clt); };
    });
  }

  // ci
  {
    auto* cmd = app.add_subcommand("ci", "feasible integrated-volatility confidence interval");
    auto ticks_file = std::make_shared<std::string>();
    auto confidence = std::make_shared<double>(0.95);
    cmd->add_option("--ticks", *ticks_file, "tick CSV (time,price)")->required();
    cmd->add_option("--confidence", *confidence, "confidence level in (0,1)")
        ->capture_default_str();
    cmd->callback([&action, ticks_file, confidence]() {
      action = [=]() { return cmd_ci(*ticks_file, *confidence); };
    });
  }

  // check
  {
    auto* cmd = app.add_subcommand("check", "sampling regularity diagnostics for a tick file");
    auto ticks_file = std::make_shared<std::string>();
    auto n = std::make_shared<long>(0);
    cmd->add_option("--ticks", *ticks_file, "tick CSV (time,price)")->required();
    cmd->add_option("--n", *n, "nominal rate (default: observed count)");
    cmd->callback([&action, ticks_file, n]() {
      action = [=]() { return cmd_check(*ticks_file, *n); };
    });
  }

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    args = apply_config_file(std::move(args));
    std::reverse(args.begin(), args.end());  // CLI11 takes the list reversed
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    std::cerr << "run with --help for usage\n";
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    return action ? action() : 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
}
