#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "svf/harness.hpp"

using namespace svf;

TEST_CASE("ks statistic on exact normal quantiles", "[harness][ks]") {
  // Samples at Phi^{-1}((i-0.5)/m) make the empirical cdf hug Phi.
  const std::size_t m = 10'000;
  std::vector<double> s;
  for (std::size_t i = 1; i <= m; ++i)
    s.push_back(normal_quantile((static_cast<double>(i) - 0.5) / static_cast<double>(m)));
  const auto r = ks_test(s);
  CHECK(r.d < 1e-3);
  CHECK(r.p_value > 0.999);
}

TEST_CASE("ks statistic on a point mass and a shifted sample", "[harness][ks]") {
  const std::vector<double> zeros(1000, 0.0);
  const auto r = ks_test(zeros);
  CHECK(r.d == Catch::Approx(0.5));
  CHECK(r.p_value < 1e-12);

  std::mt19937_64 rng(8);
  std::normal_distribution<double> gauss(0.5, 1.0);
  std::vector<double> shifted;
  for (int i = 0; i < 2000; ++i) shifted.push_back(gauss(rng));
  CHECK(ks_test(shifted).p_value < 1e-6);

  CHECK_THROWS_AS(ks_test(std::vector<double>(9, 0.0)), InsufficientDataError);
}

TEST_CASE("rate fit recovers exact power laws", "[harness]") {
  std::vector<std::pair<double, double>> half;
  std::vector<std::pair<double, double>> linear;
  for (double h : {0.1, 0.05, 0.025, 0.0125}) {
    half.emplace_back(h, 2.0 * std::sqrt(h));
    linear.emplace_back(h, 3.0 * h);
  }
  const auto f1 = rate_fit(half);
  CHECK(f1.slope == Catch::Approx(0.5).epsilon(1e-12));
  CHECK(f1.r2 == Catch::Approx(1.0).epsilon(1e-12));
  const auto f2 = rate_fit(linear);
  CHECK(f2.slope == Catch::Approx(1.0).epsilon(1e-12));

  const std::vector<std::pair<double, double>> singular{{0.1, 1.0}, {0.1, 2.0}, {0.1, 3.0}};
  CHECK_THROWS_AS(rate_fit(singular), ParameterError);
  const std::vector<std::pair<double, double>> two{{0.1, 1.0}, {0.2, 2.0}};
  CHECK_THROWS_AS(rate_fit(two), ParameterError);
  const std::vector<std::pair<double, double>> bad{{0.1, 1.0}, {0.2, -2.0}, {0.4, 1.0}};
  CHECK_THROWS_AS(rate_fit(bad), ParameterError);
}

namespace {

ExperimentConfig small_clt_config() {
  ExperimentConfig c;
  c.scheme = SamplingScheme::exponential(1.0);
  c.model.vol = VolSpec::constant(1.0);
  c.f = TestFunction::parse("x^2");
  c.horizon = 1.0;
  c.n_grid = {200};
  c.replications = 64;
  c.master_seed = 7;
  c.mode = ExperimentMode::clt;
  return c;
}

}  // namespace

TEST_CASE("reports are byte-identical across runs and thread counts", "[harness]") {
  ExperimentConfig c = small_clt_config();
  c.threads = 1;
  const auto r1 = run_clt(c);
  const auto r2 = run_clt(c);
  CHECK(r1.to_json() == r2.to_json());

  c.threads = 4;
  const auto r4 = run_clt(c);
  CHECK(r1.to_json() == r4.to_json());

  std::ostringstream s1, s4;
  r1.write_stats_csv(s1);
  r4.write_stats_csv(s4);
  CHECK(s1.str() == s4.str());

  // Different master seed changes the body.
  c.master_seed = 8;
  CHECK(run_clt(c).to_json() != r1.to_json());
}

TEST_CASE("report json carries the contracted keys", "[harness]") {
  const auto report = run_clt(small_clt_config());
  const auto j = nlohmann::json::parse(report.to_json());
  for (const char* key : {"config", "per_n", "ks", "rate_fit", "warnings"})
    CHECK(j.contains(key));
  CHECK(j["config"]["mode"] == "clt");
  CHECK(j["config"]["replications"] == 64);
  CHECK(j["per_n"].size() == 1);
  CHECK(j["per_n"][0]["n"] == 200);
  CHECK(j["per_n"][0].contains("histogram"));
  CHECK(j["ks"].contains("p_value"));
  CHECK(j["rate_fit"].is_null());
  // No timing or thread information in the body.
  const std::string body = report.to_json();
  CHECK(body.find("seconds") == std::string::npos);
  CHECK(body.find("threads") == std::string::npos);
}

TEST_CASE("stats csv layout", "[harness]") {
  const auto report = run_clt(small_clt_config());
  std::ostringstream out;
  report.write_stats_csv(out);
  std::istringstream in(out.str());
  std::string line;
  REQUIRE(std::getline(in, line));
  CHECK(line == "n,rep,value");
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (!line.empty()) ++rows;
  }
  CHECK(rows == 64);
}

TEST_CASE("synthetic-null p-values are uniform", "[harness][montecarlo]") {
  // Bypass mode draws the statistics straight from N(0,1); over repeated
  // master seeds the KS p-value must look uniform. Mapping p through the
  // normal quantile lets the same KS routine check uniformity.
  std::vector<double> transformed;
  for (Seed seed = 1; seed <= 200; ++seed) {
    ExperimentConfig c = small_clt_config();
    c.synthetic_null = true;
    c.replications = 500;
    c.master_seed = seed;
    const auto report = run_clt(c);
    REQUIRE(report.ks.has_value());
    const double p = std::clamp(report.ks->p_value, 1e-12, 1.0 - 1e-12);
    transformed.push_back(normal_quantile(p));
  }
  CHECK(ks_test(transformed).p_value > 0.01);
}

TEST_CASE("studentization holds across scheme families", "[harness][montecarlo]") {
  // The analytic dispersion constant feeds the variance normalization; with
  // the right M the studentized statistics have unit variance for every
  // duration law.
  for (const auto& scheme : {SamplingScheme::gamma(1.0, 2.0), SamplingScheme::uniform(1.0, 0.9),
                             SamplingScheme::deterministic(1.0)}) {
    ExperimentConfig c = small_clt_config();
    c.scheme = scheme;
    c.n_grid = {500};
    c.replications = 400;
    c.master_seed = 11;
    const auto report = run_clt(c);
    CHECK(report.per_n[0].moments.variance == Catch::Approx(1.0).margin(0.25));
    CHECK(report.ks->p_value > 0.005);
  }
}

TEST_CASE("clt with too few replications skips the KS test", "[harness]") {
  ExperimentConfig c = small_clt_config();
  c.replications = 6;
  const auto report = run_clt(c);
  CHECK_FALSE(report.ks.has_value());
  REQUIRE_FALSE(report.warnings.empty());
  CHECK(report.warnings[0].find("KS") != std::string::npos);
  const auto j = nlohmann::json::parse(report.to_json());
  CHECK(j["ks"].is_null());
}

TEST_CASE("lln errors vanish identically for zero volatility", "[harness]") {
  ExperimentConfig c;
  c.scheme = SamplingScheme::exponential(1.0);
  c.model.vol = VolSpec::constant(0.0);
  c.f = TestFunction::parse("x^2");
  c.n_grid = {100};
  c.replications = 20;
  const auto report = run_lln(c);
  for (double v : report.per_n[0].values) CHECK(v == 0.0);
}

TEST_CASE("lln rms decreases with the rate up to noise", "[harness][montecarlo]") {
  ExperimentConfig c;
  c.scheme = SamplingScheme::exponential(1.0);
  c.model.vol = VolSpec::constant(1.0);
  c.f = TestFunction::parse("x^2");
  c.n_grid = {200, 400, 800};
  c.replications = 150;
  c.master_seed = 21;
  const auto report = run_lln(c);
  REQUIRE(report.per_n.size() == 3);
  for (std::size_t i = 0; i + 1 < report.per_n.size(); ++i) {
    const double rms_i = report.per_n[i].rms;
    const double rms_next = report.per_n[i + 1].rms;
    const double slack = 2.0 * rms_i / std::sqrt(2.0 * 150.0);
    CHECK(rms_next <= rms_i + slack);
  }
  REQUIRE(report.rate_fit.has_value());
  CHECK(report.rate_fit->slope > 0.2);
  CHECK(report.rate_fit->slope < 0.8);
}

TEST_CASE("checkpointed sup error at one checkpoint matches the terminal error",
          "[harness]") {
  ExperimentConfig c;
  c.scheme = SamplingScheme::exponential(1.0);
  c.model.vol = VolSpec::constant(1.0);
  c.f = TestFunction::parse("x^2");
  c.n_grid = {150};
  c.replications = 32;
  c.master_seed = 33;

  const auto terminal = run_lln(c);
  c.sup_checkpoints = 1;
  const auto cp1 = run_lln(c);
  for (std::size_t r = 0; r < 32; ++r)
    CHECK(cp1.per_n[0].values[r] == std::abs(terminal.per_n[0].values[r]));

  c.sup_checkpoints = 10;
  const auto cp10 = run_lln(c);
  for (std::size_t r = 0; r < 32; ++r)
    CHECK(cp10.per_n[0].values[r] >= std::abs(terminal.per_n[0].values[r]) - 1e-15);
}

TEST_CASE("evenness warning for functions outside the CLT hypotheses", "[harness]") {
  ExperimentConfig c = small_clt_config();
  c.replications = 16;
  c.f = TestFunction::parse("x^3 + x^2");  // neither globally even nor even per argument
  const auto report = run_clt(c);
  REQUIRE_FALSE(report.warnings.empty());
  CHECK(report.warnings[0].find("even") != std::string::npos);

  const auto clean = run_clt(small_clt_config());
  CHECK(clean.warnings.empty());
}

TEST_CASE("replication failures carry context", "[harness]") {
  ExperimentConfig c = small_clt_config();
  c.model.vol = VolSpec::constant(0.0);  // studentization degenerates
  c.replications = 4;
  try {
    run_clt(c);
    FAIL("expected an error");
  } catch (const Error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("n=200") != std::string::npos);
    CHECK(msg.find("rep=") != std::string::npos);
    CHECK(msg.find("seed=") != std::string::npos);
  }
}

TEST_CASE("config validation", "[harness]") {
  ExperimentConfig c = small_clt_config();
  c.n_grid = {};
  CHECK_THROWS_AS(run_clt(c), ParameterError);
  c = small_clt_config();
  c.n_grid = {500, 500};
  CHECK_THROWS_AS(run_clt(c), ParameterError);
  c = small_clt_config();
  c.horizon = 0.0;
  CHECK_THROWS_AS(run_clt(c), ParameterError);
  c = small_clt_config();
  c.max_step_frac = 0.0;
  CHECK_THROWS_AS(run_clt(c), ParameterError);
}
