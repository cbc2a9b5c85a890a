#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "svf/pathsim.hpp"
#include "svf/rng.hpp"
#include "svf/sampling.hpp"

using namespace svf;

namespace {

ModelSpec flat_model(double sigma2, double drift = 0.0, double x0 = 0.0) {
  ModelSpec m;
  m.x0 = x0;
  m.drift = DriftSpec::constant(drift);
  m.vol = VolSpec::constant(sigma2);
  return m;
}

}  // namespace

TEST_CASE("degenerate diffusion stays at x0", "[pathsim]") {
  const auto grid = gen_sampling_times(SamplingScheme::deterministic(0.25), 1.0, 1);
  const auto path = simulate_path(flat_model(0.0, 0.0, 5.0), grid, 0.0625, 2);
  for (double x : path.sample_x) CHECK(x == 5.0);
  for (double s : path.sample_sigma2) CHECK(s == 0.0);
}

TEST_CASE("pure drift integrates exactly", "[pathsim]") {
  const auto grid = gen_sampling_times(SamplingScheme::exponential(0.05), 1.0, 11);
  const auto path = simulate_path(flat_model(0.0, 2.0, 5.0), grid, 0.0125, 3);
  for (std::size_t i = 0; i < grid.times.size(); ++i)
    CHECK(path.sample_x[i] == Catch::Approx(5.0 + 2.0 * grid.times[i]).epsilon(1e-12));
}

TEST_CASE("fine grid contains every sampling time", "[pathsim]") {
  const auto grid = gen_sampling_times(SamplingScheme::gamma(0.1, 3.0), 1.0, 21);
  const auto path = simulate_path(flat_model(1.0), grid, 0.03, 22);
  for (double t : grid.times)
    CHECK(std::find(path.fine_times.begin(), path.fine_times.end(), t) != path.fine_times.end());
  CHECK(std::is_sorted(path.fine_times.begin(), path.fine_times.end()));
  CHECK(path.fine_times.size() == path.fine_sigma2.size());
  CHECK(path.sample_x.size() == grid.times.size());
  // Sub-steps never exceed max_step (up to rounding).
  for (std::size_t j = 0; j + 1 < path.fine_times.size(); ++j)
    CHECK(path.fine_times[j + 1] - path.fine_times[j] <= 0.03 * (1.0 + 1e-12));
}

TEST_CASE("simulation is deterministic in the seed", "[pathsim]") {
  const auto grid = gen_sampling_times(SamplingScheme::exponential(0.02), 1.0, 5);
  ModelSpec m;
  m.vol = VolSpec::cir_model(2.0, 1.0, 0.5, 1.0);
  m.leverage = -0.5;
  const auto a = simulate_path(m, grid, 0.005, 77);
  const auto b = simulate_path(m, grid, 0.005, 77);
  CHECK(a.sample_x == b.sample_x);
  CHECK(a.fine_sigma2 == b.fine_sigma2);
  const auto c = simulate_path(m, grid, 0.005, 78);
  CHECK(a.sample_x != c.sample_x);
}

TEST_CASE("increment variance matches sigma^2 * tau", "[pathsim][montecarlo]") {
  // Constant sigma = 1, deterministic grid with n = 4 on [0,1]: the first
  // increment is N(0, 0.25).
  const auto grid = gen_sampling_times(SamplingScheme::deterministic(0.25), 1.0, 0);
  double sum = 0.0, sumsq = 0.0;
  const int reps = 10'000;
  for (int rep = 0; rep < reps; ++rep) {
    const auto path = simulate_path(flat_model(1.0), grid, 0.0625, 1000 + rep);
    const double dx = path.sample_x[1] - path.sample_x[0];
    sum += dx;
    sumsq += dx * dx;
  }
  const double var = sumsq / reps - (sum / reps) * (sum / reps);
  CHECK(var > 0.23);
  CHECK(var < 0.27);
}

TEST_CASE("martingale property of the driftless price", "[pathsim][montecarlo]") {
  const auto scheme = SamplingScheme::exponential(0.01);
  double sum = 0.0, sumsq = 0.0;
  const int reps = 10'000;
  for (int rep = 0; rep < reps; ++rep) {
    const auto grid = gen_sampling_times(scheme, 1.0, derive_seed(5, 0, rep, SeedStream::grid));
    const auto path =
        simulate_path(flat_model(1.0), grid, 0.0025, derive_seed(5, 0, rep, SeedStream::path));
    const double d = path.sample_x.back();
    sum += d;
    sumsq += d * d;
  }
  const double mean = sum / reps;
  const double se = std::sqrt((sumsq / reps - mean * mean) / reps);
  CHECK(std::abs(mean) <= 3.0 * se);
}

TEST_CASE("realized quadratic variation tracks sigma^2 t_N", "[pathsim][montecarlo]") {
  const auto scheme = SamplingScheme::exponential(0.01);
  const double sigma2 = 4.0;
  double sum = 0.0, sumsq = 0.0;
  const int reps = 10'000;
  for (int rep = 0; rep < reps; ++rep) {
    const auto grid = gen_sampling_times(scheme, 1.0, derive_seed(9, 0, rep, SeedStream::grid));
    const auto path =
        simulate_path(flat_model(sigma2), grid, 0.0025, derive_seed(9, 0, rep, SeedStream::path));
    double qv = 0.0;
    for (std::size_t i = 0; i + 1 < path.sample_x.size(); ++i) {
      const double dx = path.sample_x[i + 1] - path.sample_x[i];
      qv += dx * dx;
    }
    const double d = qv - sigma2 * grid.last_time();
    sum += d;
    sumsq += d * d;
  }
  const double mean = sum / reps;
  const double se = std::sqrt((sumsq / reps - mean * mean) / reps);
  CHECK(std::abs(mean) <= 3.0 * se);
}

TEST_CASE("integration on the fine grid", "[pathsim]") {
  // Constant integrand: integral equals t_N.
  const auto grid = gen_sampling_times(SamplingScheme::deterministic(0.25), 1.0, 0);
  const auto path = simulate_path(flat_model(1.0), grid, 0.0625, 4);
  CHECK(integrate_on_fine_grid(path, [](double s) { return s; }) ==
        Catch::Approx(1.0).epsilon(1e-12));
  CHECK(integrate_on_fine_grid(path, [](double) { return 0.0; }) == 0.0);

  // Deterministic sigma^2(u) = 1 + u: integral of the identity is 1.5.
  ModelSpec lin;
  lin.vol = VolSpec::linear(1.0, 1.0);
  const auto lin_path = simulate_path(lin, grid, 1e-4, 4);
  CHECK(integrate_on_fine_grid(lin_path, [](double s) { return s; }) ==
        Catch::Approx(1.5).margin(1e-3));
}

TEST_CASE("euler bias on CIR variance integrals is below 1%", "[pathsim][montecarlo]") {
  // Halving the sub-step changes the mean of int sigma^4 du by well under 1%.
  const auto scheme = SamplingScheme::exponential(0.005);
  ModelSpec m;
  m.vol = VolSpec::cir_model(2.0, 1.0, 0.5, 1.0);
  auto mean_integral = [&](double max_step, Seed master) {
    const int reps = 20'000;
    double total = 0.0;
    for (int rep = 0; rep < reps; ++rep) {
      const auto grid =
          gen_sampling_times(scheme, 1.0, derive_seed(master, 1, rep, SeedStream::grid));
      const auto path =
          simulate_path(m, grid, max_step, derive_seed(master, 1, rep, SeedStream::path));
      total += integrate_on_fine_grid(path, [](double s) { return s * s; });
    }
    return total / reps;
  };
  const double coarse = mean_integral(0.005 / 4.0, 31);
  const double fine = mean_integral(0.005 / 8.0, 32);
  CHECK(std::abs(coarse - fine) / fine < 0.01);
}

TEST_CASE("leverage correlates price and variance increments", "[pathsim][montecarlo]") {
  // One sub-step per duration, so sampled increments expose the driver
  // correlation directly.
  const auto grid = gen_sampling_times(SamplingScheme::deterministic(2e-4), 1.0, 0);
  ModelSpec m;
  m.vol = VolSpec::cir_model(2.0, 1.0, 0.5, 1.0);
  m.leverage = -0.8;
  const auto path = simulate_path(m, grid, 1.0, 51);
  double sxy = 0.0, sxx = 0.0, syy = 0.0, sx = 0.0, sy = 0.0;
  const std::size_t n = grid.count();
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = path.sample_x[i + 1] - path.sample_x[i];
    const double dv = path.sample_sigma2[i + 1] - path.sample_sigma2[i];
    sx += dx;
    sy += dv;
    sxx += dx * dx;
    syy += dv * dv;
    sxy += dx * dv;
  }
  const double dn = static_cast<double>(n);
  const double corr = (sxy - sx * sy / dn) /
                      std::sqrt((sxx - sx * sx / dn) * (syy - sy * sy / dn));
  CHECK(corr == Catch::Approx(-0.8).margin(0.05));

  m.leverage = 0.0;
  const auto flat = simulate_path(m, grid, 1.0, 51);
  double sxy0 = 0.0, sxx0 = 0.0, syy0 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = flat.sample_x[i + 1] - flat.sample_x[i];
    const double dv = flat.sample_sigma2[i + 1] - flat.sample_sigma2[i];
    sxy0 += dx * dv;
    sxx0 += dx * dx;
    syy0 += dv * dv;
  }
  CHECK(std::abs(sxy0 / std::sqrt(sxx0 * syy0)) < 0.05);
}

TEST_CASE("lognormal-OU variance stays positive", "[pathsim]") {
  const auto grid = gen_sampling_times(SamplingScheme::exponential(0.01), 1.0, 8);
  ModelSpec m;
  m.vol = VolSpec::lognormal_ou_model(3.0, 0.5, 1.0, 0.5);
  const auto path = simulate_path(m, grid, 0.0025, 9);
  for (double s : path.fine_sigma2) CHECK(s > 0.0);
}

TEST_CASE("variance jumps perturb the volatility path", "[pathsim]") {
  const auto grid = gen_sampling_times(SamplingScheme::deterministic(0.01), 1.0, 0);
  ModelSpec m;
  m.vol = VolSpec::constant(1.0);
  m.vol_jumps = VolJumpSpec{20.0, 0.1, 0.2};
  const auto path = simulate_path(m, grid, 0.0025, 14);
  // With intensity 20 on [0,1] some jump lands with overwhelming probability.
  const bool moved = std::any_of(path.fine_sigma2.begin(), path.fine_sigma2.end(),
                                 [](double s) { return s != 1.0; });
  CHECK(moved);
  for (double s : path.fine_sigma2) CHECK(s >= 0.0);

  // Same seed with jumps disabled: constant variance throughout.
  ModelSpec base = m;
  base.vol_jumps.reset();
  const auto clean = simulate_path(base, grid, 0.0025, 14);
  for (double s : clean.fine_sigma2) CHECK(s == 1.0);
}

TEST_CASE("model validation errors", "[pathsim]") {
  const auto grid = gen_sampling_times(SamplingScheme::deterministic(0.25), 1.0, 0);
  CHECK_THROWS_AS(simulate_path(flat_model(1.0), grid, 0.0, 1), ParameterError);
  CHECK_THROWS_AS(simulate_path(flat_model(1.0), grid, -0.1, 1), ParameterError);

  ModelSpec bad_lev = flat_model(1.0);
  bad_lev.leverage = 1.5;
  CHECK_THROWS_AS(simulate_path(bad_lev, grid, 0.1, 1), ParameterError);

  ModelSpec feller;
  feller.vol = VolSpec::cir_model(0.1, 0.1, 1.0, 1.0);  // 2*kappa*theta = 0.02 < xi^2
  feller.cir_truncation = false;
  CHECK_THROWS_AS(simulate_path(feller, grid, 0.1, 1), ParameterError);
  feller.cir_truncation = true;
  CHECK_NOTHROW(simulate_path(feller, grid, 0.1, 1));

  ModelSpec neg = flat_model(-1.0);
  CHECK_THROWS_AS(simulate_path(neg, grid, 0.1, 1), ParameterError);
}

TEST_CASE("grid and path seed streams never collide", "[pathsim][rng]") {
  for (Seed master : {0ull, 1ull, 42ull, 0xdeadbeefull}) {
    for (std::uint64_t n : {1ull, 500ull, 8000ull}) {
      for (std::uint64_t rep = 0; rep < 50; ++rep) {
        CHECK(derive_seed(master, n, rep, SeedStream::grid) !=
              derive_seed(master, n, rep, SeedStream::path));
        CHECK(derive_seed(master, n, rep, SeedStream::path) !=
              derive_seed(master, n, rep, SeedStream::mc));
      }
    }
  }
}
