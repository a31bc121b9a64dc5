#include "cvp/error.hpp"
#include "cvp/processes.hpp"

#include <doctest.h>

#include <cmath>
#include <string>

using namespace cvp;

namespace {

SimConfig sim(std::size_t paths, std::size_t steps, double horizon, std::uint64_t seed, bool anti = false) {
  SimConfig c;
  c.n_paths = paths;
  c.n_steps = steps;
  c.horizon = horizon;
  c.seed = seed;
  c.antithetic = anti;
  return c;
}

}  // namespace

TEST_CASE("price variance from value and volume") {
  // σ² is the variance rate of d ln C − d ln V, computed here from the 2x2 covariance.
  const TwoFactorParams p{0.1, 0.3, 0.05, 0.2, 0.5};
  const auto d = derived_price_dynamics(p);
  const double var = 0.3 * 0.3 + 0.2 * 0.2 - 2.0 * 0.5 * 0.3 * 0.2;
  CHECK(d.sigma_sq == doctest::Approx(var).epsilon(1e-15));
  CHECK(d.rho == doctest::Approx(0.5 * 0.3 * 0.2 - 0.2 * 0.2).epsilon(1e-15));
  // Itô drift of C/V: μ_c − μ_v + σ_v² − λσ_cσ_v
  CHECK(d.mu_p == doctest::Approx(0.1 - 0.05 + 0.04 - 0.03).epsilon(1e-15));

  const auto degenerate = derived_price_dynamics({0.0, 0.2, 0.0, 0.2, 1.0});
  CHECK(std::abs(degenerate.sigma_sq) < 1e-16);
}

TEST_CASE("expectation dynamics against explicit sums") {
  ExpectationParams e;
  e.mu = {0.02, -0.01, 0.03, 0.0};
  e.sigma = {0.15, 0.10, 0.12, 0.08};
  e.a = {1.0, 0.5, 0.0, 0.2};
  e.b = {0.0, 0.3, 0.8, 0.1};
  e.corr << 1, .3, .1, 0, .3, 1, -.2, .1, .1, -.2, 1, .25, 0, .1, .25, 1;
  const auto d = derived_expectation_dynamics(e);
  double var = 0.0;
  for (int j = 0; j < 4; ++j)
    for (int k = 0; k < 4; ++k)
      var += e.corr(j, k) * (e.a[j] - e.b[j]) * e.sigma[j] * (e.a[k] - e.b[k]) * e.sigma[k];
  CHECK(d.sigma_p_sq == doctest::Approx(var).epsilon(1e-14));
  CHECK(std::sqrt(d.sigma_p_sq) == doctest::Approx(0.1775).epsilon(5e-4));
  for (int j = 0; j < 3; ++j) {
    double cov = 0.0;
    for (int k = 0; k < 4; ++k) cov += e.sigma[j] * e.corr(j, k) * (e.a[k] - e.b[k]) * e.sigma[k];
    CHECK(d.rho[j] == doctest::Approx(cov).epsilon(1e-14));
  }
}

TEST_CASE("correlation factor") {
  Eigen::MatrixXd c(3, 3);
  c << 1, 0.5, 0.2, 0.5, 1, 0.3, 0.2, 0.3, 1;
  const Eigen::MatrixXd l = correlation_factor(c);
  CHECK((l * l.transpose() - c).cwiseAbs().maxCoeff() < 1e-14);

  SUBCASE("singular matrices are accepted") {
    Eigen::MatrixXd s(2, 2);
    s << 1, 1, 1, 1;
    const Eigen::MatrixXd ls = correlation_factor(s);
    CHECK((ls * ls.transpose() - s).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("indefinite matrices name the offending minor") {
    Eigen::MatrixXd bad(3, 3);
    bad << 1, 0.9, -0.9, 0.9, 1, 0.9, -0.9, 0.9, 1;
    try {
      correlation_factor(bad);
      FAIL("expected InvalidInput");
    } catch (const InvalidInput& e) {
      CHECK(std::string(e.what()).find("minor") != std::string::npos);
    }
  }
  SUBCASE("shape and diagonal are checked") {
    Eigen::MatrixXd d(2, 2);
    d << 2, 0, 0, 1;
    CHECK_THROWS_AS(correlation_factor(d), InvalidInput);
    d << 1, 0.2, 0.3, 1;
    CHECK_THROWS_AS(correlation_factor(d), InvalidInput);
  }
}

TEST_CASE("correlated increments have the requested covariance") {
  NoiseSpec ns;
  ns.corr.resize(2, 2);
  ns.corr << 1, -0.6, -0.6, 1;
  const double dt = 0.01;
  const Eigen::MatrixXd inc = correlated_increments(ns, 100000, dt, 9, 0);
  const double n = static_cast<double>(inc.rows());
  const double v0 = inc.col(0).squaredNorm() / n / dt;
  const double v1 = inc.col(1).squaredNorm() / n / dt;
  const double c01 = inc.col(0).dot(inc.col(1)) / n / dt;
  CHECK(std::abs(v0 - 1.0) < 5.0 * std::sqrt(2.0 / n));
  CHECK(std::abs(v1 - 1.0) < 5.0 * std::sqrt(2.0 / n));
  CHECK(std::abs(c01 + 0.6) < 5.0 * std::sqrt((1.0 + 0.36) / n));
  CHECK(inc == correlated_increments(ns, 100000, dt, 9, 0));
  CHECK(inc != correlated_increments(ns, 100000, dt, 9, 1));
}

TEST_CASE("amplitudes") {
  CHECK(amplitude_at(ConstantAmplitude{1.5}, 10.0) == 1.5);
  CHECK(amplitude_at(RationalAmplitude{1.0, 0.05}, 20.0) == doctest::Approx(0.5));
  const TabulatedAmplitude t{{0.0, 10.0}, {1.0, 2.0}};
  CHECK(amplitude_at(t, 5.0) == doctest::Approx(1.5));
  CHECK(amplitude_at(t, -3.0) == 1.0);
  CHECK(amplitude_at(t, 30.0) == 2.0);
  CHECK_NOTHROW(check_amplitude(RationalAmplitude{1.0, 0.05}, 0.0, 100.0));
  CHECK_THROWS_AS(check_amplitude(RationalAmplitude{1.0, 0.05}, -30.0, 100.0), InvalidInput);
  CHECK_THROWS_AS(check_amplitude(ConstantAmplitude{-1.0}, 0.0, 1.0), InvalidInput);
  CHECK_THROWS_AS(check_amplitude(TabulatedAmplitude{{1.0, 0.0}, {1.0, 1.0}}, 0.0, 1.0), InvalidInput);
}

TEST_CASE("noiseless two-factor paths are exponentials") {
  const TwoFactorParams p{0.1, 0.0, 0.03, 0.0, 0.0};
  const auto b = simulate_two_factor(p, 50.0, 5.0, sim(1, 100, 2.0, 1));
  REQUIRE(b.labels == std::vector<std::string>{"C", "V", "p"});
  for (std::size_t k = 0; k < b.n_times(); ++k) {
    const double t = b.times[k];
    CHECK(b.at(0, k, 0) == doctest::Approx(50.0 * std::exp(0.1 * t)).epsilon(1e-13));
    CHECK(b.at(0, k, 1) == doctest::Approx(5.0 * std::exp(0.03 * t)).epsilon(1e-13));
  }
  CHECK(b.times.back() == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("two-factor simulation properties") {
  const TwoFactorParams p{0.1, 0.3, 0.05, 0.2, 0.5};
  const auto b = simulate_two_factor(p, 100.0, 2.0, sim(2000, 10, 1.0, 4));
  const auto c = simulate_two_factor(p, 100.0, 2.0, sim(2000, 10, 1.0, 4));
  CHECK(b.data == c.data);
  double mean_log = 0.0;
  for (std::size_t i = 0; i < b.n_paths; ++i) {
    for (std::size_t k = 0; k < b.n_times(); ++k)
      CHECK(b.at(i, k, 2) == doctest::Approx(b.at(i, k, 0) / b.at(i, k, 1)).epsilon(1e-15));
    mean_log += std::log(b.at(i, 10, 2) / 50.0);
  }
  mean_log /= static_cast<double>(b.n_paths);
  // ln p_T has mean (μ_c − σ_c²/2 − μ_v + σ_v²/2)T and variance σ²T
  const auto d = derived_price_dynamics(p);
  const double expected = 0.1 - 0.045 - 0.05 + 0.02;
  CHECK(std::abs(mean_log - expected) < 4.0 * std::sqrt(d.sigma_sq / 2000.0));
}

TEST_CASE("antithetic pairs mirror each other") {
  const TwoFactorParams p{0.0, 0.3, 0.0, 0.2, 0.0};
  const auto b = simulate_two_factor(p, 1.0, 1.0, sim(4, 5, 1.0, 8, true));
  for (std::size_t k = 1; k < b.n_times(); ++k) {
    const double drift = -0.5 * 0.09 * b.times[k];
    CHECK(std::log(b.at(0, k, 0)) - drift == doctest::Approx(-(std::log(b.at(1, k, 0)) - drift)).epsilon(1e-12));
  }
}

TEST_CASE("cir paths stay nonnegative and revert to the mean") {
  const auto b = simulate_cir(2.0, 0.04, 0.6, 0.04, sim(2000, 200, 5.0, 3));  // Feller violated
  double mean = 0.0;
  for (std::size_t i = 0; i < b.n_paths; ++i) {
    for (std::size_t k = 0; k < b.n_times(); ++k) CHECK(b.at(i, k, 0) >= 0.0);
    mean += b.at(i, 200, 0);
  }
  mean /= 2000.0;
  // stationary standard deviation is σ√(θ/2α) = 0.06
  CHECK(std::abs(mean - 0.04) < 4.0 * 0.06 / std::sqrt(2000.0) + 2e-3);
  StochVolParams sv;
  sv.alpha_x = 2.0;
  sv.theta_x = 0.04;
  sv.sigma_x = 0.6;
  CHECK_FALSE(sv.feller_x());
  sv.sigma_x = 0.3;
  CHECK(sv.feller_x());
}

TEST_CASE("stochastic variance model shares the variance noise with heston") {
  StochVolParams sv;
  sv.alpha_x = 2.0;
  sv.theta_x = 0.04;
  sv.sigma_x = 0.3;
  sv.lambda_xc = -0.5;
  const TwoFactorParams tf{0.05, 0.0, 0.0, 0.0, 0.0};
  const auto b = simulate_stochvol_model(tf, sv, 100.0, 1.0, 0.04, 0.0, sim(3, 50, 1.0, 2));
  REQUIRE(b.labels == std::vector<std::string>{"C", "V", "x", "y", "p"});
  for (std::size_t k = 0; k < b.n_times(); ++k) {
    CHECK(b.at(1, k, 1) == doctest::Approx(1.0));  // σ_v = 0 with y = 0 keeps V fixed
    CHECK(b.at(1, k, 2) >= 0.0);
  }
  const Eigen::Matrix4d corr = stochvol_correlation(0.3, sv);
  CHECK(corr(0, 1) == 0.3);
  CHECK(corr(0, 2) == -0.5);
  CHECK(corr(3, 0) == 0.0);
}

TEST_CASE("invalid configurations are rejected") {
  CHECK_THROWS_AS(simulate_two_factor({0, -0.1, 0, 0.1, 0}, 1, 1, sim(1, 1, 1, 0)), InvalidInput);
  CHECK_THROWS_AS(simulate_two_factor({0, 0.1, 0, 0.1, 1.5}, 1, 1, sim(1, 1, 1, 0)), InvalidInput);
  CHECK_THROWS_AS(simulate_two_factor({0, 0.1, 0, 0.1, 0}, 1, 1, sim(1, 0, 1, 0)), InvalidInput);
  CHECK_THROWS_AS(simulate_two_factor({0, 0.1, 0, 0.1, 0}, -1, 1, sim(1, 1, 1, 0)), InvalidInput);
}
