#include "cvp/analytic.hpp"
#include "cvp/error.hpp"
#include "cvp/pde.hpp"

#include <doctest.h>

#include <array>
#include <cmath>

using namespace cvp;

namespace {

const PricingTerms kTerms{0.05, 1.0, 100.0, OptionKind::call};

StochVolParams standard_variance() {
  StochVolParams sv;
  sv.alpha_x = 2.0;
  sv.theta_x = 0.04;
  sv.sigma_x = 0.3;
  sv.lambda_xc = -0.5;
  return sv;
}

double at(const Surface& s, std::initializer_list<double> pt) {
  const std::vector<double> v(pt);
  return s.value_at(v);
}

}  // namespace

TEST_CASE("axes and grids") {
  const Axis a = log_axis("p", 100.0, 1.0, 101);
  CHECK(a.is_log());
  CHECK(std::exp(a.node(50)) == doctest::Approx(100.0).epsilon(1e-14));
  CHECK(a.lo == doctest::Approx(100.0 * std::exp(-1.0)));
  const Axis b = linear_axis("x", 0.0, 1.0, 11);
  CHECK(b.spacing() == doctest::Approx(0.1));
  const Grid g = make_grid({a}, 1.0, 40);
  CHECK(g.dt * 40.0 == doctest::Approx(1.0));

  CHECK_THROWS_AS(validate(make_grid({linear_axis("x", 0.0, 1.0, 4)}, 1.0, 10)), InvalidInput);
  CHECK_THROWS_AS(log_axis("p", -1.0, 1.0, 20), InvalidInput);
  CHECK_THROWS_AS(validate(make_grid({linear_axis("x", 1.0, 0.0, 20)}, 1.0, 10)), InvalidInput);
}

TEST_CASE("solver rejects mismatched axes and time grids") {
  const Grid wrong_name = make_grid({log_axis("V", 100.0, 1.0, 51)}, 1.0, 20);
  CHECK_THROWS_AS(solve_bsm_1d(0.2, kTerms, Payoff::call(100.0), wrong_name), InvalidInput);
  const Grid wrong_tau = make_grid({log_axis("p", 100.0, 1.0, 51)}, 2.0, 20);
  CHECK_THROWS_AS(solve_bsm_1d(0.2, kTerms, Payoff::call(100.0), wrong_tau), InvalidInput);
  const Grid one_d = make_grid({log_axis("p", 100.0, 1.0, 51)}, 1.0, 20);
  CHECK_THROWS_AS(solve_bsm_1d(0.2, kTerms, Payoff::claim_pv(), one_d), InvalidInput);
  SolverOptions tiny;
  tiny.memory_cap_bytes = 1024;
  CHECK_THROWS_AS(solve_bsm_1d(0.2, kTerms, Payoff::call(100.0), one_d, tiny), InvalidInput);
}

TEST_CASE("1D solver against the closed form") {
  const Grid g = make_grid({log_axis("p", 100.0, 1.0, 401)}, 1.0, 200);
  for (double k : {80.0, 100.0, 125.0}) {
    const PricingTerms t{0.05, 1.0, k, OptionKind::call};
    const Surface c = solve_bsm_1d(0.2, t, Payoff::call(k), g);
    const Surface p = solve_bsm_1d(0.2, t, Payoff::put(k), g);
    for (double spot : {90.0, 100.0, 110.0}) {
      CHECK(std::abs(at(c, {spot}) - bsm_closed_form(spot, t, 0.2)) < 2e-3);
      PricingTerms tp = t;
      tp.kind = OptionKind::put;
      CHECK(std::abs(at(p, {spot}) - bsm_closed_form(spot, tp, 0.2)) < 2e-3);
      CHECK(std::abs(at(c, {spot}) - at(p, {spot}) - (spot - k * std::exp(-0.05))) < 1e-6);
    }
  }
}

TEST_CASE("forward payoff is reproduced exactly") {
  const Grid g = make_grid({log_axis("p", 100.0, 1.5, 61)}, 1.0, 10);
  const Surface s = solve_bsm_1d(0.4, kTerms, Payoff::forward(100.0), g);
  for (std::size_t node = 0; node < s.node_count(); ++node) {
    const double p = s.spot_coordinates(node, 1.0)[0];
    CHECK(s.values()[node] == doctest::Approx(p - 100.0 * std::exp(-0.05)).epsilon(1e-11).scale(1.0));
  }
}

TEST_CASE("second-order convergence in space and time") {
  const double exact = bsm_closed_form(100.0, kTerms, 0.2);
  std::array<double, 3> err{};
  const std::array<std::size_t, 3> ns{100, 200, 400};
  for (std::size_t i = 0; i < 3; ++i) {
    const Grid g = make_grid({log_axis("p", 100.0, 1.0, ns[i] + 1)}, 1.0, ns[i]);
    err[i] = std::abs(at(solve_bsm_1d(0.2, kTerms, Payoff::call(100.0), g), {100.0}) - exact);
  }
  const double slope = -std::log(err[2] / err[0]) / std::log(4.0);
  CHECK(slope == doctest::Approx(2.0).epsilon(0.15));
}

TEST_CASE("stored slices and interpolation in time") {
  const Grid g = make_grid({log_axis("p", 100.0, 1.0, 201)}, 1.0, 100);
  const Surface s = solve_bsm_1d(0.2, kTerms, Payoff::call(100.0), g);
  REQUIRE(s.has_all_slices());
  CHECK(s.times.front() == 0.0);
  CHECK(s.times.back() == doctest::Approx(1.0));
  const std::vector<double> pt{120.0};
  // linear interpolation in ln p of a payoff linear in p: error below p·h²/8
  CHECK(std::abs(s.value_at_time(0.0, pt) - 20.0) < 120.0 * 0.01 * 0.01 / 8.0 + 1e-12);
  PricingTerms half = kTerms;
  half.tau = 0.5;
  CHECK(s.value_at_time(0.5, pt) == doctest::Approx(bsm_closed_form(120.0, half, 0.2)).epsilon(1e-3));
  SolverOptions lean;
  lean.store_all_slices = false;
  const Surface l = solve_bsm_1d(0.2, kTerms, Payoff::call(100.0), g, lean);
  CHECK(l.slices.size() == 2);
  CHECK(at(l, {100.0}) == at(s, {100.0}));
}

TEST_CASE("richardson estimate raises the accuracy flag") {
  const Grid g = make_grid({log_axis("p", 100.0, 1.0, 41)}, 1.0, 20);
  SolverOptions strict;
  strict.target_tolerance = 1e-8;
  CHECK(solve_bsm_1d(0.2, kTerms, Payoff::call(100.0), g, strict).meta.accuracy_flag);
  SolverOptions loose;
  loose.target_tolerance = 1.0;
  const Surface s = solve_bsm_1d(0.2, kTerms, Payoff::call(100.0), g, loose);
  CHECK_FALSE(s.meta.accuracy_flag);
  CHECK(s.meta.error_estimate > 0.0);
}

TEST_CASE("two-factor solution is the 1D price at the effective volatility") {
  const TwoFactorParams p{0.0, 0.3, 0.0, 0.2, 0.5};
  const Grid g = make_grid({log_axis("p", 100.0, 1.2, 121), log_axis("V", 1.0, 0.5, 15)}, 1.0, 100);
  const Surface s = solve_two_factor_2d(p, kTerms, Payoff::call(100.0), g);
  const double target = two_factor_effective_price(100.0, kTerms, p);
  for (double v : {0.8, 1.0, 1.3}) CHECK(at(s, {100.0, v}) == doctest::Approx(target).epsilon(3e-3));
  CHECK(std::abs(at(s, {100.0, 0.8}) - at(s, {100.0, 1.3})) < 1e-8);
}

TEST_CASE("two-factor degenerate diffusion gives discounted intrinsic") {
  const TwoFactorParams p{0.0, 0.2, 0.0, 0.2, 1.0};
  const Grid g = make_grid({log_axis("p", 100.0, 0.8, 101), log_axis("V", 1.0, 0.5, 11)}, 1.0, 50);
  const PricingTerms t{0.05, 1.0, 90.0, OptionKind::call};
  const Surface s = solve_two_factor_2d(p, t, Payoff::call(90.0), g);
  CHECK(at(s, {100.0, 1.0}) == doctest::Approx(100.0 - 90.0 * std::exp(-0.05)).epsilon(1e-6));
}

TEST_CASE("value claim grows at r plus the covariance rate") {
  for (double lam : {0.2, 0.8}) {
    const TwoFactorParams p{0.0, 0.3, 0.0, 0.2, lam};
    const Grid g = make_grid({log_axis("p", 100.0, 1.0, 81), log_axis("V", 2.0, 1.0, 41)}, 1.0, 50);
    const Surface s = solve_two_factor_2d(p, kTerms, Payoff::claim_pv(), g);
    const double exact = linear_payoff_exact(100.0, 2.0, kTerms, p, LinearPayoff::value_claim);
    CHECK(at(s, {100.0, 2.0}) == doctest::Approx(exact).epsilon(2e-3));
  }
}

TEST_CASE("heston solver against the characteristic function") {
  const StochVolParams sv = standard_variance();
  const Grid g = make_grid({log_axis("p", 100.0, 1.2, 121), linear_axis("x", 0.0, 0.6, 61)}, 1.0, 100);
  const Surface s = solve_heston_2d(sv, kTerms, Payoff::call(100.0), g);
  CHECK(at(s, {100.0, 0.04}) == doctest::Approx(heston_cf_price(100.0, kTerms, sv, 0.04)).epsilon(5e-3));
  CHECK(s.meta.non_psd_nodes.empty());
}

TEST_CASE("3D solver with constant volume reduces to the 2D variance model") {
  const StochVolParams sv = standard_variance();
  const TwoFactorParams p{0.0, 0.0, 0.0, 0.0, 0.0};
  const Grid g3 = make_grid({log_axis("p", 100.0, 1.0, 48), log_axis("V", 1.0, 0.4, 8),
                             linear_axis("x", 0.0, 0.5, 26)}, 1.0, 50);
  const Grid g2 = make_grid({log_axis("p", 100.0, 1.0, 48), linear_axis("x", 0.0, 0.5, 26)}, 1.0, 50);
  const Surface s3 = solve_stochvol_3d(p, sv, kTerms, Payoff::call(100.0), g3);
  const Surface s2 = solve_heston_2d(sv, kTerms, Payoff::call(100.0), g2);
  CHECK(at(s3, {100.0, 1.0, 0.04}) == doctest::Approx(at(s2, {100.0, 0.04})).epsilon(1e-9));
}

TEST_CASE("expectations model on a coarse 4D grid") {
  ExpectationParams e;
  e.sigma = {0.15, 0.10, 0.12, 0.08};
  e.a = {1.0, 0.5, 0.0, 0.2};
  e.b = {0.0, 0.3, 0.8, 0.1};
  const Grid g = make_grid({log_axis("p", 100.0, 0.45, 14), linear_axis("x1", -0.5, 0.5, 10),
                            linear_axis("x2", -0.5, 0.5, 10), linear_axis("x3", -0.5, 0.5, 10)}, 1.0, 1);
  const Surface s = solve_expectation_4d(e, kTerms, Payoff::call(100.0), g);
  const double sigma_p = std::sqrt(derived_expectation_dynamics(e).sigma_p_sq);
  CHECK(at(s, {100.0, 0.0, 0.0, 0.0}) == doctest::Approx(bsm_closed_form(100.0, kTerms, sigma_p)).epsilon(0.03));
  CHECK(s.meta.scheme.find("explicit") != std::string::npos);
  CHECK(s.meta.time_steps > 1);  // dt was reduced for stability
}

TEST_CASE("nonlinear solver") {
  const Grid g = make_grid({log_axis("p", 100.0, 1.5, 301)}, 1.0, 200);
  SUBCASE("constant amplitude scales the volatility") {
    const FeedbackParams fb{0.0, 0.2, ConstantAmplitude{1.5}};
    const Surface s = solve_nonlinear_1d(fb, kTerms, Payoff::call(100.0), g, 1e-8, 15);
    CHECK(at(s, {100.0}) == doctest::Approx(bsm_closed_form(100.0, kTerms, 0.3)).epsilon(5e-4));
    CHECK(s.meta.converged);
  }
  SUBCASE("rational amplitude converges and satisfies its own discrete equation") {
    const FeedbackParams fb{0.0, 0.2, RationalAmplitude{1.0, 0.05}};
    const Surface s = solve_nonlinear_1d(fb, kTerms, Payoff::call(100.0), g, 1e-8, 15);
    CHECK(s.meta.converged);
    const Residual r = pde_residual(s, NonlinearModel{fb});
    CHECK(r.max_scaled < 1e-6);
    // price lies between BSM at the smallest and largest amplitude on the range
    const double hi = bsm_closed_form(100.0, kTerms, 0.2);
    CHECK(at(s, {100.0}) < hi);
    CHECK(at(s, {100.0}) > bsm_closed_form(100.0, kTerms, 0.2 / (1.0 + 0.05 * 60.0)));

    Surface bent = s;
    bent.slices[bent.slices.size() / 2][150] += 0.01;
    CHECK(pde_residual(bent, NonlinearModel{fb}).max_scaled > 1e-4);
  }
  SUBCASE("amplitude singular on the price range is rejected") {
    const FeedbackParams fb{0.0, 0.2, RationalAmplitude{1.0, 0.05}};
    CHECK_THROWS_AS(solve_nonlinear_1d(fb, kTerms, Payoff::forward(150.0), g, 1e-8, 15), InvalidInput);
  }
}

TEST_CASE("pde residual of linear solvers") {
  const Grid g = make_grid({log_axis("p", 100.0, 1.0, 101)}, 1.0, 50);
  const Surface s = solve_bsm_1d(0.2, kTerms, Payoff::call(100.0), g);
  CHECK(pde_residual(s, BsmModel{0.2}).max_scaled < 1e-10);
  CHECK(pde_residual(s, BsmModel{0.3}).max_scaled > 1e-4);
  CHECK_THROWS_AS(pde_residual(s, HestonModel{standard_variance()}), InvalidInput);
}
