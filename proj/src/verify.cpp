#include "cvp/verify.hpp"

#include "cvp/analytic.hpp"
#include "cvp/error.hpp"
#include "cvp/marketdata.hpp"
#include "cvp/montecarlo.hpp"
#include "cvp/pde.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>

namespace cvp {

bool CriterionResult::passed() const {
  if (!error.empty() || checks.empty()) return false;
  return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
}

namespace {

using Clock = std::chrono::steady_clock;

class Ctx {
 public:
  Ctx(CriterionResult& r, double scale) : r_(r), scale_(scale), start_(Clock::now()) {}

  void check(std::string name, double measured, double tolerance, bool scalable = true) {
    Check c{std::move(name), measured, tolerance, scalable, false};
    const double tol = scalable ? tolerance * scale_ : tolerance;
    c.tolerance = tol;
    c.passed = std::isfinite(measured) && measured <= tol;
    r_.checks.push_back(std::move(c));
  }
  void runtime(double limit) { check("runtime [s]", elapsed(), limit, false); }
  [[nodiscard]] double elapsed() const {
    return std::chrono::duration<double>(Clock::now() - start_).count();
  }

 private:
  CriterionResult& r_;
  double scale_;
  Clock::time_point start_;
};

constexpr double kSpot = 100.0;
constexpr double kRate = 0.05;

PricingTerms call_terms(double strike, double tau = 1.0) {
  return PricingTerms{kRate, tau, strike, OptionKind::call};
}
PricingTerms put_terms(double strike, double tau = 1.0) {
  return PricingTerms{kRate, tau, strike, OptionKind::put};
}

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

StochVolParams standard_variance() {
  StochVolParams sv;
  sv.alpha_x = 2.0;
  sv.theta_x = 0.04;
  sv.sigma_x = 0.3;
  sv.lambda_xc = -0.5;
  sv.vartheta = 0.0;
  return sv;
}

TwoFactorParams two_factor(double sc, double sv, double lam) {
  return TwoFactorParams{0.1, sc, 0.05, sv, lam};
}

ExpectationParams expectation_set() {
  ExpectationParams e;
  e.mu = {0.02, -0.01, 0.03, 0.0};
  e.sigma = {0.15, 0.10, 0.12, 0.08};
  e.a = {1.0, 0.5, 0.0, 0.2};
  e.b = {0.0, 0.3, 0.8, 0.1};
  e.corr << 1.0, 0.3, 0.1, 0.0,
            0.3, 1.0, -0.2, 0.1,
            0.1, -0.2, 1.0, 0.25,
            0.0, 0.1, 0.25, 1.0;
  return e;
}

SimConfig mc_config(std::size_t paths, std::size_t steps, std::uint64_t seed) {
  SimConfig c;
  c.n_paths = paths;
  c.n_steps = steps;
  c.horizon = 1.0;
  c.seed = seed;
  return c;
}

// Grid factories. Traded axes are centred on the spot so it sits on a node.
Grid bsm_grid(std::size_t n, std::size_t n_t, double half_width = 1.0) {
  return make_grid({log_axis("p", kSpot, half_width, n)}, 1.0, n_t);
}

Grid two_factor_grid() {
  return make_grid({log_axis("p", kSpot, 1.2, 201), log_axis("V", 1.0, 0.5, 21)}, 1.0, 200);
}

Axis variance_axis(std::size_t n, double hi) { return linear_axis("x", 0.0, hi, n); }

// ----------------------------------------------------------------- criteria

void criterion_1(Ctx& ctx, const VerifyOptions&) {
  const PricingTerms t = call_terms(100.0);
  ctx.check("closed form |BSM - 10.450584|", std::abs(bsm_closed_form(kSpot, t, 0.2) - 10.450584), 1e-5);
  const Surface s = solve_bsm_1d(0.2, t, Payoff::call(100.0), bsm_grid(400, 400));
  const double p[1] = {kSpot};
  ctx.check("400x400 |FD - 10.450584|", std::abs(s.value_at(p) - 10.450584), 1e-3);
  ctx.runtime(5.0);
}

void criterion_2(Ctx& ctx, const VerifyOptions&) {
  struct Set {
    double sc, sv, lam;
    const char* label;
  };
  const Set sets[] = {{0.3, 0.2, 0.5, "(0.3,0.2,0.5)"},
                      {0.35, 0.15, 1.0, "(0.35,0.15,1)"},
                      {0.3, 0.0, 0.3, "(0.3,0,0.3)"}};
  const double ps[] = {85.0, 92.0, 100.0, 108.0, 115.0};
  const double vs[] = {0.9, 1.1};
  const PricingTerms t = call_terms(100.0);
  for (const Set& s : sets) {
    const TwoFactorParams prm = two_factor(s.sc, s.sv, s.lam);
    const double sigma = std::sqrt(derived_price_dynamics(prm).sigma_sq);
    const Surface surf = solve_two_factor_2d(prm, t, Payoff::call(100.0), two_factor_grid());
    double worst = 0.0, vvar = 0.0;
    for (double p : ps) {
      const double ref = bsm_closed_form(p, t, sigma);
      for (double v : vs) {
        const double pt[2] = {p, v};
        worst = std::max(worst, rel(surf.value_at(pt), ref));
      }
      const double mid[2] = {p, 1.0};
      const double level = surf.value_at(mid);
      double lo = level, hi = level;
      for (double v = 0.7; v <= 1.4 + 1e-12; v += 0.05) {
        const double pt[2] = {p, v};
        const double x = surf.value_at(pt);
        lo = std::min(lo, x);
        hi = std::max(hi, x);
      }
      vvar = std::max(vvar, (hi - lo) / level);
    }
    ctx.check(std::string("rel. error vs BSM(sigma) ") + s.label, worst, 5e-3);
    ctx.check(std::string("V-variation / price ") + s.label, vvar, 1e-3);
  }
  ctx.runtime(60.0);
}

void criterion_3(Ctx& ctx, const VerifyOptions& o) {
  const PricingTerms t = call_terms(90.0);
  const TwoFactorModel m{two_factor(0.2, 0.2, 1.0)};
  const McResult r = price_mc(m, Payoff::call(90.0), t, McState{kSpot, 1.0, 0.0, {}},
                              mc_config(100000, 252, o.seed + 3));
  const double exact = std::max(kSpot - 90.0 * std::exp(-kRate), 0.0);
  ctx.check("|MC - (p0 - K e^{-r tau})| (rounding only)", std::abs(r.price - exact), 1e-9);
  ctx.check("std_error (must be exactly 0)", r.std_error, 0.0, false);
}

void criterion_4(Ctx& ctx, const VerifyOptions& o) {
  struct Set {
    double sc, sv, lam;
    const char* label;
  };
  // ϱ = λσ_cσ_v − σ_v² ∈ {−0.01, 0, 0.02}
  const Set sets[] = {{0.3, 0.2, 0.5, "rho=-0.01"}, {0.4, 0.2, 0.5, "rho=0"}, {0.375, 0.2, 0.8, "rho=0.02"}};
  const PricingTerms t{kRate, 1.0, 0.0, OptionKind::call};
  const Grid g = make_grid({log_axis("p", kSpot, 1.0, 101), log_axis("V", 1.0, 1.0, 101)}, 1.0, 50);
  for (const Set& s : sets) {
    const TwoFactorParams prm = two_factor(s.sc, s.sv, s.lam);
    const Surface surf = solve_two_factor_2d(prm, t, Payoff::claim_pv(), g);
    double worst = 0.0;
    for (const auto& [p, v] : {std::pair{90.0, 0.9}, {100.0, 1.0}, {110.0, 1.1}}) {
      const double pt[2] = {p, v};
      worst = std::max(worst, rel(surf.value_at(pt),
                                  linear_payoff_exact(p, v, t, prm, LinearPayoff::value_claim)));
    }
    ctx.check(std::string("PDE rel. error ") + s.label, worst, 2e-3);
    const McResult r = price_mc(TwoFactorModel{prm}, Payoff::claim_pv(), t,
                                McState{kSpot, 1.0, 0.0, {}}, mc_config(200000, 1, o.seed + 4));
    const double exact = linear_payoff_exact(kSpot, 1.0, t, prm, LinearPayoff::value_claim);
    ctx.check(std::string("MC |error|/SE ") + s.label, std::abs(r.price - exact) / r.std_error, 3.0);
  }
}

void criterion_5(Ctx& ctx, const VerifyOptions& o) {
  const ExpectationParams prm = expectation_set();
  const double sigma_p = std::sqrt(derived_expectation_dynamics(prm).sigma_p_sq);
  const PricingTerms t = call_terms(100.0);
  const McResult r = price_mc(ExpectationsModel{prm}, Payoff::call(100.0), t,
                              McState{kSpot, 1.0, 0.0, {}}, mc_config(1000000, 1, o.seed + 5));
  const double ref = bsm_closed_form(kSpot, t, sigma_p);
  ctx.check("MC |error|/SE (1e6 paths)", std::abs(r.price - ref) / r.std_error, 3.0);

  const Grid g = make_grid({log_axis("p", kSpot, 0.45, 16), linear_axis("x1", -0.5, 0.5, 16),
                            linear_axis("x2", -0.5, 0.5, 16), linear_axis("x3", -0.5, 0.5, 16)},
                           1.0, 1);
  const Surface s = solve_expectation_4d(prm, t, Payoff::call(100.0), g);
  double worst = 0.0;
  for (double p : {90.0, 95.0, 100.0, 105.0, 110.0}) {
    const double pt[4] = {p, 0.0, 0.0, 0.0};
    worst = std::max(worst, rel(s.value_at(pt), bsm_closed_form(p, t, sigma_p)));
  }
  ctx.check("16^4 explicit PDE rel. error", worst, 2e-2);
  ctx.runtime(180.0);
}

void criterion_6(Ctx& ctx, const VerifyOptions&) {
  const PricingTerms t = call_terms(100.0);
  const double p[1] = {kSpot};
  {
    FeedbackParams fb{0.0, 0.2, ConstantAmplitude{1.5}};
    const Surface s = solve_nonlinear_1d(fb, t, Payoff::call(100.0), bsm_grid(801, 400, 1.5), 1e-8, 50);
    ctx.check("A=1.5: |FD - BSM(0.3)|", std::abs(s.value_at(p) - bsm_closed_form(kSpot, t, 0.3)), 1e-3);
  }
  {
    FeedbackParams fb{0.0, 0.2, RationalAmplitude{1.0, 0.05}};
    const Surface s = solve_nonlinear_1d(fb, t, Payoff::call(100.0), bsm_grid(400, 400), 1e-8, 50);
    const std::size_t iters =
        *std::max_element(s.meta.picard_iterations.begin(), s.meta.picard_iterations.end());
    ctx.check("A=1/(1+0.05S): converged (0 = yes)", s.meta.converged ? 0.0 : 1.0, 0.0, false);
    ctx.check("A=1/(1+0.05S): max Picard iterations", static_cast<double>(iters), 15.0, false);
    ctx.check("A=1/(1+0.05S): pde_residual", s.meta.final_residual, 1e-6);
  }
  {
    FeedbackParams fb{0.0, 0.2, RationalAmplitude{1.0, 0.05}};
    const PricingTerms tf{kRate, 1.0, 100.0, OptionKind::call};
    // A = 1/(1 + 0.05 S) needs S > -20, so the price range starts at 85
    const Grid g = make_grid({Axis{"p", 400, 85.0, 300.0, AxisTransform::logarithmic}}, 1.0, 400);
    const Surface s = solve_nonlinear_1d(fb, tf, Payoff::forward(100.0), g, 1e-8, 50);
    double worst = 0.0;
    for (std::size_t i = 1; i + 1 < s.node_count(); ++i) {
      const double x = s.spot_coordinates(i, 1.0)[0];
      worst = std::max(worst, std::abs(s.values()[i] - (x - 100.0 * std::exp(-kRate))));
    }
    ctx.check("forward payoff max |error|", worst, 1e-6);
  }
}

Grid heston_grid(std::size_t n_p, std::size_t n_x, double x_hi, std::size_t n_t) {
  return make_grid({log_axis("p", kSpot, 1.2, n_p), variance_axis(n_x, x_hi)}, 1.0, n_t);
}

void criterion_7(Ctx& ctx, const VerifyOptions& o) {
  const StochVolParams sv = standard_variance();
  for (double k : {80.0, 100.0, 120.0}) {
    const PricingTerms t = call_terms(k);
    const Surface s = solve_heston_2d(sv, t, Payoff::call(k), heston_grid(161, 81, 0.6, 100));
    const double pt[2] = {kSpot, 0.04};
    char name[64];
    std::snprintf(name, sizeof name, "K=%g rel. error vs characteristic function", k);
    ctx.check(name, rel(s.value_at(pt), heston_cf_price(kSpot, t, sv, 0.04)), 5e-3);
  }
  const PricingTerms t = call_terms(100.0);
  SimConfig cfg = mc_config(1000000, 252, o.seed + 7);
  cfg.antithetic = true;
  const McResult r = price_mc(HestonModel{sv}, Payoff::call(100.0), t, McState{kSpot, 1.0, 0.04, {}}, cfg);
  ctx.check("oracle: |CF - MC|/SE (1e6 paths)",
            std::abs(heston_cf_price(kSpot, t, sv, 0.04) - r.price) / r.std_error, 3.0);
  ctx.check("oracle: MC std_error", r.std_error, 1e-2);
  ctx.runtime(60.0);
}

void criterion_8(Ctx& ctx, const VerifyOptions& o) {
  const PricingTerms t = call_terms(100.0);
  const Axis p_axis = log_axis("p", kSpot, 1.2, 128);
  const Axis v_axis = log_axis("V", 1.0, 0.4, 10);
  const Axis x_axis = variance_axis(64, 0.504);  // node 5 sits at x = 0.04
  const Grid g3 = make_grid({p_axis, v_axis, x_axis}, 1.0, 100);
  const double probes[] = {90.0, 100.0, 110.0};

  {
    StochVolParams sv = standard_variance();
    const Surface s3 = solve_stochvol_3d(two_factor(0.2, 0.0, 0.5), sv, t, Payoff::call(100.0), g3);
    const Surface s2 = solve_heston_2d(sv, t, Payoff::call(100.0), make_grid({p_axis, x_axis}, 1.0, 100));
    double worst = 0.0;
    for (double p : probes)
      for (double v : {0.8, 1.0, 1.25}) {
        const double a[3] = {p, v, 0.04};
        const double b[2] = {p, 0.04};
        worst = std::max(worst, rel(s3.value_at(a), s2.value_at(b)));
      }
    ctx.check("sigma_v=0: rel. diff vs Heston 2D", worst, 1e-2);
  }
  {
    StochVolParams sv = standard_variance();
    sv.sigma_x = 0.0;
    const TwoFactorParams prm = two_factor(0.2, 0.15, 0.5);
    const Surface s3 = solve_stochvol_3d(prm, sv, t, Payoff::call(100.0), g3);
    const Surface s2 = solve_two_factor_2d(prm, t, Payoff::call(100.0), make_grid({p_axis, v_axis}, 1.0, 100));
    double worst = 0.0;
    for (double p : probes)
      for (double v : {0.8, 1.0, 1.25}) {
        const double a[3] = {p, v, 0.04};
        const double b[2] = {p, v};
        worst = std::max(worst, rel(s3.value_at(a), s2.value_at(b)));
      }
    ctx.check("sigma_x=0: rel. diff vs two-factor 2D (sigma_c=0.2)", worst, 1e-2);
  }
  {
    const StochVolParams sv = standard_variance();
    const TwoFactorParams prm = two_factor(0.2, 0.15, 0.5);
    const Surface s3 = solve_stochvol_3d(prm, sv, t, Payoff::call(100.0), g3);
    const McResult r = price_mc(StochVol3dModel{prm, sv}, Payoff::call(100.0), t,
                                McState{kSpot, 1.0, 0.04, {}}, mc_config(1000000, 252, o.seed + 8));
    const double a[3] = {kSpot, 1.0, 0.04};
    ctx.check("full parameters: |PDE - MC|/SE", std::abs(s3.value_at(a) - r.price) / r.std_error, 3.0);
  }
  ctx.runtime(600.0);
}

void criterion_9(Ctx& ctx, const VerifyOptions& o) {
  const PricingTerms t = call_terms(100.0);
  const StochVolParams sv = standard_variance();
  struct Case {
    const char* name;
    Model model;
    std::size_t steps;
  };
  const Case cases[] = {
      {"bsm", BsmModel{0.2}, 1},
      {"two-factor", TwoFactorModel{two_factor(0.3, 0.2, 0.5)}, 1},
      {"expectations", ExpectationsModel{expectation_set()}, 1},
      {"heston", HestonModel{sv}, 252},
      {"stochvol-3d", StochVol3dModel{two_factor(0.2, 0.15, 0.5), sv}, 252},
  };
  std::uint64_t k = 0;
  for (const Case& c : cases) {
    const McState init{kSpot, 2.0, 0.04, {}};
    const MartingaleCheck m = mc_discounted_means(c.model, t, init, mc_config(1000000, c.steps, o.seed + 90 + k++));
    ctx.check(std::string(c.name) + ": |e^{-r tau}E[p_T] - p0|/SE", std::abs(m.price.price - init.p0) / m.price.std_error, 3.0);
    if (m.volume.n_paths > 0)
      ctx.check(std::string(c.name) + ": |e^{-r tau}E[V_T] - v0|/SE",
                std::abs(m.volume.price - init.v0) / m.volume.std_error, 3.0);
  }
}

void criterion_10(Ctx& ctx, const VerifyOptions& o) {
  const TwoFactorParams prm{0.1, 0.3, 0.05, 0.2, 0.5};
  const std::size_t n = 100000;
  const double dt = 1.0 / 252.0;
  SimConfig cfg;
  cfg.n_paths = 1;
  cfg.n_steps = n;
  cfg.horizon = static_cast<double>(n) * dt;
  cfg.seed = o.seed + 10;
  const PathBundle b = simulate_two_factor(prm, 100.0, 1.0, cfg);

  std::vector<TransactionRecord> ticks(b.n_times());
  for (std::size_t i = 0; i < b.n_times(); ++i)
    ticks[i] = {static_cast<double>(i) * dt, b.at(0, i, 0), b.at(0, i, 1)};
  const AggregatedSeries s = aggregate_vwap(ticks, AggregationConfig{dt, 0.0});

  double total_ticks_c = 0.0, total_ticks_v = 0.0, total_win_c = 0.0, total_win_v = 0.0;
  for (const auto& r : ticks) {
    total_ticks_c += r.c;
    total_ticks_v += r.v;
  }
  std::size_t outside = 0;
  for (const Window& w : s.windows) {
    total_win_c += w.sum_c;
    total_win_v += w.sum_v;
    if (!w.gap() && (w.vwap < w.min_price || w.vwap > w.max_price)) ++outside;
  }
  ctx.check("conservation |sum C windows - sum C ticks|", std::abs(total_win_c - total_ticks_c), 0.0, false);
  ctx.check("conservation |sum V windows - sum V ticks|", std::abs(total_win_v - total_ticks_v), 0.0, false);
  ctx.check("windows with VWAP outside [min, max] price", static_cast<double>(outside), 0.0, false);
  ctx.check("windows built (must equal ticks)",
            std::abs(static_cast<double>(s.windows.size()) - static_cast<double>(ticks.size())), 0.0, false);

  const CalibrationResult c = calibrate_two_factor(s, 1.0 / dt);
  ctx.check("|mu_c hat - mu_c|/SE", std::abs(c.mu_c - prm.mu_c) / c.se.mu_c, 4.0);
  ctx.check("|sigma_c hat - sigma_c|/SE", std::abs(c.sigma_c - prm.sigma_c) / c.se.sigma_c, 4.0);
  ctx.check("|mu_v hat - mu_v|/SE", std::abs(c.mu_v - prm.mu_v) / c.se.mu_v, 4.0);
  ctx.check("|sigma_v hat - sigma_v|/SE", std::abs(c.sigma_v - prm.sigma_v) / c.se.sigma_v, 4.0);
  ctx.check("|lambda hat - lambda|/SE", std::abs(c.lambda - prm.lambda) / c.se.lambda, 4.0);

  const std::vector<TransactionRecord> pair = {{0.1, 10.0, 10.0}, {0.2, 100.0, 50.0}};
  const GapSummary g = vwap_gap(aggregate_vwap(pair, AggregationConfig{1.0, 0.0}));
  ctx.check("gap example |gap - 2/11|", std::abs(g.gap.at(0) - 2.0 / 11.0), 1e-15);
  ctx.check("gap example rounded to 4 digits equals 0.1818",
            std::abs(std::round(g.gap.at(0) * 1e4) / 1e4 - 0.1818), 0.0, false);
}

double parity_gap(const Surface& call, const Surface& put, std::span<const double> pt, double strike) {
  return std::abs(call.value_at(pt) - put.value_at(pt) - (pt[0] - strike * std::exp(-kRate)));
}

void criterion_11(Ctx& ctx, const VerifyOptions&) {
  const PricingTerms t = call_terms(100.0);
  const double ref = bsm_closed_form(kSpot, t, 0.2);
  const double p[1] = {kSpot};
  double err[3];
  const std::size_t ns[3] = {100, 200, 400};
  for (int i = 0; i < 3; ++i) {
    const Surface s = solve_bsm_1d(0.2, t, Payoff::call(100.0), bsm_grid(ns[i] + 1, ns[i]));
    err[i] = std::abs(s.value_at(p) - ref);
  }
  const double slope = std::log2(err[0] / err[2]) / 2.0;
  ctx.check("|refinement slope - 2| (100/200/400)", std::abs(slope - 2.0), 0.3, false);

  const PricingTerms tp = put_terms(100.0);
  {
    const Grid g = bsm_grid(400, 400);
    const Surface c = solve_bsm_1d(0.2, t, Payoff::call(100.0), g);
    const Surface q = solve_bsm_1d(0.2, tp, Payoff::put(100.0), g);
    double worst = 0.0;
    for (double x : {90.0, 100.0, 110.0}) {
      const double pt[1] = {x};
      worst = std::max(worst, parity_gap(c, q, pt, 100.0));
    }
    ctx.check("parity bsm-1d (abs, 2 x 1e-3)", worst, 2e-3);
  }
  {
    const TwoFactorParams prm = two_factor(0.3, 0.2, 0.5);
    const Surface c = solve_two_factor_2d(prm, t, Payoff::call(100.0), two_factor_grid());
    const Surface q = solve_two_factor_2d(prm, tp, Payoff::put(100.0), two_factor_grid());
    double worst = 0.0;
    for (double x : {90.0, 100.0, 110.0}) {
      const double pt[2] = {x, 1.0};
      worst = std::max(worst, parity_gap(c, q, pt, 100.0) / c.value_at(pt));
    }
    ctx.check("parity two-factor-2d (rel, 2 x 0.5%)", worst, 1e-2);
  }
  {
    const Grid g = make_grid({log_axis("p", kSpot, 0.45, 16), linear_axis("x1", -0.5, 0.5, 16),
                              linear_axis("x2", -0.5, 0.5, 16), linear_axis("x3", -0.5, 0.5, 16)},
                             1.0, 1);
    const Surface c = solve_expectation_4d(expectation_set(), t, Payoff::call(100.0), g);
    const Surface q = solve_expectation_4d(expectation_set(), tp, Payoff::put(100.0), g);
    double worst = 0.0;
    for (double x : {90.0, 100.0, 110.0}) {
      const double pt[4] = {x, 0.0, 0.0, 0.0};
      worst = std::max(worst, parity_gap(c, q, pt, 100.0) / c.value_at(pt));
    }
    ctx.check("parity expectations-4d (rel, 2 x 2%)", worst, 4e-2);
  }
  const StochVolParams sv = standard_variance();
  {
    const Grid g = heston_grid(161, 81, 0.6, 100);
    const Surface c = solve_heston_2d(sv, t, Payoff::call(100.0), g);
    const Surface q = solve_heston_2d(sv, tp, Payoff::put(100.0), g);
    double worst = 0.0;
    for (double x : {90.0, 100.0, 110.0}) {
      const double pt[2] = {x, 0.04};
      worst = std::max(worst, parity_gap(c, q, pt, 100.0) / c.value_at(pt));
    }
    ctx.check("parity heston-2d (rel, 2 x 0.5%)", worst, 1e-2);
  }
  {
    const Grid g = make_grid({log_axis("p", kSpot, 1.2, 64), log_axis("V", 1.0, 0.4, 8),
                              variance_axis(32, 0.6)},
                             1.0, 50);
    const TwoFactorParams prm = two_factor(0.2, 0.15, 0.5);
    const Surface c = solve_stochvol_3d(prm, sv, t, Payoff::call(100.0), g);
    const Surface q = solve_stochvol_3d(prm, sv, tp, Payoff::put(100.0), g);
    double worst = 0.0;
    for (double x : {90.0, 100.0, 110.0}) {
      const double pt[3] = {x, 1.0, 0.04};
      worst = std::max(worst, parity_gap(c, q, pt, 100.0) / c.value_at(pt));
    }
    ctx.check("parity stochvol-3d (rel, 2 x 1%)", worst, 2e-2);
  }
}

struct Entry {
  int id;
  const char* title;
  void (*run)(Ctx&, const VerifyOptions&);
};

const Entry kCriteria[] = {
    {1, "1D solver vs closed form", criterion_1},
    {2, "2D reduction to effective-volatility BSM", criterion_2},
    {3, "degenerate-diffusion limit (MC)", criterion_3},
    {4, "value-claim exact solution (PDE and MC)", criterion_4},
    {5, "expectations model (MC and 16^4 PDE)", criterion_5},
    {6, "nonlinear feedback equation", criterion_6},
    {7, "Heston PDE vs characteristic function", criterion_7},
    {8, "3D reduction chain and MC", criterion_8},
    {9, "discounted martingale checks", criterion_9},
    {10, "market-data round trip", criterion_10},
    {11, "convergence order and put-call parity", criterion_11},
};

}  // namespace

std::vector<CriterionResult> run_acceptance(const VerifyOptions& opts, const CriterionSink& sink) {
  if (!(opts.tolerance_scale > 0.0)) throw InvalidInput("tolerance scale must be > 0");
  std::vector<CriterionResult> out;
  for (const Entry& e : kCriteria) {
    if (!opts.only.empty() && std::find(opts.only.begin(), opts.only.end(), e.id) == opts.only.end())
      continue;
    CriterionResult r;
    r.id = e.id;
    r.title = e.title;
    Ctx ctx(r, opts.tolerance_scale);
    try {
      e.run(ctx, opts);
    } catch (const std::exception& ex) {
      r.error = ex.what();
    }
    r.seconds = ctx.elapsed();
    if (sink) sink(r);
    out.push_back(std::move(r));
  }
  return out;
}

void print_criterion(std::ostream& out, const CriterionResult& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%s  criterion %2d: %s (%.2f s)\n", r.passed() ? "PASS" : "FAIL", r.id,
                r.title.c_str(), r.seconds);
  out << buf;
  for (const Check& c : r.checks) {
    std::snprintf(buf, sizeof buf, "      %-4s %-58s measured %-12.4g tolerance %.4g\n",
                  c.passed ? "ok" : "FAIL", c.name.c_str(), c.measured, c.tolerance);
    out << buf;
  }
  if (!r.error.empty()) out << "      error: " << r.error << '\n';
}

}  // namespace cvp
