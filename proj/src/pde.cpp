#include "cvp/pde.hpp"

#include "cvp/error.hpp"
#include "pde_engine.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>

namespace cvp {

using detail::AxisGeom;
using detail::Boundary;
using detail::Engine;

// ---------------------------------------------------------------- axes, grid

double Axis::node(std::size_t i) const {
  const double t = static_cast<double>(i) / static_cast<double>(n - 1);
  if (is_log()) {
    const double a = std::log(lo);
    const double b = std::log(hi);
    return a + t * (b - a);
  }
  return lo + t * (hi - lo);
}

double Axis::spacing() const {
  const double width = is_log() ? std::log(hi) - std::log(lo) : hi - lo;
  return width / static_cast<double>(n - 1);
}

Axis log_axis(std::string name, double center, double half_width, std::size_t n) {
  if (!(center > 0.0) || !(half_width > 0.0) || n < 2)
    throw InvalidInput("log_axis: need center > 0, half_width > 0, n >= 2");
  const double h = 2.0 * half_width / static_cast<double>(n - 1);
  const double m = static_cast<double>((n - 1) / 2);
  const double lo_u = std::log(center) - m * h;
  const double hi_u = lo_u + static_cast<double>(n - 1) * h;
  return Axis{std::move(name), n, std::exp(lo_u), std::exp(hi_u), AxisTransform::logarithmic};
}

Axis linear_axis(std::string name, double lo, double hi, std::size_t n) {
  return Axis{std::move(name), n, lo, hi, AxisTransform::linear};
}

Grid make_grid(std::vector<Axis> axes, double tau, std::size_t n_t, std::size_t rannacher) {
  if (n_t == 0 || !(tau > 0.0)) throw InvalidInput("make_grid: need n_t >= 1 and tau > 0");
  return Grid{std::move(axes), tau / static_cast<double>(n_t), n_t, rannacher};
}

void validate(const Grid& grid) {
  if (grid.axes.empty() || grid.axes.size() > 4) throw InvalidInput("grid: 1 to 4 axes required");
  for (const Axis& ax : grid.axes) {
    if (ax.n < 8) throw InvalidInput("axis '" + ax.name + "': at least 8 points required");
    if (!(ax.lo < ax.hi)) throw InvalidInput("axis '" + ax.name + "': lo must be < hi");
    if (ax.is_log() && !(ax.lo > 0.0))
      throw InvalidInput("axis '" + ax.name + "': logarithmic axis requires lo > 0");
  }
  if (grid.n_t == 0 || !(grid.dt > 0.0)) throw InvalidInput("grid: need n_t >= 1 and dt > 0");
}

// ---------------------------------------------------------------- surface

std::size_t Surface::node_count() const {
  std::size_t n = 1;
  for (const Axis& ax : grid.axes) n *= ax.n;
  return n;
}

std::size_t Surface::stride(std::size_t axis) const {
  std::size_t s = 1;
  for (std::size_t a = 0; a < axis; ++a) s *= grid.axes[a].n;
  return s;
}

std::vector<double> Surface::spot_coordinates(std::size_t node, double t) const {
  std::vector<double> out(dims());
  for (std::size_t a = 0; a < dims(); ++a) {
    const Axis& ax = grid.axes[a];
    const std::size_t i = (node / stride(a)) % ax.n;
    out[a] = ax.is_log() ? std::exp(ax.node(i) - rate * t) : ax.node(i);
  }
  return out;
}

namespace {

// Position of a natural coordinate on an axis, in node units.
double axis_position(const Axis& ax, double x, double rate, double t) {
  const double c = ax.is_log() ? std::log(x) + rate * t : x;
  const double lo = ax.node(0);
  return (c - lo) / ax.spacing();
}

void lagrange4(double x, std::array<double, 4>& w) {
  // nodes at 0, 1, 2, 3
  w[0] = -(x - 1.0) * (x - 2.0) * (x - 3.0) / 6.0;
  w[1] = x * (x - 2.0) * (x - 3.0) / 2.0;
  w[2] = -x * (x - 1.0) * (x - 3.0) / 2.0;
  w[3] = x * (x - 1.0) * (x - 2.0) / 6.0;
}

}  // namespace

bool Surface::contains(std::span<const double> point, double t) const {
  if (point.size() != dims()) return false;
  for (std::size_t a = 0; a < dims(); ++a) {
    const Axis& ax = grid.axes[a];
    if (ax.is_log() && !(point[a] > 0.0)) return false;
    const double pos = axis_position(ax, point[a], rate, t);
    if (!(pos >= -1e-9 && pos <= static_cast<double>(ax.n - 1) + 1e-9)) return false;
  }
  return true;
}

double Surface::slice_value(std::size_t slice, std::span<const double> point, Interp interp) const {
  if (point.size() != dims()) throw InvalidInput("surface lookup: dimension mismatch");
  const double t = times.size() == slices.size() ? times[slice] : tau;
  if (!contains(point, t)) throw InvalidInput("surface lookup: point outside the grid");
  const auto& vals = slices[slice];

  const std::size_t d = dims();
  std::array<std::size_t, 4> first{};
  std::array<std::size_t, 4> count{};
  std::array<std::array<double, 4>, 4> w{};
  for (std::size_t a = 0; a < d; ++a) {
    const Axis& ax = grid.axes[a];
    const double pos = std::clamp(axis_position(ax, point[a], rate, t), 0.0,
                                  static_cast<double>(ax.n - 1));
    if (interp == Interp::cubic && ax.n >= 4) {
      const auto base = static_cast<std::size_t>(
          std::clamp(std::floor(pos) - 1.0, 0.0, static_cast<double>(ax.n - 4)));
      first[a] = base;
      count[a] = 4;
      lagrange4(pos - static_cast<double>(base), w[a]);
    } else {
      const auto base = static_cast<std::size_t>(
          std::clamp(std::floor(pos), 0.0, static_cast<double>(ax.n - 2)));
      const double f = pos - static_cast<double>(base);
      first[a] = base;
      count[a] = 2;
      w[a] = {1.0 - f, f, 0.0, 0.0};
    }
  }

  double total = 0.0;
  std::array<std::size_t, 4> k{};
  for (;;) {
    double weight = 1.0;
    std::size_t node = 0;
    for (std::size_t a = 0; a < d; ++a) {
      weight *= w[a][k[a]];
      node += (first[a] + k[a]) * stride(a);
    }
    total += weight * vals[node];
    std::size_t a = 0;
    while (a < d && ++k[a] == count[a]) k[a++] = 0;
    if (a == d) break;
  }
  return total;
}

double Surface::value_at(std::span<const double> point, Interp interp) const {
  return slice_value(slices.size() - 1, point, interp);
}

double Surface::value_at_time(double t, std::span<const double> point, Interp interp) const {
  if (!has_all_slices()) {
    if (std::abs(t - tau) <= 1e-12 * std::max(1.0, tau)) return value_at(point, interp);
    throw InvalidInput("surface lookup in time requires all time slices");
  }
  if (t < -1e-12 || t > tau * (1.0 + 1e-12)) throw InvalidInput("surface lookup: time outside span");
  const auto it = std::lower_bound(times.begin(), times.end(), t);
  std::size_t hi = static_cast<std::size_t>(it - times.begin());
  if (hi == 0) return slice_value(0, point, interp);
  if (hi >= times.size()) return slice_value(times.size() - 1, point, interp);
  const std::size_t lo = hi - 1;
  const double f = (t - times[lo]) / (times[hi] - times[lo]);
  const double a = slice_value(lo, point, interp);
  const double b = slice_value(hi, point, interp);
  return (1.0 - f) * a + f * b;
}

// ---------------------------------------------------------------- solver setup

namespace {

enum class Scheme { douglas, explicit_euler };

AxisGeom geometry(const Axis& ax, Boundary lower, Boundary upper) {
  return AxisGeom{ax.is_log(), ax.n, ax.node(0), ax.spacing(), lower, upper};
}

void require_axes(const Grid& grid, std::initializer_list<std::pair<const char*, AxisTransform>> want,
                  const char* solver) {
  validate(grid);
  if (grid.axes.size() != want.size()) {
    std::ostringstream msg;
    msg << solver << ": expected " << want.size() << " axes, got " << grid.axes.size();
    throw InvalidInput(msg.str());
  }
  std::size_t a = 0;
  for (const auto& [name, transform] : want) {
    const Axis& ax = grid.axes[a++];
    if (ax.name != name || ax.transform != transform) {
      std::ostringstream msg;
      msg << solver << ": axis " << a - 1 << " must be '" << name << "' ("
          << (transform == AxisTransform::logarithmic ? "logarithmic" : "linear") << ")";
      throw InvalidInput(msg.str());
    }
  }
}

void check_time_grid(const Grid& grid, const PricingTerms& terms) {
  validate(terms);
  const double span = grid.dt * static_cast<double>(grid.n_t);
  if (std::abs(span - terms.tau) > 1e-9 * std::max(1.0, terms.tau))
    throw InvalidInput("grid: dt * n_t must equal the time to maturity");
}

Boundary price_boundary(const Payoff& payoff) {
  return payoff.on_price_only() ? Boundary::dirichlet : Boundary::extrapolate;
}

Boundary variance_lower(const Axis& ax) {
  if (ax.lo < 0.0) throw InvalidInput("variance axis must start at lo >= 0");
  return ax.lo == 0.0 ? Boundary::degenerate : Boundary::extrapolate;
}

std::size_t estimate_bytes(const Grid& grid, bool store_all) {
  std::size_t n = 1;
  for (const Axis& ax : grid.axes) n *= ax.n;
  const std::size_t d = grid.axes.size();
  const std::size_t working = (3 + 4 * d + 6) * n * sizeof(double) + 3 * n;
  const std::size_t slices = (store_all ? grid.n_t + 2 * grid.rannacher + 1 : 2) * n * sizeof(double);
  return working + slices;
}

void check_memory(const Grid& grid, const SolverOptions& opts) {
  const std::size_t need = estimate_bytes(grid, opts.store_all_slices);
  if (need > opts.memory_cap_bytes) {
    std::ostringstream msg;
    msg << "grid needs about " << need << " bytes, above the configured cap of "
        << opts.memory_cap_bytes;
    throw InvalidInput(msg.str());
  }
}

// Terminal condition U(0) in forward coordinates (which equal spot at expiry).
std::vector<double> terminal_values(const Engine& eng, const Grid& grid, const Payoff& payoff,
                                    std::ptrdiff_t volume_axis) {
  const std::size_t n = eng.size();
  if (payoff.kind == PayoffKind::table) {
    if (payoff.table.size() != n)
      throw InvalidInput("tabulated payoff must have one value per grid node");
    return payoff.table;
  }
  if (payoff.needs_volume() && volume_axis < 0)
    throw InvalidInput("payoff '" + std::string(to_string(payoff.kind)) +
                       "' needs a volume axis the model does not have");
  std::vector<double> u(n);
  for (std::size_t node = 0; node < n; ++node) {
    const double p = std::exp(eng.axis(0).coord(eng.index(node, 0)));
    double v = 1.0;
    if (volume_axis >= 0) {
      const auto va = static_cast<std::size_t>(volume_axis);
      v = std::exp(eng.axis(va).coord(eng.index(node, va)));
    }
    u[node] = payoff(p, v);
  }
  (void)grid;
  return u;
}

struct MarchSetup {
  Scheme scheme = Scheme::douglas;
  double theta = 0.5;
};

// Integrates U from τ = 0 to τ = tau and packages the surface.
Surface march(Engine& eng, const Grid& grid, const PricingTerms& terms, std::vector<double> u,
              MarchSetup setup, const SolverOptions& opts, SurfaceMeta meta) {
  const double tau = terms.tau;
  const double rate = terms.r;
  std::size_t n_t = grid.n_t;
  std::size_t rannacher = std::min(grid.rannacher, n_t);

  if (setup.scheme == Scheme::explicit_euler) {
    const double bound = eng.explicit_dt_bound();
    const double dt = tau / static_cast<double>(n_t);
    if (dt > bound) {
      n_t = static_cast<std::size_t>(std::ceil(tau / bound));
      std::ostringstream msg;
      msg << "explicit stability bound " << bound << " < dt " << dt << ": using " << n_t
          << " steps";
      meta.notices.push_back(msg.str());
    }
    rannacher = 0;
  } else {
    const double bound = eng.mixed_dt_bound();
    std::size_t halvings = 0;
    while (tau / static_cast<double>(n_t) > bound) {
      n_t *= 2;
      ++halvings;
    }
    if (halvings > 0) {
      std::ostringstream msg;
      msg << "explicit mixed-derivative bound " << bound << ": dt halved " << halvings
          << " time(s), " << n_t << " steps";
      meta.notices.push_back(msg.str());
    }
  }
  const double dt = tau / static_cast<double>(n_t);

  Surface s;
  s.grid = grid;
  s.grid.dt = dt;
  s.grid.n_t = n_t;
  s.grid.rannacher = rannacher;
  s.rate = rate;
  s.tau = tau;
  meta.time_steps = n_t;

  auto store = [&](double t, const std::vector<double>& uu) {
    std::vector<double> sv(uu.size());
    const double df = std::exp(-rate * t);
    for (std::size_t i = 0; i < uu.size(); ++i) sv[i] = df * uu[i];
    s.times.push_back(t);
    s.slices.push_back(std::move(sv));
  };
  store(0.0, u);

  double t = 0.0;
  for (std::size_t step = 0; step < n_t; ++step) {
    const double t_next = tau * static_cast<double>(step + 1) / static_cast<double>(n_t);
    if (setup.scheme == Scheme::explicit_euler) {
      eng.explicit_step(u, t_next - t);
      s.thetas.push_back(0.0);
    } else if (step < rannacher) {
      const double half = 0.5 * (t_next - t);
      eng.douglas_step(u, half, 1.0);
      s.thetas.push_back(1.0);
      if (opts.store_all_slices) store(t + half, u); else s.times.push_back(t + half);
      eng.douglas_step(u, t_next - (t + half), 1.0);
      s.thetas.push_back(1.0);
    } else {
      eng.douglas_step(u, t_next - t, setup.theta);
      s.thetas.push_back(setup.theta);
    }
    t = t_next;
    if (opts.store_all_slices || step + 1 == n_t) store(t, u); else s.times.push_back(t);
  }
  if (!opts.store_all_slices) {
    // keep only expiry and valuation slices
    s.times = {0.0, tau};
    s.thetas.clear();
  }
  for (double v : s.slices.back())
    if (!std::isfinite(v)) throw NumericError("solver produced non-finite values");
  s.meta = std::move(meta);
  return s;
}

// Richardson estimate against the same problem on a grid of half resolution.
void estimate_accuracy(Surface& fine, const std::function<Surface(const Grid&)>& resolve,
                       double target) {
  if (!(target > 0.0)) return;
  Grid coarse = fine.grid;
  for (Axis& ax : coarse.axes) ax.n = std::max<std::size_t>(8, (ax.n + 1) / 2);
  coarse.n_t = std::max<std::size_t>(1, fine.grid.n_t / 2);
  coarse.dt = fine.tau / static_cast<double>(coarse.n_t);
  const Surface rough = resolve(coarse);

  double worst = 0.0;
  const std::size_t n = fine.node_count();
  for (std::size_t node = 0; node < n; ++node) {
    bool central = true;
    for (std::size_t a = 0; a < fine.dims(); ++a) {
      const std::size_t i = (node / fine.stride(a)) % fine.grid.axes[a].n;
      const std::size_t na = fine.grid.axes[a].n;
      central = central && i >= na / 4 && i <= 3 * na / 4;
    }
    if (!central) continue;
    const auto pt = fine.spot_coordinates(node, fine.tau);
    if (!rough.contains(pt, rough.tau)) continue;
    worst = std::max(worst, std::abs(fine.values()[node] - rough.value_at(pt)));
  }
  fine.meta.error_estimate = worst / 3.0;
  if (fine.meta.error_estimate > target) {
    fine.meta.accuracy_flag = true;
    std::ostringstream msg;
    msg << "estimated error " << fine.meta.error_estimate << " exceeds requested tolerance "
        << target;
    fine.meta.notices.push_back(msg.str());
  }
}

// ------------------------------------------------------------ coefficients

void set_bsm(Engine& eng, double sigma) { eng.diff(0).set(0.5 * sigma * sigma); }

void set_two_factor(Engine& eng, const TwoFactorParams& params) {
  const DerivedPriceDynamics dyn = derived_price_dynamics(params);
  const double var_v = params.sigma_v * params.sigma_v;
  // [[σ², ϱ], [ϱ, σ_v²]] is the covariance of (σ_c dW_c − σ_v dW_v, σ_v dW_v).
  if (dyn.sigma_sq * var_v - dyn.rho * dyn.rho < -1e-12)
    throw NumericError("two-factor diffusion matrix is not positive semidefinite");
  eng.diff(0).set(0.5 * dyn.sigma_sq);
  eng.diff(1).set(0.5 * var_v);
  if (dyn.rho != 0.0) eng.mixed(0, 1).set(dyn.rho);
}

void set_expectations(Engine& eng, const ExpectationParams& params, double rate) {
  const DerivedExpectationDynamics dyn = derived_expectation_dynamics(params);
  eng.diff(0).set(0.5 * dyn.sigma_p_sq);
  for (std::size_t j = 0; j < 3; ++j) {
    const std::size_t a = j + 1;
    eng.diff(a).set(0.5 * params.sigma[j] * params.sigma[j]);
    eng.drift(a).resize(eng.size());
    for (std::size_t node = 0; node < eng.size(); ++node)
      eng.drift(a).at(node) = rate * eng.axis(a).coord(eng.index(node, a));
    if (dyn.rho[j] != 0.0) eng.mixed(0, a).set(dyn.rho[j]);
    for (std::size_t k = j + 1; k < 3; ++k) {
      const double c = params.corr(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) *
                       params.sigma[j] * params.sigma[k];
      if (c != 0.0) eng.mixed(a, k + 1).set(c);
    }
  }
}

void set_heston(Engine& eng, const StochVolParams& sv) {
  const std::size_t n = eng.size();
  eng.diff(0).resize(n);
  eng.diff(1).resize(n);
  eng.drift(1).resize(n);
  eng.mixed(0, 1).resize(n);
  for (std::size_t node = 0; node < n; ++node) {
    const double x = std::max(eng.axis(1).coord(eng.index(node, 1)), 0.0);
    eng.diff(0).at(node) = 0.5 * x;
    eng.diff(1).at(node) = 0.5 * sv.sigma_x * sv.sigma_x * x;
    eng.drift(1).at(node) = sv.alpha_x * (sv.theta_x - x) - sv.vartheta * x;
    eng.mixed(0, 1).at(node) = sv.lambda_xc * sv.sigma_x * x;
  }
}

struct LocalCov3 {
  double pp, vv, xx, pv, px, vx;
};

// Local covariance of (d ln p, d ln V, dx) for the stochastic value-variance model.
LocalCov3 stochvol_cov(double x, const TwoFactorParams& params, const StochVolParams& sv) {
  const double sx = std::sqrt(std::max(x, 0.0));
  const double s_v = params.sigma_v;
  LocalCov3 c{};
  c.pp = x - 2.0 * params.lambda * s_v * sx + s_v * s_v;
  c.vv = s_v * s_v;
  c.xx = sv.sigma_x * sv.sigma_x * x;
  c.pv = params.lambda * s_v * sx - s_v * s_v;
  c.px = sv.sigma_x * sx * (sx * sv.lambda_xc - s_v * sv.lambda_xv);
  c.vx = s_v * sv.sigma_x * sx * sv.lambda_xv;
  return c;
}

std::vector<std::size_t> set_stochvol(Engine& eng, const TwoFactorParams& params,
                                      const StochVolParams& sv) {
  const std::size_t n = eng.size();
  for (std::size_t a = 0; a < 3; ++a) eng.diff(a).resize(n);
  eng.drift(2).resize(n);
  eng.mixed(0, 1).resize(n);
  eng.mixed(0, 2).resize(n);
  eng.mixed(1, 2).resize(n);
  std::vector<std::size_t> bad;
  for (std::size_t node = 0; node < n; ++node) {
    const double x = std::max(eng.axis(2).coord(eng.index(node, 2)), 0.0);
    const LocalCov3 c = stochvol_cov(x, params, sv);
    eng.diff(0).at(node) = 0.5 * c.pp;
    eng.diff(1).at(node) = 0.5 * c.vv;
    eng.diff(2).at(node) = 0.5 * c.xx;
    eng.drift(2).at(node) = sv.alpha_x * (sv.theta_x - x) - sv.vartheta * x;
    eng.mixed(0, 1).at(node) = c.pv;
    eng.mixed(0, 2).at(node) = c.px;
    eng.mixed(1, 2).at(node) = c.vx;

    Eigen::Matrix3d m;
    m << c.pp, c.pv, c.px, c.pv, c.vv, c.vx, c.px, c.vx, c.xx;
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(m, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -1e-12 * scale) bad.push_back(node);
  }
  return bad;
}

void set_nonlinear(Engine& eng, const FeedbackParams& fb, const std::vector<double>& s_bar) {
  eng.diff(0).resize(eng.size());
  for (std::size_t node = 0; node < eng.size(); ++node) {
    const double a = amplitude_at(fb.amplitude, s_bar[node]);
    eng.diff(0).at(node) = 0.5 * a * a * fb.sigma * fb.sigma;
  }
}

}  // namespace

// ---------------------------------------------------------------- solvers

Surface solve_bsm_1d(double sigma, const PricingTerms& terms, const Payoff& payoff,
                     const Grid& grid, const SolverOptions& opts) {
  require_axes(grid, {{"p", AxisTransform::logarithmic}}, "solve_bsm_1d");
  check_time_grid(grid, terms);
  if (!(sigma >= 0.0)) throw InvalidInput("solve_bsm_1d: sigma must be >= 0");
  if (payoff.needs_volume()) throw InvalidInput("solve_bsm_1d: payoff must be on p only");
  check_memory(grid, opts);

  const Boundary pb = price_boundary(payoff);
  Engine eng({geometry(grid.axes[0], pb, pb)});
  set_bsm(eng, sigma);
  SurfaceMeta meta;
  meta.model = "bsm";
  meta.scheme = "crank-nicolson+rannacher";
  Surface s = march(eng, grid, terms, terminal_values(eng, grid, payoff, -1),
                    {Scheme::douglas, opts.theta}, opts, std::move(meta));
  estimate_accuracy(
      s,
      [&](const Grid& g) {
        SolverOptions o = opts;
        o.target_tolerance = 0.0;
        o.store_all_slices = false;
        return solve_bsm_1d(sigma, terms, payoff, g, o);
      },
      opts.target_tolerance);
  return s;
}

Surface solve_two_factor_2d(const TwoFactorParams& params, const PricingTerms& terms,
                            const Payoff& payoff, const Grid& grid, const SolverOptions& opts) {
  require_axes(grid, {{"p", AxisTransform::logarithmic}, {"V", AxisTransform::logarithmic}},
               "solve_two_factor_2d");
  check_time_grid(grid, terms);
  validate(params);
  check_memory(grid, opts);

  const Boundary pb = price_boundary(payoff);
  Engine eng({geometry(grid.axes[0], pb, pb),
              geometry(grid.axes[1], Boundary::extrapolate, Boundary::extrapolate)});
  set_two_factor(eng, params);
  SurfaceMeta meta;
  meta.model = "two-factor";
  meta.scheme = "douglas-adi+rannacher";
  Surface s = march(eng, grid, terms, terminal_values(eng, grid, payoff, 1),
                    {Scheme::douglas, opts.theta}, opts, std::move(meta));
  estimate_accuracy(
      s,
      [&](const Grid& g) {
        SolverOptions o = opts;
        o.target_tolerance = 0.0;
        o.store_all_slices = false;
        return solve_two_factor_2d(params, terms, payoff, g, o);
      },
      opts.target_tolerance);
  return s;
}

Surface solve_expectation_4d(const ExpectationParams& params, const PricingTerms& terms,
                             const Payoff& payoff, const Grid& grid, const SolverOptions& opts) {
  require_axes(grid,
               {{"p", AxisTransform::logarithmic},
                {"x1", AxisTransform::linear},
                {"x2", AxisTransform::linear},
                {"x3", AxisTransform::linear}},
               "solve_expectation_4d");
  check_time_grid(grid, terms);
  validate(params);
  if (payoff.needs_volume()) throw InvalidInput("solve_expectation_4d: payoff must be on p only");
  check_memory(grid, opts);

  const Boundary pb = price_boundary(payoff);
  Engine eng({geometry(grid.axes[0], pb, pb),
              geometry(grid.axes[1], Boundary::extrapolate, Boundary::extrapolate),
              geometry(grid.axes[2], Boundary::extrapolate, Boundary::extrapolate),
              geometry(grid.axes[3], Boundary::extrapolate, Boundary::extrapolate)});
  set_expectations(eng, params, terms.r);
  SurfaceMeta meta;
  meta.model = "expectations";
  meta.scheme = "explicit-euler";
  return march(eng, grid, terms, terminal_values(eng, grid, payoff, -1),
               {Scheme::explicit_euler, 0.0}, opts, std::move(meta));
}

Surface solve_heston_2d(const StochVolParams& sv, const PricingTerms& terms, const Payoff& payoff,
                        const Grid& grid, const SolverOptions& opts) {
  require_axes(grid, {{"p", AxisTransform::logarithmic}, {"x", AxisTransform::linear}},
               "solve_heston_2d");
  check_time_grid(grid, terms);
  validate(sv);
  if (payoff.needs_volume()) throw InvalidInput("solve_heston_2d: payoff must be on p only");
  check_memory(grid, opts);

  const Boundary pb = price_boundary(payoff);
  Engine eng({geometry(grid.axes[0], pb, pb),
              geometry(grid.axes[1], variance_lower(grid.axes[1]), Boundary::extrapolate)});
  set_heston(eng, sv);
  SurfaceMeta meta;
  meta.model = "heston";
  meta.scheme = "douglas-adi+rannacher";
  Surface s = march(eng, grid, terms, terminal_values(eng, grid, payoff, -1),
                    {Scheme::douglas, opts.theta}, opts, std::move(meta));
  estimate_accuracy(
      s,
      [&](const Grid& g) {
        SolverOptions o = opts;
        o.target_tolerance = 0.0;
        o.store_all_slices = false;
        return solve_heston_2d(sv, terms, payoff, g, o);
      },
      opts.target_tolerance);
  return s;
}

Surface solve_stochvol_3d(const TwoFactorParams& params, const StochVolParams& sv,
                          const PricingTerms& terms, const Payoff& payoff, const Grid& grid,
                          const SolverOptions& opts) {
  require_axes(grid,
               {{"p", AxisTransform::logarithmic},
                {"V", AxisTransform::logarithmic},
                {"x", AxisTransform::linear}},
               "solve_stochvol_3d");
  check_time_grid(grid, terms);
  validate(params);
  validate(sv);
  check_memory(grid, opts);

  const Boundary pb = price_boundary(payoff);
  Engine eng({geometry(grid.axes[0], pb, pb),
              geometry(grid.axes[1], Boundary::extrapolate, Boundary::extrapolate),
              geometry(grid.axes[2], variance_lower(grid.axes[2]), Boundary::extrapolate)});
  SurfaceMeta meta;
  meta.model = "stochvol-3d";
  meta.non_psd_nodes = set_stochvol(eng, params, sv);
  MarchSetup setup{Scheme::douglas, opts.theta};
  meta.scheme = "douglas-adi+rannacher";
  if (!meta.non_psd_nodes.empty()) {
    std::ostringstream msg;
    msg << meta.non_psd_nodes.size() << " node(s) with non-PSD local diffusion (first node "
        << meta.non_psd_nodes.front() << "); falling back to explicit Euler";
    meta.notices.push_back(msg.str());
    setup = {Scheme::explicit_euler, 0.0};
    meta.scheme = "explicit-euler";
  }
  return march(eng, grid, terms, terminal_values(eng, grid, payoff, 1), setup, opts,
               std::move(meta));
}

Surface solve_nonlinear_1d(const FeedbackParams& fb, const PricingTerms& terms,
                           const Payoff& payoff, const Grid& grid, double picard_tol,
                           std::size_t picard_max, const SolverOptions& opts) {
  require_axes(grid, {{"p", AxisTransform::logarithmic}}, "solve_nonlinear_1d");
  check_time_grid(grid, terms);
  if (payoff.needs_volume()) throw InvalidInput("solve_nonlinear_1d: payoff must be on p only");
  if (!(picard_tol > 0.0) || picard_max == 0)
    throw InvalidInput("solve_nonlinear_1d: need picard_tol > 0 and picard_max >= 1");
  SolverOptions o = opts;
  o.store_all_slices = true;
  check_memory(grid, o);

  const Boundary pb = price_boundary(payoff);
  Engine eng({geometry(grid.axes[0], pb, pb)});
  std::vector<double> u = terminal_values(eng, grid, payoff, -1);
  {
    const auto [lo, hi] = std::minmax_element(u.begin(), u.end());
    check_amplitude(fb.amplitude, std::min(0.0, *lo), std::max(0.0, *hi));
  }

  const double tau = terms.tau;
  const double rate = terms.r;
  const std::size_t n_t = grid.n_t;
  const std::size_t rannacher = std::min(grid.rannacher, n_t);

  Surface s;
  s.grid = grid;
  s.grid.rannacher = rannacher;
  s.rate = rate;
  s.tau = tau;
  s.meta.model = "nonlinear";
  s.meta.scheme = "crank-nicolson+rannacher, picard";
  s.meta.time_steps = n_t;

  const std::size_t n = u.size();
  auto to_price = [&](const std::vector<double>& uu, double t) {
    std::vector<double> sv(n);
    const double df = std::exp(-rate * t);
    for (std::size_t i = 0; i < n; ++i) sv[i] = df * uu[i];
    return sv;
  };
  s.times.push_back(0.0);
  s.slices.push_back(to_price(u, 0.0));

  std::vector<double> s_bar(n), guess, trial;
  auto advance = [&](double t0, double t1, double theta) {
    const std::vector<double>& s_prev = s.slices.back();
    const double df1 = std::exp(-rate * t1);
    guess = u;
    std::vector<double> deltas;
    bool ok = false;
    std::size_t it = 0;
    while (it < picard_max) {
      ++it;
      for (std::size_t i = 0; i < n; ++i)
        s_bar[i] = theta * df1 * guess[i] + (1.0 - theta) * s_prev[i];
      set_nonlinear(eng, fb, s_bar);
      trial = u;
      eng.douglas_step(trial, t1 - t0, theta);
      double delta = 0.0;
      for (std::size_t i = 0; i < n; ++i) delta = std::max(delta, df1 * std::abs(trial[i] - guess[i]));
      deltas.push_back(delta);
      guess.swap(trial);
      if (delta < picard_tol) {
        ok = true;
        break;
      }
    }
    if (!ok) s.meta.converged = false;
    u = guess;
    s.thetas.push_back(theta);
    s.times.push_back(t1);
    s.slices.push_back(to_price(u, t1));
    s.meta.picard_iterations.push_back(it);
    s.meta.picard_deltas.push_back(std::move(deltas));
  };

  double t = 0.0;
  for (std::size_t step = 0; step < n_t; ++step) {
    const double t_next = tau * static_cast<double>(step + 1) / static_cast<double>(n_t);
    if (step < rannacher) {
      const double mid = t + 0.5 * (t_next - t);
      advance(t, mid, 1.0);
      advance(mid, t_next, 1.0);
    } else {
      advance(t, t_next, opts.theta);
    }
    t = t_next;
  }
  for (double v : s.slices.back())
    if (!std::isfinite(v)) throw NumericError("solve_nonlinear_1d produced non-finite values");
  if (!s.meta.converged) s.meta.notices.push_back("Picard iteration did not converge in some steps");
  s.meta.final_residual = pde_residual(s, NonlinearModel{fb}).max_scaled;
  return s;
}

// ---------------------------------------------------------------- residual

Residual pde_residual(const Surface& surface, const Model& model) {
  if (!surface.has_all_slices() || surface.thetas.size() + 1 != surface.slices.size())
    throw InvalidInput("pde_residual: surface must store all time slices");

  const std::size_t want = std::visit(
      [](const auto& m) -> std::size_t {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, BsmModel> || std::is_same_v<T, NonlinearModel>) return 1;
        else if constexpr (std::is_same_v<T, TwoFactorModel> || std::is_same_v<T, HestonModel>) return 2;
        else if constexpr (std::is_same_v<T, StochVol3dModel>) return 3;
        else return 4;
      },
      model);
  if (surface.dims() != want) {
    std::ostringstream msg;
    msg << "pde_residual: model '" << model_name(model) << "' needs " << want
        << " axes, surface has " << surface.dims();
    throw InvalidInput(msg.str());
  }

  std::vector<AxisGeom> geoms;
  for (const Axis& ax : surface.grid.axes)
    geoms.push_back(geometry(ax, Boundary::extrapolate, Boundary::extrapolate));
  Engine eng(std::move(geoms));
  const double rate = surface.rate;

  const NonlinearModel* nonlinear = std::get_if<NonlinearModel>(&model);
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, BsmModel>) set_bsm(eng, m.sigma);
        else if constexpr (std::is_same_v<T, TwoFactorModel>) set_two_factor(eng, m.params);
        else if constexpr (std::is_same_v<T, ExpectationsModel>) set_expectations(eng, m.params, rate);
        else if constexpr (std::is_same_v<T, HestonModel>) set_heston(eng, m.params);
        else if constexpr (std::is_same_v<T, StochVol3dModel>) set_stochvol(eng, m.params, m.sv);
      },
      model);

  const std::size_t n = eng.size();
  std::vector<double> u0(n), u1(n), l0(n), l1(n), s_bar(n);
  Residual worst;
  for (std::size_t k = 0; k + 1 < surface.slices.size(); ++k) {
    const double t0 = surface.times[k];
    const double t1 = surface.times[k + 1];
    const double theta = surface.thetas[k];
    const auto& s0 = surface.slices[k];
    const auto& s1 = surface.slices[k + 1];
    const double g0 = std::exp(rate * t0);
    const double g1 = std::exp(rate * t1);
    for (std::size_t i = 0; i < n; ++i) {
      u0[i] = g0 * s0[i];
      u1[i] = g1 * s1[i];
    }
    if (nonlinear) {
      for (std::size_t i = 0; i < n; ++i) s_bar[i] = theta * s1[i] + (1.0 - theta) * s0[i];
      set_nonlinear(eng, nonlinear->params, s_bar);
    }
    eng.apply_full(u0, l0);
    eng.apply_full(u1, l1);
    const double dt = t1 - t0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!eng.interior(i)) continue;
      const double r = (u1[i] - u0[i]) / dt - theta * l1[i] - (1.0 - theta) * l0[i];
      const double scaled = std::abs(r) / g1 / (1.0 + std::abs(s1[i]));
      if (scaled > worst.max_scaled) worst = {scaled, k, i};
    }
  }
  return worst;
}

}  // namespace cvp
