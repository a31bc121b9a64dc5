#include "cvp/processes.hpp"

#include "cvp/error.hpp"
#include "cvp/pde.hpp"
#include "cvp/rng.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace cvp {

NoiseSpec NoiseSpec::independent(std::size_t dim) {
  return NoiseSpec{Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(dim),
                                             static_cast<Eigen::Index>(dim))};
}

namespace {

// Cholesky that tolerates semidefinite input: a vanishing pivot gives a zero column.
Eigen::MatrixXd semidefinite_cholesky(const Eigen::MatrixXd& a) {
  const Eigen::Index n = a.rows();
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double pivot = a(j, j);
    for (Eigen::Index k = 0; k < j; ++k) pivot -= l(j, k) * l(j, k);
    if (pivot <= 1e-12) continue;
    const double d = std::sqrt(pivot);
    l(j, j) = d;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (Eigen::Index k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / d;
    }
  }
  return l;
}

std::string describe_negative_minor(const Eigen::MatrixXd& corr) {
  for (Eigen::Index k = 1; k <= corr.rows(); ++k) {
    const double det = corr.topLeftCorner(k, k).determinant();
    if (det < -1e-12) {
      std::ostringstream msg;
      msg << "leading principal minor of order " << k << " has determinant " << det;
      return msg.str();
    }
  }
  return "a non-leading principal minor is negative";
}

void check_positive(double x, const char* what) {
  if (!(x > 0.0) || !std::isfinite(x)) throw InvalidInput(std::string(what) + " must be > 0");
}

void check_nonnegative(double x, const char* what) {
  if (!(x >= 0.0) || !std::isfinite(x)) throw InvalidInput(std::string(what) + " must be >= 0");
}

void check_correlation(double x, const char* what) {
  if (!(std::abs(x) <= 1.0)) throw InvalidInput(std::string(what) + " must lie in [-1, 1]");
}

struct PathStream {
  NormalStream stream;
  double sign;
};

PathStream path_stream(const SimConfig& cfg, std::size_t path) {
  if (cfg.antithetic) return {NormalStream(cfg.seed, path / 2), (path % 2 == 0) ? 1.0 : -1.0};
  return {NormalStream(cfg.seed, path), 1.0};
}

std::vector<double> time_points(const SimConfig& cfg) {
  std::vector<double> t(cfg.n_steps + 1);
  for (std::size_t i = 0; i <= cfg.n_steps; ++i)
    t[i] = cfg.horizon * static_cast<double>(i) / static_cast<double>(cfg.n_steps);
  return t;
}

PathBundle make_bundle(const SimConfig& cfg, std::vector<std::string> labels) {
  PathBundle b;
  b.times = time_points(cfg);
  b.labels = std::move(labels);
  b.n_paths = cfg.n_paths;
  b.data.assign(b.n_paths * b.n_times() * b.n_coords(), 0.0);
  b.truncated.assign(b.n_paths, 0);
  return b;
}

// Correlated normals for one step: out = L·z.
void correlate(const Eigen::MatrixXd& l, const double* z, double* out) {
  const Eigen::Index n = l.rows();
  for (Eigen::Index i = 0; i < n; ++i) {
    double s = 0.0;
    for (Eigen::Index k = 0; k <= i; ++k) s += l(i, k) * z[k];
    out[i] = s;
  }
}

}  // namespace

Eigen::MatrixXd correlation_factor(const Eigen::MatrixXd& corr) {
  const Eigen::Index n = corr.rows();
  if (n == 0 || corr.cols() != n) throw InvalidInput("correlation matrix must be square and non-empty");
  if (static_cast<std::size_t>(n) > kMaxFactors) throw InvalidInput("too many Brownian factors");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::abs(corr(i, i) - 1.0) > 1e-12) throw InvalidInput("correlation matrix must have unit diagonal");
    for (Eigen::Index j = 0; j < n; ++j) {
      if (!std::isfinite(corr(i, j))) throw InvalidInput("correlation matrix has non-finite entries");
      if (std::abs(corr(i, j) - corr(j, i)) > 1e-12)
        throw InvalidInput("correlation matrix must be symmetric");
      if (std::abs(corr(i, j)) > 1.0) {
        std::ostringstream msg;
        msg << "correlation entry (" << i << "," << j << ") = " << corr(i, j)
            << " is outside [-1, 1]; not positive semidefinite: " << describe_negative_minor(corr);
        throw InvalidInput(msg.str());
      }
    }
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(corr, Eigen::EigenvaluesOnly);
  const double lmin = es.eigenvalues().minCoeff();
  if (lmin < -1e-10) {
    std::ostringstream msg;
    msg << "correlation matrix is not positive semidefinite (smallest eigenvalue " << lmin
        << "): " << describe_negative_minor(corr);
    throw InvalidInput(msg.str());
  }
  if (lmin < 0.0) {
    Eigen::MatrixXd jittered = corr;
    jittered.diagonal().array() += 1e-10;
    const Eigen::VectorXd d = jittered.diagonal().cwiseSqrt().cwiseInverse();
    jittered = d.asDiagonal() * jittered * d.asDiagonal();
    return semidefinite_cholesky(jittered);
  }
  return semidefinite_cholesky(corr);
}

double amplitude_at(const Amplitude& amp, double s) {
  return std::visit(
      [s](const auto& a) -> double {
        using T = std::decay_t<decltype(a)>;
        if constexpr (std::is_same_v<T, ConstantAmplitude>) {
          return a.c;
        } else if constexpr (std::is_same_v<T, RationalAmplitude>) {
          return a.a / (1.0 + a.b * s);
        } else {
          if (s <= a.s.front()) return a.a.front();
          if (s >= a.s.back()) return a.a.back();
          const auto it = std::upper_bound(a.s.begin(), a.s.end(), s);
          const std::size_t i = static_cast<std::size_t>(it - a.s.begin());
          const double f = (s - a.s[i - 1]) / (a.s[i] - a.s[i - 1]);
          return a.a[i - 1] + f * (a.a[i] - a.a[i - 1]);
        }
      },
      amp);
}

void check_amplitude(const Amplitude& amp, double s_lo, double s_hi) {
  std::visit(
      [&](const auto& a) {
        using T = std::decay_t<decltype(a)>;
        if constexpr (std::is_same_v<T, ConstantAmplitude>) {
          if (!(a.c >= 0.0) || !std::isfinite(a.c))
            throw InvalidInput("constant amplitude must be finite and >= 0");
        } else if constexpr (std::is_same_v<T, RationalAmplitude>) {
          if (!(1.0 + a.b * s_lo > 0.0) || !(1.0 + a.b * s_hi > 0.0)) {
            std::ostringstream msg;
            msg << "rational amplitude a/(1+bS) is unbounded on the price range [" << s_lo
                << ", " << s_hi << "]";
            throw InvalidInput(msg.str());
          }
          if (!(a.a >= 0.0) || !std::isfinite(a.a))
            throw InvalidInput("rational amplitude numerator must be finite and >= 0");
        } else {
          if (a.s.empty() || a.s.size() != a.a.size())
            throw InvalidInput("tabulated amplitude needs equally sized, non-empty S and A columns");
          for (std::size_t i = 0; i < a.s.size(); ++i) {
            if (!std::isfinite(a.s[i]) || !std::isfinite(a.a[i]) || a.a[i] < 0.0)
              throw InvalidInput("tabulated amplitude values must be finite and >= 0");
            if (i > 0 && !(a.s[i] > a.s[i - 1]))
              throw InvalidInput("tabulated amplitude S column must be strictly increasing");
          }
        }
      },
      amp);
}

std::size_t PathBundle::column(std::string_view label) const {
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == label) return i;
  throw InvalidInput("path bundle has no column '" + std::string(label) + "'");
}

void validate(const TwoFactorParams& p) {
  check_nonnegative(p.sigma_c, "sigma_c");
  check_nonnegative(p.sigma_v, "sigma_v");
  check_correlation(p.lambda, "lambda");
  if (!std::isfinite(p.mu_c) || !std::isfinite(p.mu_v)) throw InvalidInput("drifts must be finite");
}

void validate(const ExpectationParams& p) {
  for (std::size_t j = 0; j < 4; ++j) {
    check_nonnegative(p.sigma[j], "expectation volatility");
    if (!std::isfinite(p.mu[j]) || !std::isfinite(p.a[j]) || !std::isfinite(p.b[j]))
      throw InvalidInput("expectation drifts and loadings must be finite");
  }
  (void)correlation_factor(p.corr);
}

void validate(const StochVolParams& p) {
  check_nonnegative(p.alpha_x, "alpha_x");
  check_nonnegative(p.theta_x, "theta_x");
  check_nonnegative(p.sigma_x, "sigma_x");
  check_nonnegative(p.alpha_y, "alpha_y");
  check_nonnegative(p.theta_y, "theta_y");
  check_nonnegative(p.sigma_y, "sigma_y");
  check_correlation(p.lambda_xc, "lambda_xc");
  check_correlation(p.lambda_xv, "lambda_xv");
  if (!std::isfinite(p.vartheta)) throw InvalidInput("vartheta must be finite");
  if (p.full_corr) (void)correlation_factor(*p.full_corr);
}

void validate(const SimConfig& cfg) {
  if (cfg.n_paths < 1) throw InvalidInput("n_paths must be >= 1");
  if (cfg.n_steps < 1) throw InvalidInput("n_steps must be >= 1");
  check_positive(cfg.horizon, "horizon");
}

Eigen::MatrixXd correlated_increments(const NoiseSpec& noise, std::size_t n_steps, double dt,
                                      std::uint64_t seed, std::uint64_t stream) {
  check_positive(dt, "dt");
  const Eigen::MatrixXd l = correlation_factor(noise.corr);
  const std::size_t dim = noise.dim();
  const NormalStream rng(seed, stream);
  const double sq = std::sqrt(dt);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(n_steps), static_cast<Eigen::Index>(dim));
  std::vector<double> z(dim), w(dim);
  for (std::size_t n = 0; n < n_steps; ++n) {
    rng.draw(n, z.data(), dim);
    correlate(l, z.data(), w.data());
    for (std::size_t k = 0; k < dim; ++k)
      out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k)) = sq * w[k];
  }
  return out;
}

DerivedPriceDynamics derived_price_dynamics(const TwoFactorParams& p) {
  const double cv = p.sigma_c * p.sigma_v;
  const double vv = p.sigma_v * p.sigma_v;
  DerivedPriceDynamics d;
  d.mu_p = p.mu_c - p.mu_v + vv - cv * p.lambda;
  d.sigma_sq = p.sigma_c * p.sigma_c - 2.0 * p.lambda * cv + vv;
  d.rho = p.lambda * cv - vv;
  return d;
}

DerivedExpectationDynamics derived_expectation_dynamics(const ExpectationParams& p) {
  DerivedExpectationDynamics d;
  for (std::size_t j = 0; j < 4; ++j) d.d[j] = (p.a[j] - p.b[j]) * p.sigma[j];
  for (std::size_t j = 0; j < 4; ++j)
    for (std::size_t k = 0; k < 4; ++k)
      d.sigma_p_sq += p.corr(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) * d.d[j] * d.d[k];
  for (std::size_t j = 0; j < 3; ++j) {
    double s = 0.0;
    for (std::size_t k = 0; k < 4; ++k)
      s += p.sigma[j] * p.corr(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) * d.d[k];
    d.rho[j] = s;
  }
  return d;
}

PathBundle simulate_two_factor(const TwoFactorParams& params, double c0, double v0,
                               const SimConfig& cfg) {
  validate(params);
  validate(cfg);
  check_positive(c0, "c0");
  check_positive(v0, "v0");
  Eigen::MatrixXd corr(2, 2);
  corr << 1.0, params.lambda, params.lambda, 1.0;
  const Eigen::MatrixXd l = correlation_factor(corr);

  PathBundle b = make_bundle(cfg, {"C", "V", "p"});
  const double dt = cfg.horizon / static_cast<double>(cfg.n_steps);
  const double sq = std::sqrt(dt);
  const double gc = (params.mu_c - 0.5 * params.sigma_c * params.sigma_c) * dt;
  const double gv = (params.mu_v - 0.5 * params.sigma_v * params.sigma_v) * dt;
  const auto n_paths = static_cast<std::ptrdiff_t>(cfg.n_paths);

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ip = 0; ip < n_paths; ++ip) {
    const auto path = static_cast<std::size_t>(ip);
    const PathStream ps = path_stream(cfg, path);
    double z[2], w[2];
    double lc = std::log(c0), lv = std::log(v0);
    b.at(path, 0, 0) = c0;
    b.at(path, 0, 1) = v0;
    b.at(path, 0, 2) = c0 / v0;
    for (std::size_t n = 0; n < cfg.n_steps; ++n) {
      ps.stream.draw(n, z, 2);
      z[0] *= ps.sign;
      z[1] *= ps.sign;
      correlate(l, z, w);
      lc += gc + params.sigma_c * sq * w[0];
      lv += gv + params.sigma_v * sq * w[1];
      const double c = std::exp(lc), v = std::exp(lv);
      b.at(path, n + 1, 0) = c;
      b.at(path, n + 1, 1) = v;
      b.at(path, n + 1, 2) = c / v;
    }
  }
  return b;
}

PathBundle simulate_expectation_model(const ExpectationParams& params, double c0, double v0,
                                      const std::array<double, 4>& x0, const SimConfig& cfg) {
  validate(params);
  validate(cfg);
  check_positive(c0, "c0");
  check_positive(v0, "v0");
  const Eigen::MatrixXd l = correlation_factor(params.corr);

  // Ito corrections for the multiplicative value and volume steps.
  double var_a = 0.0, var_b = 0.0;
  for (Eigen::Index j = 0; j < 4; ++j)
    for (Eigen::Index k = 0; k < 4; ++k) {
      const double c = params.corr(j, k) * params.sigma[j] * params.sigma[k];
      var_a += params.a[j] * params.a[k] * c;
      var_b += params.b[j] * params.b[k] * c;
    }

  PathBundle b = make_bundle(cfg, {"x1", "x2", "x3", "x4", "C", "V", "p"});
  const double dt = cfg.horizon / static_cast<double>(cfg.n_steps);
  const double sq = std::sqrt(dt);
  const auto n_paths = static_cast<std::ptrdiff_t>(cfg.n_paths);

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ip = 0; ip < n_paths; ++ip) {
    const auto path = static_cast<std::size_t>(ip);
    const PathStream ps = path_stream(cfg, path);
    double z[4], w[4];
    std::array<double, 4> x = x0;
    double lc = std::log(c0), lv = std::log(v0);
    auto emit = [&](std::size_t step) {
      for (std::size_t j = 0; j < 4; ++j) b.at(path, step, j) = x[j];
      const double c = std::exp(lc), v = std::exp(lv);
      b.at(path, step, 4) = c;
      b.at(path, step, 5) = v;
      b.at(path, step, 6) = c / v;
    };
    emit(0);
    for (std::size_t n = 0; n < cfg.n_steps; ++n) {
      ps.stream.draw(n, z, 4);
      for (double& zi : z) zi *= ps.sign;
      correlate(l, z, w);
      double da = 0.0, db = 0.0;
      for (std::size_t j = 0; j < 4; ++j) {
        const double dx = params.mu[j] * dt + params.sigma[j] * sq * w[j];
        x[j] += dx;
        da += params.a[j] * dx;
        db += params.b[j] * dx;
      }
      lc += da - 0.5 * var_a * dt;
      lv += db - 0.5 * var_b * dt;
      emit(n + 1);
    }
  }
  return b;
}

PathBundle simulate_cir(double alpha, double theta, double sigma, double x0, const SimConfig& cfg) {
  validate(cfg);
  check_nonnegative(alpha, "alpha");
  check_nonnegative(theta, "theta");
  check_nonnegative(sigma, "sigma");
  check_nonnegative(x0, "x0");

  PathBundle b = make_bundle(cfg, {"x"});
  const double dt = cfg.horizon / static_cast<double>(cfg.n_steps);
  const double sq = std::sqrt(dt);
  const auto n_paths = static_cast<std::ptrdiff_t>(cfg.n_paths);

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ip = 0; ip < n_paths; ++ip) {
    const auto path = static_cast<std::size_t>(ip);
    const PathStream ps = path_stream(cfg, path);
    double x = x0;
    b.at(path, 0, 0) = x0;
    for (std::size_t n = 0; n < cfg.n_steps; ++n) {
      x = cir_step(x, alpha, theta, 0.0, sigma, dt, ps.sign * sq * ps.stream.at(n, 0));
      b.at(path, n + 1, 0) = std::max(x, 0.0);
    }
  }
  return b;
}

Eigen::Matrix4d stochvol_correlation(double lambda, const StochVolParams& sv) {
  if (sv.full_corr) return *sv.full_corr;
  Eigen::Matrix4d c = Eigen::Matrix4d::Identity();
  c(0, 1) = c(1, 0) = lambda;
  c(0, 2) = c(2, 0) = sv.lambda_xc;
  c(1, 2) = c(2, 1) = sv.lambda_xv;
  return c;
}

PathBundle simulate_stochvol_model(const TwoFactorParams& tf, const StochVolParams& sv, double c0,
                                   double v0, double x0, double y0, const SimConfig& cfg) {
  validate(tf);
  validate(sv);
  validate(cfg);
  check_positive(c0, "c0");
  check_positive(v0, "v0");
  check_nonnegative(x0, "x0");
  check_nonnegative(y0, "y0");
  const Eigen::MatrixXd l = correlation_factor(stochvol_correlation(tf.lambda, sv));

  PathBundle b = make_bundle(cfg, {"C", "V", "x", "y", "p"});
  const double dt = cfg.horizon / static_cast<double>(cfg.n_steps);
  const double sq = std::sqrt(dt);
  const auto n_paths = static_cast<std::ptrdiff_t>(cfg.n_paths);

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ip = 0; ip < n_paths; ++ip) {
    const auto path = static_cast<std::size_t>(ip);
    const PathStream ps = path_stream(cfg, path);
    double z[4], w[4];
    double lc = std::log(c0), lv = std::log(v0), x = x0, y = y0;
    auto emit = [&](std::size_t step) {
      const double c = std::exp(lc), v = std::exp(lv);
      b.at(path, step, 0) = c;
      b.at(path, step, 1) = v;
      b.at(path, step, 2) = std::max(x, 0.0);
      b.at(path, step, 3) = std::max(y, 0.0);
      b.at(path, step, 4) = c / v;
    };
    emit(0);
    for (std::size_t n = 0; n < cfg.n_steps; ++n) {
      ps.stream.draw(n, z, 4);
      for (double& zi : z) zi *= ps.sign;
      correlate(l, z, w);
      const double xp = std::max(x, 0.0), yp = std::max(y, 0.0);
      lc += (tf.mu_c - 0.5 * xp) * dt + std::sqrt(xp) * sq * w[0];
      lv += (tf.mu_v - 0.5 * yp) * dt + std::sqrt(yp) * sq * w[1];
      x = cir_step(x, sv.alpha_x, sv.theta_x, 0.0, sv.sigma_x, dt, sq * w[2]);
      y = cir_step(y, sv.alpha_y, sv.theta_y, 0.0, sv.sigma_y, dt, sq * w[3]);
      emit(n + 1);
    }
  }
  return b;
}

PathBundle simulate_feedback_price(const FeedbackParams& params, const Surface& surface, double p0,
                                   const SimConfig& cfg) {
  validate(cfg);
  check_positive(p0, "p0");
  check_nonnegative(params.sigma, "sigma");
  if (surface.dims() != 1) throw InvalidInput("feedback simulation needs a 1-D price surface");
  if (!surface.has_all_slices()) throw InvalidInput("feedback simulation needs all time slices");
  if (cfg.horizon > surface.tau * (1.0 + 1e-12))
    throw InvalidInput("simulation horizon exceeds the time span of the surface");

  PathBundle b = make_bundle(cfg, {"p"});
  const double dt = cfg.horizon / static_cast<double>(cfg.n_steps);
  const double sq = std::sqrt(dt);
  const auto n_paths = static_cast<std::ptrdiff_t>(cfg.n_paths);

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ip = 0; ip < n_paths; ++ip) {
    const auto path = static_cast<std::size_t>(ip);
    const PathStream ps = path_stream(cfg, path);
    double p = p0;
    bool stopped = false;
    b.at(path, 0, 0) = p0;
    for (std::size_t n = 0; n < cfg.n_steps; ++n) {
      if (!stopped) {
        const double ttm = std::max(surface.tau - b.times[n], 0.0);
        const double pt[1] = {p};
        if (!surface.contains(pt, ttm)) {
          stopped = true;
        } else {
          const double s = surface.value_at_time(ttm, pt, Interp::linear);
          const double a = amplitude_at(params.amplitude, s);
          const double dw = ps.sign * sq * ps.stream.at(n, 0);
          p *= std::exp(a * params.mu * dt - 0.5 * a * a * params.sigma * params.sigma * dt +
                        a * params.sigma * dw);
        }
      }
      b.at(path, n + 1, 0) = p;
    }
    b.truncated[path] = stopped ? 1 : 0;
  }
  b.truncated_count = static_cast<std::size_t>(std::count(b.truncated.begin(), b.truncated.end(), 1));
  return b;
}

}  // namespace cvp
