#include "cvp/montecarlo.hpp"

#include "cvp/error.hpp"
#include "cvp/rng.hpp"

#include <cmath>
#include <functional>
#include <sstream>

namespace cvp {

namespace {

struct Terminal {
  double p;
  double v;
};

// Running mean and variance.
struct Welford {
  std::size_t n = 0;
  double mean = 0.0;
  double m2 = 0.0;
  void add(double x) {
    ++n;
    const double d = x - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (x - mean);
  }
  [[nodiscard]] double std_error() const {
    if (n < 2) return 0.0;
    return std::sqrt(m2 / static_cast<double>(n - 1) / static_cast<double>(n));
  }
};

bool has_volume(const Model& model) {
  return std::holds_alternative<TwoFactorModel>(model) ||
         std::holds_alternative<ExpectationsModel>(model) ||
         std::holds_alternative<StochVol3dModel>(model);
}

Eigen::MatrixXd factor_of(const Eigen::MatrixXd& corr) { return correlation_factor(corr); }

void correlate(const Eigen::MatrixXd& l, const double* z, double* out) {
  for (Eigen::Index i = 0; i < l.rows(); ++i) {
    double s = 0.0;
    for (Eigen::Index k = 0; k <= i; ++k) s += l(i, k) * z[k];
    out[i] = s;
  }
}

// Simulates terminal (p, V) for every path under the risk-neutral dynamics.
std::vector<Terminal> terminal_states(const Model& model, const PricingTerms& terms,
                                      const McState& init, const SimConfig& cfg) {
  const double r = terms.r;
  const double dt = terms.tau / static_cast<double>(cfg.n_steps);
  const double sq = std::sqrt(dt);
  const std::size_t n_steps = cfg.n_steps;

  // One path: fills log p and log V from an RNG stream with the given sign.
  std::function<Terminal(const NormalStream&, double)> path;

  if (const auto* m = std::get_if<BsmModel>(&model)) {
    const double s = m->sigma;
    path = [=](const NormalStream& rng, double sign) {
      double lp = std::log(init.p0);
      for (std::size_t n = 0; n < n_steps; ++n)
        lp += (r - 0.5 * s * s) * dt + s * sq * sign * rng.at(n, 0);
      return Terminal{std::exp(lp), init.v0};
    };
  } else if (const auto* m = std::get_if<TwoFactorModel>(&model)) {
    const TwoFactorParams prm = m->params;
    validate(prm);
    Eigen::MatrixXd corr(2, 2);
    corr << 1.0, prm.lambda, prm.lambda, 1.0;
    const Eigen::MatrixXd l = factor_of(corr);
    const double var_p = derived_price_dynamics(prm).sigma_sq;
    const double var_v = prm.sigma_v * prm.sigma_v;
    path = [=](const NormalStream& rng, double sign) {
      double lp = std::log(init.p0), lv = std::log(init.v0);
      double z[2], w[2];
      for (std::size_t n = 0; n < n_steps; ++n) {
        rng.draw(n, z, 2);
        z[0] *= sign;
        z[1] *= sign;
        correlate(l, z, w);
        lp += (r - 0.5 * var_p) * dt + sq * (prm.sigma_c * w[0] - prm.sigma_v * w[1]);
        lv += (r - 0.5 * var_v) * dt + sq * prm.sigma_v * w[1];
      }
      return Terminal{std::exp(lp), std::exp(lv)};
    };
  } else if (const auto* m = std::get_if<ExpectationsModel>(&model)) {
    const ExpectationParams prm = m->params;
    validate(prm);
    const Eigen::MatrixXd l = factor_of(prm.corr);
    const DerivedExpectationDynamics dyn = derived_expectation_dynamics(prm);
    double var_v = 0.0;
    for (Eigen::Index j = 0; j < 4; ++j)
      for (Eigen::Index k = 0; k < 4; ++k)
        var_v += prm.b[j] * prm.b[k] * prm.sigma[j] * prm.sigma[k] * prm.corr(j, k);
    path = [=](const NormalStream& rng, double sign) {
      double lp = std::log(init.p0), lv = std::log(init.v0);
      double z[4], w[4];
      for (std::size_t n = 0; n < n_steps; ++n) {
        rng.draw(n, z, 4);
        for (double& zi : z) zi *= sign;
        correlate(l, z, w);
        double dp = 0.0, dv = 0.0;
        for (std::size_t j = 0; j < 4; ++j) {
          dp += dyn.d[j] * w[j];
          dv += prm.b[j] * prm.sigma[j] * w[j];
        }
        lp += (r - 0.5 * dyn.sigma_p_sq) * dt + sq * dp;
        lv += (r - 0.5 * var_v) * dt + sq * dv;
      }
      return Terminal{std::exp(lp), std::exp(lv)};
    };
  } else if (const auto* m = std::get_if<HestonModel>(&model)) {
    const StochVolParams sv = m->params;
    validate(sv);
    Eigen::MatrixXd corr(2, 2);
    corr << 1.0, sv.lambda_xc, sv.lambda_xc, 1.0;
    const Eigen::MatrixXd l = factor_of(corr);
    path = [=](const NormalStream& rng, double sign) {
      double lp = std::log(init.p0), x = init.x0;
      double z[3], w[2];
      for (std::size_t n = 0; n < n_steps; ++n) {
        // factors (W_c, W_v, W_x): W_v is unused here but keeps W_x aligned
        rng.draw(n, z, 3);
        const double zz[2] = {sign * z[0], sign * z[2]};
        correlate(l, zz, w);
        const double xp = std::max(x, 0.0);
        lp += (r - 0.5 * xp) * dt + std::sqrt(xp) * sq * w[0];
        x = cir_step(x, sv.alpha_x, sv.theta_x, sv.vartheta, sv.sigma_x, dt, sq * w[1]);
      }
      return Terminal{std::exp(lp), init.v0};
    };
  } else if (const auto* m = std::get_if<StochVol3dModel>(&model)) {
    const TwoFactorParams prm = m->params;
    const StochVolParams sv = m->sv;
    validate(prm);
    validate(sv);
    const Eigen::MatrixXd l =
        factor_of(stochvol_correlation(prm.lambda, sv).topLeftCorner<3, 3>().eval());
    const double s_v = prm.sigma_v;
    path = [=](const NormalStream& rng, double sign) {
      double lp = std::log(init.p0), lv = std::log(init.v0), x = init.x0;
      double z[3], w[3];
      for (std::size_t n = 0; n < n_steps; ++n) {
        rng.draw(n, z, 3);
        for (double& zi : z) zi *= sign;
        correlate(l, z, w);
        const double xp = std::max(x, 0.0);
        const double sx = std::sqrt(xp);
        const double var_p = xp - 2.0 * prm.lambda * s_v * sx + s_v * s_v;
        lp += (r - 0.5 * var_p) * dt + sq * (sx * w[0] - s_v * w[1]);
        lv += (r - 0.5 * s_v * s_v) * dt + sq * s_v * w[1];
        x = cir_step(x, sv.alpha_x, sv.theta_x, sv.vartheta, sv.sigma_x, dt, sq * w[2]);
      }
      return Terminal{std::exp(lp), std::exp(lv)};
    };
  } else {
    std::ostringstream msg;
    msg << "Monte Carlo pricing is not available for model '" << model_name(model)
        << "': its dynamics depend on the option price itself";
    throw InvalidInput(msg.str());
  }

  std::vector<Terminal> out(cfg.n_paths);
  const auto n_paths = static_cast<std::ptrdiff_t>(cfg.n_paths);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ip = 0; ip < n_paths; ++ip) {
    const auto i = static_cast<std::size_t>(ip);
    const std::uint64_t stream = cfg.antithetic ? i / 2 : i;
    const double sign = (cfg.antithetic && i % 2 == 1) ? -1.0 : 1.0;
    out[i] = path(NormalStream(cfg.seed, stream), sign);
  }
  return out;
}

void check_inputs(const PricingTerms& terms, const McState& init, const SimConfig& cfg) {
  validate(terms);
  validate(cfg);
  if (!(init.p0 > 0.0) || !(init.v0 > 0.0)) throw InvalidInput("Monte Carlo: p0 and v0 must be > 0");
  if (!(init.x0 >= 0.0)) throw InvalidInput("Monte Carlo: x0 must be >= 0");
  if (cfg.antithetic && cfg.n_paths % 2 != 0)
    throw InvalidInput("Monte Carlo: antithetic sampling needs an even number of paths");
}

McResult summarize(const std::vector<double>& values, const SimConfig& cfg) {
  Welford acc;
  if (cfg.antithetic) {
    for (std::size_t i = 0; i + 1 < values.size(); i += 2) acc.add(0.5 * (values[i] + values[i + 1]));
  } else {
    for (double v : values) acc.add(v);
  }
  if (!std::isfinite(acc.mean)) throw NumericError("Monte Carlo estimate is not finite");
  return McResult{acc.mean, acc.std_error(), cfg.n_paths, cfg.seed};
}

}  // namespace

McResult price_mc(const Model& model, const Payoff& payoff, const PricingTerms& terms,
                  const McState& init, const SimConfig& cfg) {
  check_inputs(terms, init, cfg);
  if (payoff.kind == PayoffKind::table)
    throw InvalidInput("Monte Carlo: tabulated payoffs are only defined on a PDE grid");
  if (payoff.needs_volume() && !has_volume(model)) {
    std::ostringstream msg;
    msg << "payoff '" << to_string(payoff.kind) << "' depends on volume V, which model '"
        << model_name(model) << "' does not simulate";
    throw InvalidInput(msg.str());
  }
  const double df = std::exp(-terms.r * terms.tau);
  if (terms.tau == 0.0)
    return McResult{payoff(init.p0, init.v0), 0.0, cfg.n_paths, cfg.seed};

  const std::vector<Terminal> states = terminal_states(model, terms, init, cfg);
  std::vector<double> values(states.size());
  for (std::size_t i = 0; i < states.size(); ++i) values[i] = df * payoff(states[i].p, states[i].v);
  return summarize(values, cfg);
}

MartingaleCheck mc_discounted_means(const Model& model, const PricingTerms& terms,
                                    const McState& init, const SimConfig& cfg) {
  check_inputs(terms, init, cfg);
  if (!(terms.tau > 0.0)) throw InvalidInput("martingale check needs tau > 0");
  const double df = std::exp(-terms.r * terms.tau);
  const std::vector<Terminal> states = terminal_states(model, terms, init, cfg);
  std::vector<double> ps(states.size()), vs(states.size());
  for (std::size_t i = 0; i < states.size(); ++i) {
    ps[i] = df * states[i].p;
    vs[i] = df * states[i].v;
  }
  MartingaleCheck out{summarize(ps, cfg), summarize(vs, cfg)};
  if (!has_volume(model)) {
    // V is not a state of this model
    out.volume = McResult{init.v0, 0.0, 0, cfg.seed};
  }
  return out;
}

}  // namespace cvp
