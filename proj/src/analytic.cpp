#include "cvp/analytic.hpp"

#include "cvp/error.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <sstream>

namespace cvp {

namespace {

using cd = std::complex<double>;

double discounted_intrinsic(double p, const PricingTerms& terms) {
  const double fwd = p - terms.strike * std::exp(-terms.r * terms.tau);
  return terms.kind == OptionKind::call ? std::max(fwd, 0.0) : std::max(-fwd, 0.0);
}

double payoff_at_expiry(double p, const PricingTerms& terms) {
  return terms.kind == OptionKind::call ? std::max(p - terms.strike, 0.0)
                                        : std::max(terms.strike - p, 0.0);
}

// log1p(z)/z, accurate for small |z|.
cd log1p_ratio(cd z) {
  if (std::abs(z) < 1e-4) return 1.0 - z / 2.0 + z * z / 3.0 - z * z * z / 4.0;
  return std::log(1.0 + z) / z;
}

// Characteristic function of ln(S_T/F) under the square-root variance model,
// written without 1/σ² factors so the σ → 0 limit stays finite.
class VarianceCf {
 public:
  VarianceCf(const StochVolParams& sv, double x0, double tau)
      : kappa_(sv.alpha_x + sv.vartheta),
        kappa_theta_(sv.alpha_x * sv.theta_x),
        sigma_(sv.sigma_x),
        rho_(sv.lambda_xc),
        x0_(x0),
        tau_(tau) {}

  cd operator()(cd u) const {
    const cd i(0.0, 1.0);
    const cd iu = i * u;
    const cd beta = kappa_ - rho_ * sigma_ * iu;
    const cd d = std::sqrt(beta * beta + sigma_ * sigma_ * (iu + u * u));
    const cd sum = beta + d;
    const cd q = -(iu + u * u) / sum;  // (β − d)/σ²
    const cd g = sigma_ * sigma_ * q / sum;
    const cd e = std::exp(-d * tau_);
    const cd z_over_s2 = q * (1.0 - e) / (sum * (1.0 - g));
    const cd z = sigma_ * sigma_ * z_over_s2;
    const cd log_term = z_over_s2 * log1p_ratio(z);
    const cd a = kappa_theta_ * (q * tau_ - 2.0 * log_term);
    const cd b = x0_ * q * (1.0 - e) / (1.0 - g * e);
    return std::exp(a + b);
  }

 private:
  double kappa_, kappa_theta_, sigma_, rho_, x0_, tau_;
};

}  // namespace

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double bsm_closed_form(double p, const PricingTerms& terms, double sigma) {
  validate(terms);
  if (!(p > 0.0)) throw InvalidInput("bsm_closed_form: price must be > 0");
  if (!(sigma >= 0.0)) throw InvalidInput("bsm_closed_form: sigma must be >= 0");
  if (terms.tau == 0.0) return payoff_at_expiry(p, terms);
  const double vol = sigma * std::sqrt(terms.tau);
  if (vol == 0.0 || terms.strike == 0.0) return discounted_intrinsic(p, terms);

  const double df = std::exp(-terms.r * terms.tau);
  const double d1 = (std::log(p / terms.strike) + terms.r * terms.tau) / vol + 0.5 * vol;
  const double d2 = d1 - vol;
  if (terms.kind == OptionKind::call)
    return p * normal_cdf(d1) - terms.strike * df * normal_cdf(d2);
  return terms.strike * df * normal_cdf(-d2) - p * normal_cdf(-d1);
}

double two_factor_effective_price(double p, const PricingTerms& terms,
                                  const TwoFactorParams& params) {
  validate(params);
  const DerivedPriceDynamics dyn = derived_price_dynamics(params);
  return bsm_closed_form(p, terms, std::sqrt(std::max(dyn.sigma_sq, 0.0)));
}

double linear_payoff_exact(double p, double v, const PricingTerms& terms,
                           const TwoFactorParams& params, LinearPayoff kind) {
  validate(terms);
  switch (kind) {
    case LinearPayoff::forward_on_p:
      return p - terms.strike * std::exp(-terms.r * terms.tau);
    case LinearPayoff::value_claim: {
      const double rho = derived_price_dynamics(params).rho;
      return p * v * std::exp((terms.r + rho) * terms.tau);
    }
  }
  throw InvalidInput("linear_payoff_exact: unknown payoff");
}

double heston_cf_price(double p, const PricingTerms& terms, const StochVolParams& sv, double x0) {
  validate(terms);
  if (!(p > 0.0)) throw InvalidInput("heston_cf_price: price must be > 0");
  if (!(x0 >= 0.0)) throw InvalidInput("heston_cf_price: x0 must be >= 0");
  if (sv.alpha_x < 0.0 || sv.theta_x < 0.0 || sv.sigma_x < 0.0 || std::abs(sv.lambda_xc) > 1.0)
    throw InvalidInput("heston_cf_price: invalid variance parameters");
  if (!(sv.alpha_x + sv.vartheta > 0.0) && sv.sigma_x == 0.0)
    throw InvalidInput("heston_cf_price: alpha_x + vartheta must be > 0 when sigma_x = 0");
  if (terms.tau == 0.0) return payoff_at_expiry(p, terms);
  if (terms.strike == 0.0) return discounted_intrinsic(p, terms);

  const double tau = terms.tau;
  const double fwd = p * std::exp(terms.r * tau);
  const double k = std::log(fwd / terms.strike);
  const double scale = std::sqrt(fwd * terms.strike) * std::exp(-terms.r * tau) / std::numbers::pi;
  const VarianceCf cf(sv, x0, tau);

  auto integrand = [&](double u) {
    const cd phi = cf(cd(u, -0.5));
    return (std::exp(cd(0.0, u * k)) * phi).real() / (u * u + 0.25);
  };

  // Truncate where the remaining tail, bounded by scale·|φ(U − i/2)|/U, is below 1e-9.
  double upper = 16.0;
  double tail = 0.0;
  for (;;) {
    tail = scale * std::abs(cf(cd(upper, -0.5))) / upper;
    if (tail < 1e-9) break;
    upper *= 2.0;
    if (upper > 1e6) {
      std::ostringstream msg;
      msg << "heston_cf_price: integrand tail bound " << tail << " at truncation " << upper
          << " did not fall below 1e-9";
      throw NumericError(msg.str());
    }
  }

  double error = 0.0;
  const double integral = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
      integrand, 0.0, upper, 20, 1e-14, &error);
  if (!std::isfinite(integral) || scale * error > 1e-8) {
    std::ostringstream msg;
    msg << "heston_cf_price: quadrature did not converge (error estimate " << scale * error
        << ", truncation " << upper << ")";
    throw NumericError(msg.str());
  }
  const double call = p - scale * integral;
  if (terms.kind == OptionKind::call) return call;
  return call - p + terms.strike * std::exp(-terms.r * tau);
}

}  // namespace cvp
