#pragma once

// Closed-form and semi-analytic reference prices.

#include "cvp/payoff.hpp"
#include "cvp/processes.hpp"

namespace cvp {

/// Standard normal CDF via the complementary error function.
double normal_cdf(double x);

/// Black–Scholes–Merton price of a European call/put. σ = 0 or τ = 0 give the
/// deterministic limits.
double bsm_closed_form(double p, const PricingTerms& terms, double sigma);

/// BSM price with the effective volatility √(σ_c² − 2λσ_cσ_v + σ_v²).
double two_factor_effective_price(double p, const PricingTerms& terms,
                                  const TwoFactorParams& params);

enum class LinearPayoff { forward_on_p, value_claim };

/// Exact solutions of the two-factor equation for payoffs linear in p:
/// forward (p − K) → p − K·e^{−rτ}; value claim (p·V) → p·V·e^{(r+ϱ)τ}.
double linear_payoff_exact(double p, double v, const PricingTerms& terms,
                           const TwoFactorParams& params, LinearPayoff kind);

/// Stochastic-variance price by Fourier inversion of the characteristic
/// function (Lewis form). Uses alpha_x, theta_x, sigma_x, vartheta and
/// lambda_xc of `sv`; the variance drift is α_x(θ_x − x) − ϑx.
double heston_cf_price(double p, const PricingTerms& terms, const StochVolParams& sv, double x0);

}  // namespace cvp
