#pragma once

// Risk-neutral Monte Carlo pricing: p and V drift at r, variances follow
// α(θ − x) − ϑx, expectation factors follow r·x_j.

#include "cvp/models.hpp"
#include "cvp/payoff.hpp"
#include "cvp/processes.hpp"

#include <array>
#include <cstdint>

namespace cvp {

struct McResult {
  double price = 0.0;
  double std_error = 0.0;
  std::size_t n_paths = 0;
  std::uint64_t seed = 0;
};

/// Initial state. Fields a model does not use are ignored.
struct McState {
  double p0 = 1.0;
  double v0 = 1.0;
  double x0 = 0.0;                   ///< value variance (heston, stochvol-3d)
  std::array<double, 3> xs{};        ///< expectation factors x1..x3
};

/// e^{−rτ}·mean(payoff). The horizon of `cfg` is replaced by terms.tau; with
/// antithetic sampling the standard error is computed from pair means, so
/// n_paths must be even.
McResult price_mc(const Model& model, const Payoff& payoff, const PricingTerms& terms,
                  const McState& init, const SimConfig& cfg);

struct MartingaleCheck {
  McResult price;   ///< e^{−rτ}E[p_T]
  McResult volume;  ///< e^{−rτ}E[V_T]; n_paths = 0 when V is not a model state
};

MartingaleCheck mc_discounted_means(const Model& model, const PricingTerms& terms,
                                    const McState& init, const SimConfig& cfg);

}  // namespace cvp
