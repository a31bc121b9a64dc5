#pragma once

#include "cvp/processes.hpp"

#include <string_view>
#include <variant>

namespace cvp {

// Pricing-model identifiers shared by the PDE residual, Monte Carlo and CLI.

struct BsmModel {
  double sigma = 0.0;
};
struct TwoFactorModel {
  TwoFactorParams params;
};
struct ExpectationsModel {
  ExpectationParams params;
};
struct NonlinearModel {
  FeedbackParams params;
};
/// Single variance factor x (the constant-volume reduction).
struct HestonModel {
  StochVolParams params;
};
/// Price, volume and stochastic value variance; σ_v and λ come from `params`.
struct StochVol3dModel {
  TwoFactorParams params;
  StochVolParams sv;
};

using Model = std::variant<BsmModel, TwoFactorModel, ExpectationsModel, NonlinearModel,
                           HestonModel, StochVol3dModel>;

std::string_view model_name(const Model& model);

}  // namespace cvp
