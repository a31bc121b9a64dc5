#include "cvp/models.hpp"

namespace cvp {

std::string_view model_name(const Model& model) {
  return std::visit(
      [](const auto& m) -> std::string_view {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, BsmModel>) return "bsm";
        else if constexpr (std::is_same_v<T, TwoFactorModel>) return "two-factor";
        else if constexpr (std::is_same_v<T, ExpectationsModel>) return "expectations";
        else if constexpr (std::is_same_v<T, NonlinearModel>) return "nonlinear";
        else if constexpr (std::is_same_v<T, HestonModel>) return "heston";
        else return "stochvol-3d";
      },
      model);
}

}  // namespace cvp
