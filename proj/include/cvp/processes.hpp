#pragma once

// Stochastic models for transaction value C, volume V and the price p = C/V,
// plus the expectation, feedback and stochastic-variance extensions.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace cvp {

class Surface;

/// Correlation structure of a set of Brownian factors.
struct NoiseSpec {
  Eigen::MatrixXd corr;

  [[nodiscard]] std::size_t dim() const { return static_cast<std::size_t>(corr.rows()); }
  static NoiseSpec independent(std::size_t dim);
};

/// Validates a correlation matrix and returns a lower-triangular factor L with
/// L·Lᵀ = corr. Singular (PSD) matrices are accepted; matrices whose smallest
/// eigenvalue lies in [-1e-10, 0) are jittered by 1e-10 on the diagonal and
/// renormalized. Anything worse throws InvalidInput naming the first leading
/// principal minor with negative determinant.
Eigen::MatrixXd correlation_factor(const Eigen::MatrixXd& corr);

struct TwoFactorParams {
  double mu_c = 0.0;
  double sigma_c = 0.0;
  double mu_v = 0.0;
  double sigma_v = 0.0;
  double lambda = 0.0;
};

struct DerivedPriceDynamics {
  double mu_p = 0.0;
  double sigma_sq = 0.0;  ///< σ_c² − 2λσ_cσ_v + σ_v²
  double rho = 0.0;       ///< ϱ = λσ_cσ_v − σ_v², price-volume covariance rate
};

struct ExpectationParams {
  std::array<double, 4> mu{};
  std::array<double, 4> sigma{};
  Eigen::Matrix4d corr = Eigen::Matrix4d::Identity();
  std::array<double, 4> a{};  ///< value loadings
  std::array<double, 4> b{};  ///< volume loadings
};

struct DerivedExpectationDynamics {
  std::array<double, 4> d{};   ///< D_j = (A_j − B_j)σ_j
  double sigma_p_sq = 0.0;     ///< Σ_jk λ_jk D_j D_k
  std::array<double, 3> rho{}; ///< ϱ_j = Σ_k σ_j λ_jk D_k, j = 1..3
};

// Feedback amplitude catalog A(S).
struct ConstantAmplitude {
  double c = 1.0;
};
struct RationalAmplitude {  ///< a / (1 + b·S)
  double a = 1.0;
  double b = 0.0;
};
struct TabulatedAmplitude {  ///< piecewise linear in S, flat outside the table
  std::vector<double> s;
  std::vector<double> a;
};
using Amplitude = std::variant<ConstantAmplitude, RationalAmplitude, TabulatedAmplitude>;

double amplitude_at(const Amplitude& amp, double s);
/// Throws InvalidInput unless A is finite and nonnegative on [s_lo, s_hi].
void check_amplitude(const Amplitude& amp, double s_lo, double s_hi);

struct FeedbackParams {
  double mu = 0.0;
  double sigma = 0.0;
  Amplitude amplitude = ConstantAmplitude{1.0};
};

struct StochVolParams {
  double alpha_x = 0.0, theta_x = 0.0, sigma_x = 0.0;
  double alpha_y = 0.0, theta_y = 0.0, sigma_y = 0.0;
  double vartheta = 0.0;
  double lambda_xc = 0.0;
  double lambda_xv = 0.0;
  /// Optional full correlation of (W_c, W_v, W_x, W_y). When absent W_y is
  /// independent of the other three factors.
  std::optional<Eigen::Matrix4d> full_corr;

  [[nodiscard]] bool feller_x() const { return 2.0 * alpha_x * theta_x >= sigma_x * sigma_x; }
  [[nodiscard]] bool feller_y() const { return 2.0 * alpha_y * theta_y >= sigma_y * sigma_y; }
};

struct SimConfig {
  std::size_t n_paths = 1;
  std::size_t n_steps = 1;
  double horizon = 1.0;
  std::uint64_t seed = 0;
  bool antithetic = false;
};

/// Simulated paths, stored path-major: data[(path·n_times + step)·n_coords + coord].
struct PathBundle {
  std::vector<double> times;
  std::vector<std::string> labels;
  std::size_t n_paths = 0;
  std::vector<double> data;
  /// Paths stopped early because they left the domain of a lookup surface.
  std::vector<std::uint8_t> truncated;
  std::size_t truncated_count = 0;

  [[nodiscard]] std::size_t n_times() const { return times.size(); }
  [[nodiscard]] std::size_t n_coords() const { return labels.size(); }
  [[nodiscard]] std::size_t column(std::string_view label) const;
  [[nodiscard]] double at(std::size_t path, std::size_t step, std::size_t coord) const {
    return data[(path * n_times() + step) * n_coords() + coord];
  }
  double& at(std::size_t path, std::size_t step, std::size_t coord) {
    return data[(path * n_times() + step) * n_coords() + coord];
  }
};

void validate(const TwoFactorParams& p);
void validate(const ExpectationParams& p);
void validate(const StochVolParams& p);
void validate(const SimConfig& cfg);

/// Gaussian increments with covariance corr·dt, one row per step. A pure
/// function of its arguments; `stream` selects an independent RNG stream.
Eigen::MatrixXd correlated_increments(const NoiseSpec& noise, std::size_t n_steps, double dt,
                                      std::uint64_t seed, std::uint64_t stream);

DerivedPriceDynamics derived_price_dynamics(const TwoFactorParams& params);
DerivedExpectationDynamics derived_expectation_dynamics(const ExpectationParams& params);

/// Columns C, V, p.
PathBundle simulate_two_factor(const TwoFactorParams& params, double c0, double v0,
                               const SimConfig& cfg);

/// Columns x1..x4, C, V, p.
PathBundle simulate_expectation_model(const ExpectationParams& params, double c0, double v0,
                                      const std::array<double, 4>& x0, const SimConfig& cfg);

/// Column x. Full-truncation Euler.
PathBundle simulate_cir(double alpha, double theta, double sigma, double x0,
                        const SimConfig& cfg);

/// Columns C, V, x, y, p. Only the drifts of `tf` are used; the volatilities
/// come from the variance states x = σ_c², y = σ_v².
PathBundle simulate_stochvol_model(const TwoFactorParams& tf, const StochVolParams& sv,
                                   double c0, double v0, double x0, double y0,
                                   const SimConfig& cfg);

/// Column p, driven by dp = p·A(S)(μdt + σdW) with S read off `surface`
/// (a 1-D p surface holding all time slices, linear interpolation).
PathBundle simulate_feedback_price(const FeedbackParams& params, const Surface& surface, double p0,
                                   const SimConfig& cfg);

/// Assembled (W_c, W_v, W_x, W_y) correlation for the stochastic-variance model.
Eigen::Matrix4d stochvol_correlation(double lambda, const StochVolParams& sv);

/// Full-truncation Euler step of dx = [α(θ − x) − ϑx]dt + σ√x dW.
inline double cir_step(double x, double alpha, double theta, double vartheta, double sigma,
                       double dt, double dw) {
  const double xp = x > 0.0 ? x : 0.0;
  return x + (alpha * (theta - xp) - vartheta * xp) * dt + sigma * std::sqrt(xp) * dw;
}

}  // namespace cvp
