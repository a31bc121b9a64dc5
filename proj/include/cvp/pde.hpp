#pragma once

// Finite-difference solvers for the pricing equations.
//
// Traded coordinates (p, V) are discretized in forward log coordinates
// u = ln p + r·τ and the solution is carried as U = e^{rτ}·S, which removes
// the drift and discount terms; the second difference along these axes is
// exponentially fitted so that functions linear in p (or V) are reproduced
// exactly. Variance and expectation axes are linear.

#include "cvp/models.hpp"
#include "cvp/payoff.hpp"
#include "cvp/processes.hpp"

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace cvp {

enum class AxisTransform { linear, logarithmic };

/// One state axis; lo/hi are natural (untransformed) bounds at expiry.
struct Axis {
  std::string name;
  std::size_t n = 0;
  double lo = 0.0;
  double hi = 0.0;
  AxisTransform transform = AxisTransform::linear;

  [[nodiscard]] bool is_log() const { return transform == AxisTransform::logarithmic; }
  /// Node coordinate in solver space (ln for logarithmic axes).
  [[nodiscard]] double node(std::size_t i) const;
  [[nodiscard]] double spacing() const;
};

/// Log axis of n points with `center` exactly on a node and nodes spanning
/// roughly center·e^{±half_width}.
Axis log_axis(std::string name, double center, double half_width, std::size_t n);
Axis linear_axis(std::string name, double lo, double hi, std::size_t n);

struct Grid {
  std::vector<Axis> axes;
  double dt = 0.0;
  std::size_t n_t = 0;
  std::size_t rannacher = 2;  ///< leading steps replaced by two implicit half-steps each
};

Grid make_grid(std::vector<Axis> axes, double tau, std::size_t n_t, std::size_t rannacher = 2);
void validate(const Grid& grid);

struct SolverOptions {
  bool store_all_slices = true;
  /// When > 0 the solve is repeated on a grid with half the resolution and the
  /// Richardson error estimate is compared against this tolerance.
  double target_tolerance = 0.0;
  /// Time-stepping weight for the linear solvers (0.5 Crank–Nicolson, 1 implicit).
  double theta = 0.5;
  std::size_t memory_cap_bytes = std::size_t{2} << 30;
};

struct SurfaceMeta {
  std::string model;
  std::string scheme;
  std::vector<std::string> notices;
  std::size_t time_steps = 0;  ///< steps actually taken (after any dt reduction)
  bool accuracy_flag = false;
  double error_estimate = 0.0;
  // Nonlinear solves.
  bool converged = true;
  std::vector<std::size_t> picard_iterations;       ///< per stored interval
  std::vector<std::vector<double>> picard_deltas;   ///< per interval, max-norm change history
  double final_residual = 0.0;
  /// Nodes where the local diffusion matrix failed the PSD check.
  std::vector<std::size_t> non_psd_nodes;
};

enum class Interp { linear, cubic };

/// A solved pricing surface. Slices hold option prices S at every grid node,
/// slice 0 at expiry (τ = 0) and the last one at valuation time (τ = tau).
class Surface {
 public:
  Grid grid;
  double rate = 0.0;
  double tau = 0.0;
  std::vector<double> times;   ///< time to maturity of each stored slice
  std::vector<double> thetas;  ///< scheme weight for each interval (0 = explicit)
  std::vector<std::vector<double>> slices;
  SurfaceMeta meta;

  [[nodiscard]] std::size_t dims() const { return grid.axes.size(); }
  [[nodiscard]] std::size_t node_count() const;
  [[nodiscard]] bool has_all_slices() const { return slices.size() == times.size() && slices.size() > 1; }
  [[nodiscard]] const std::vector<double>& values() const { return slices.back(); }
  [[nodiscard]] std::size_t stride(std::size_t axis) const;

  /// Natural coordinates (p, V, x…) of a node at time to maturity `t`.
  [[nodiscard]] std::vector<double> spot_coordinates(std::size_t node, double t) const;
  /// True when the natural point lies within the grid at time to maturity t.
  [[nodiscard]] bool contains(std::span<const double> point, double t) const;
  /// Price at valuation time.
  [[nodiscard]] double value_at(std::span<const double> point, Interp interp = Interp::cubic) const;
  /// Price at time to maturity t (linear in time between stored slices).
  [[nodiscard]] double value_at_time(double t, std::span<const double> point,
                                     Interp interp = Interp::linear) const;
  [[nodiscard]] double slice_value(std::size_t slice, std::span<const double> point,
                                   Interp interp) const;
};

Surface solve_bsm_1d(double sigma, const PricingTerms& terms, const Payoff& payoff,
                     const Grid& grid, const SolverOptions& opts = {});

Surface solve_two_factor_2d(const TwoFactorParams& params, const PricingTerms& terms,
                            const Payoff& payoff, const Grid& grid,
                            const SolverOptions& opts = {});

/// Explicit Euler on axes (p, x1, x2, x3).
Surface solve_expectation_4d(const ExpectationParams& params, const PricingTerms& terms,
                             const Payoff& payoff, const Grid& grid,
                             const SolverOptions& opts = {});

/// Frozen-coefficient (Picard) iteration inside every time step.
Surface solve_nonlinear_1d(const FeedbackParams& fb, const PricingTerms& terms,
                           const Payoff& payoff, const Grid& grid, double picard_tol,
                           std::size_t picard_max, const SolverOptions& opts = {});

/// Axes (p, x); x may start at 0, where the degenerate equation is used.
Surface solve_heston_2d(const StochVolParams& sv, const PricingTerms& terms, const Payoff& payoff,
                        const Grid& grid, const SolverOptions& opts = {});

/// Axes (p, V, x).
Surface solve_stochvol_3d(const TwoFactorParams& params, const StochVolParams& sv,
                          const PricingTerms& terms, const Payoff& payoff, const Grid& grid,
                          const SolverOptions& opts = {});

struct Residual {
  double max_scaled = 0.0;  ///< max |R| / (1 + |S|)
  std::size_t interval = 0;
  std::size_t node = 0;
};

/// Applies the discrete operator of `model` (with the surface's per-interval
/// θ weights) at every interior node of every stored interval.
Residual pde_residual(const Surface& surface, const Model& model);

}  // namespace cvp
