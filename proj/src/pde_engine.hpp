#pragma once

// Structured-grid operator shared by all PDE solvers: tensor grids of up to
// four axes, per-node coefficients, Douglas ADI and explicit Euler steps.

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace cvp::detail {

enum class Boundary {
  dirichlet,    ///< node value held fixed
  extrapolate,  ///< linear in the natural coordinate (zero second derivative)
  degenerate,   ///< the equation itself with a one-sided first derivative (lower end only)
};

struct AxisGeom {
  bool log = false;
  std::size_t n = 0;
  double lo = 0.0;  ///< solver coordinate of node 0
  double h = 0.0;
  Boundary lower = Boundary::dirichlet;
  Boundary upper = Boundary::dirichlet;

  [[nodiscard]] double coord(std::size_t i) const { return lo + h * static_cast<double>(i); }
};

/// Coefficient that is either zero, constant, or given per node.
class Field {
 public:
  void set(double c) { v_.assign(1, c); }
  void resize(std::size_t n) { v_.assign(n, 0.0); }
  [[nodiscard]] bool zero() const { return v_.empty(); }
  double& at(std::size_t node) { return v_[node]; }
  double operator[](std::size_t node) const {
    return v_.empty() ? 0.0 : (v_.size() == 1 ? v_[0] : v_[node]);
  }

 private:
  std::vector<double> v_;
};

/// Generator L = Σ_a [D_a ∂²_a + B_a ∂_a] + Σ_{a<b} M_ab ∂_a∂_b.
/// On log axes the pair is D_a(∂²_a − ∂_a) and B_a is ignored.
class Engine {
 public:
  explicit Engine(std::vector<AxisGeom> axes);

  [[nodiscard]] std::size_t dims() const { return axes_.size(); }
  [[nodiscard]] std::size_t size() const { return size_; }
  [[nodiscard]] const AxisGeom& axis(std::size_t a) const { return axes_[a]; }
  [[nodiscard]] std::size_t stride(std::size_t a) const { return stride_[a]; }
  [[nodiscard]] std::size_t index(std::size_t node, std::size_t a) const {
    return (node / stride_[a]) % axes_[a].n;
  }
  [[nodiscard]] bool active(std::size_t node) const { return active_[node] != 0; }
  [[nodiscard]] bool interior(std::size_t node) const { return interior_[node] != 0; }
  [[nodiscard]] const std::vector<std::size_t>& active_nodes() const { return active_nodes_; }

  Field& diff(std::size_t a) { return diff_[a]; }
  Field& drift(std::size_t a) { return drift_[a]; }
  Field& mixed(std::size_t a, std::size_t b) { return mixed_[a][b]; }
  [[nodiscard]] const Field& mixed(std::size_t a, std::size_t b) const { return mixed_[a][b]; }

  /// out = L_a u at active nodes, 0 elsewhere.
  void apply_axis(std::size_t a, const std::vector<double>& u, std::vector<double>& out) const;
  /// out += Σ M_ab ∂_a∂_b u at active nodes.
  void apply_mixed(const std::vector<double>& u, std::vector<double>& out) const;
  /// out = L u (all axes and mixed terms) at active nodes.
  void apply_full(const std::vector<double>& u, std::vector<double>& out) const;
  /// Solves (I − k·L_a) x = rhs along every active line of axis a, in place.
  void solve_axis(std::size_t a, double k, std::vector<double>& rhs) const;
  /// Recomputes extrapolated boundary faces from the interior.
  void fill_boundaries(std::vector<double>& u) const;

  void douglas_step(std::vector<double>& u, double dt, double theta);
  void explicit_step(std::vector<double>& u, double dt);

  /// 0.9 / max_nodes(Σ 2D_a/h² + Σ|B_a|/h + Σ|M_ab|/(h_a h_b)).
  [[nodiscard]] double explicit_dt_bound() const;
  /// 0.9 / max_nodes Σ|M_ab|/(h_a h_b); +inf without mixed terms.
  [[nodiscard]] double mixed_dt_bound() const;

  /// Bytes needed for a Douglas step on this grid.
  [[nodiscard]] std::size_t working_bytes() const;

 private:
  [[nodiscard]] double fit(std::size_t a) const { return fit_[a]; }

  std::vector<AxisGeom> axes_;
  std::array<std::size_t, 4> stride_{};
  std::array<double, 4> fit_{};
  std::size_t size_ = 1;
  std::vector<std::uint8_t> active_;
  std::vector<std::uint8_t> interior_;
  std::vector<std::size_t> active_nodes_;
  std::array<std::vector<std::size_t>, 4> lines_;
  std::array<std::vector<std::size_t>, 4> extrap_lower_;
  std::array<std::vector<std::size_t>, 4> extrap_upper_;

  std::array<Field, 4> diff_;
  std::array<Field, 4> drift_;
  std::array<std::array<Field, 4>, 4> mixed_;

  // Scratch for the time steppers.
  std::array<std::vector<double>, 4> axis_terms_;
  std::vector<double> work_;
};

/// (h/2)·coth(h/2): second-difference weight that makes D(∂² − ∂) exact on e^u.
double fitting_factor(double h);

}  // namespace cvp::detail
