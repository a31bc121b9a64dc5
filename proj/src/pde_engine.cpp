#include "pde_engine.hpp"

#include "cvp/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cvp::detail {

namespace {

// Extrapolation weights: u_end = w1·u_next + w2·u_next2, exact for functions
// linear in the natural coordinate (e^u on log axes, x on linear ones).
struct ExtrapWeights {
  double w1;
  double w2;
};

ExtrapWeights lower_weights(const AxisGeom& g) {
  if (g.log) {
    const double e = std::exp(-g.h);
    return {1.0 + e, -e};
  }
  return {2.0, -1.0};
}

ExtrapWeights upper_weights(const AxisGeom& g) {
  if (g.log) {
    const double e = std::exp(g.h);
    return {1.0 + e, -e};
  }
  return {2.0, -1.0};
}

bool index_active(const AxisGeom& g, std::size_t i) {
  if (i == 0) return g.lower == Boundary::degenerate;
  if (i + 1 == g.n) return g.upper == Boundary::degenerate;
  return true;
}

}  // namespace

double fitting_factor(double h) {
  const double x = 0.5 * h;
  if (x < 1e-4) return 1.0 + x * x / 3.0;
  return x / std::tanh(x);
}

Engine::Engine(std::vector<AxisGeom> axes) : axes_(std::move(axes)) {
  if (axes_.empty() || axes_.size() > 4) throw InvalidInput("grid must have 1 to 4 axes");
  for (std::size_t a = 0; a < axes_.size(); ++a) {
    const AxisGeom& g = axes_[a];
    if (g.n < 3) throw InvalidInput("axis needs at least 3 nodes");
    if (g.upper == Boundary::degenerate)
      throw InvalidInput("degenerate boundary is only supported at the lower end");
    if (g.log && g.lower == Boundary::degenerate)
      throw InvalidInput("degenerate boundary requires a linear axis");
    stride_[a] = size_;
    size_ *= g.n;
    fit_[a] = g.log ? fitting_factor(g.h) : 1.0;
  }

  active_.assign(size_, 0);
  interior_.assign(size_, 0);
  for (std::size_t node = 0; node < size_; ++node) {
    bool act = true;
    bool in = true;
    for (std::size_t a = 0; a < axes_.size(); ++a) {
      const std::size_t i = index(node, a);
      act = act && index_active(axes_[a], i);
      in = in && i > 0 && i + 1 < axes_[a].n;
    }
    active_[node] = act;
    interior_[node] = in;
    if (act) active_nodes_.push_back(node);
  }

  for (std::size_t a = 0; a < axes_.size(); ++a) {
    for (std::size_t node = 0; node < size_; ++node) {
      const std::size_t i = index(node, a);
      bool others_active = true;
      bool on_dirichlet = false;
      for (std::size_t b = 0; b < axes_.size(); ++b) {
        if (b == a) continue;
        const std::size_t j = index(node, b);
        others_active = others_active && index_active(axes_[b], j);
        if ((j == 0 && axes_[b].lower == Boundary::dirichlet) ||
            (j + 1 == axes_[b].n && axes_[b].upper == Boundary::dirichlet))
          on_dirichlet = true;
      }
      if (i == 0 && others_active) lines_[a].push_back(node);
      if (!on_dirichlet) {
        if (i == 0 && axes_[a].lower == Boundary::extrapolate) extrap_lower_[a].push_back(node);
        if (i + 1 == axes_[a].n && axes_[a].upper == Boundary::extrapolate)
          extrap_upper_[a].push_back(node);
      }
    }
  }
}

void Engine::apply_axis(std::size_t a, const std::vector<double>& u,
                        std::vector<double>& out) const {
  const AxisGeom& g = axes_[a];
  const std::size_t s = stride_[a];
  const double inv_h = 1.0 / g.h;
  const double inv_h2 = inv_h * inv_h;
  const double f = fit(a);
  const auto& lines = lines_[a];
  const Field& diff = diff_[a];
  const Field& drift = drift_[a];
  std::fill(out.begin(), out.end(), 0.0);

#pragma omp parallel for schedule(static)
  for (std::size_t li = 0; li < lines.size(); ++li) {
    const std::size_t start = lines[li];
    if (g.lower == Boundary::degenerate) {
      const double b = drift[start];
      out[start] = b * (u[start + s] - u[start]) * inv_h;
    }
    for (std::size_t i = 1; i + 1 < g.n; ++i) {
      const std::size_t node = start + i * s;
      const double um = u[node - s];
      const double u0 = u[node];
      const double up = u[node + s];
      const double d = diff[node];
      if (g.log) {
        out[node] = d * (f * (up - 2.0 * u0 + um) * inv_h2 - 0.5 * (up - um) * inv_h);
      } else {
        out[node] = d * (up - 2.0 * u0 + um) * inv_h2 + drift[node] * 0.5 * (up - um) * inv_h;
      }
    }
  }
}

void Engine::apply_mixed(const std::vector<double>& u, std::vector<double>& out) const {
  for (std::size_t a = 0; a < axes_.size(); ++a) {
    for (std::size_t b = a + 1; b < axes_.size(); ++b) {
      const Field& m = mixed_[a][b];
      if (m.zero()) continue;
      const std::size_t sa = stride_[a];
      const std::size_t sb = stride_[b];
      const double w = 0.25 / (axes_[a].h * axes_[b].h);
      const std::size_t na = axes_[a].n;
      const std::size_t nb = axes_[b].n;
#pragma omp parallel for schedule(static)
      for (std::size_t k = 0; k < active_nodes_.size(); ++k) {
        const std::size_t node = active_nodes_[k];
        const std::size_t ia = index(node, a);
        const std::size_t ib = index(node, b);
        if (ia == 0 || ib == 0 || ia + 1 == na || ib + 1 == nb) continue;
        const double c = m[node];
        if (c == 0.0) continue;
        out[node] += c * w *
                     (u[node + sa + sb] - u[node + sa - sb] - u[node - sa + sb] + u[node - sa - sb]);
      }
    }
  }
}

void Engine::apply_full(const std::vector<double>& u, std::vector<double>& out) const {
  std::vector<double> tmp(size_);
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t a = 0; a < axes_.size(); ++a) {
    apply_axis(a, u, tmp);
    for (std::size_t node : active_nodes_) out[node] += tmp[node];
  }
  apply_mixed(u, out);
}

void Engine::solve_axis(std::size_t a, double k, std::vector<double>& rhs) const {
  const AxisGeom& g = axes_[a];
  const std::size_t n = g.n;
  const std::size_t s = stride_[a];
  const double inv_h = 1.0 / g.h;
  const double inv_h2 = inv_h * inv_h;
  const double f = fit(a);
  const ExtrapWeights lw = lower_weights(g);
  const ExtrapWeights uw = upper_weights(g);
  const auto& lines = lines_[a];
  const Field& diff = diff_[a];
  const Field& drift = drift_[a];

#pragma omp parallel
  {
    std::vector<double> lo(n), di(n), up(n), r(n);
#pragma omp for schedule(static)
    for (std::size_t li = 0; li < lines.size(); ++li) {
      const std::size_t start = lines[li];
      for (std::size_t i = 0; i < n; ++i) r[i] = rhs[start + i * s];

      for (std::size_t i = 1; i + 1 < n; ++i) {
        const std::size_t node = start + i * s;
        const double d = diff[node];
        double second, first;
        if (g.log) {
          second = f * d * inv_h2;
          first = -d * 0.5 * inv_h;
        } else {
          second = d * inv_h2;
          first = drift[node] * 0.5 * inv_h;
        }
        lo[i] = -k * (second - first);
        di[i] = 1.0 + 2.0 * k * second;
        up[i] = -k * (second + first);
      }

      std::size_t first_row = 0;
      std::size_t last_row = n - 1;
      switch (g.lower) {
        case Boundary::dirichlet:
          lo[0] = 0.0; di[0] = 1.0; up[0] = 0.0;
          break;
        case Boundary::degenerate: {
          const double b = drift[start] * inv_h;
          lo[0] = 0.0; di[0] = 1.0 + k * b; up[0] = -k * b;
          break;
        }
        case Boundary::extrapolate:
          di[1] += lo[1] * lw.w1;
          up[1] += lo[1] * lw.w2;
          lo[1] = 0.0;
          first_row = 1;
          break;
      }
      switch (g.upper) {
        case Boundary::dirichlet:
          lo[n - 1] = 0.0; di[n - 1] = 1.0; up[n - 1] = 0.0;
          break;
        case Boundary::extrapolate:
          di[n - 2] += up[n - 2] * uw.w1;
          lo[n - 2] += up[n - 2] * uw.w2;
          up[n - 2] = 0.0;
          last_row = n - 2;
          break;
        case Boundary::degenerate:
          break;
      }

      // Thomas algorithm on [first_row, last_row].
      for (std::size_t i = first_row + 1; i <= last_row; ++i) {
        const double m = lo[i] / di[i - 1];
        di[i] -= m * up[i - 1];
        r[i] -= m * r[i - 1];
      }
      r[last_row] /= di[last_row];
      for (std::size_t i = last_row; i-- > first_row;) r[i] = (r[i] - up[i] * r[i + 1]) / di[i];

      if (g.lower == Boundary::extrapolate) r[0] = lw.w1 * r[1] + lw.w2 * r[2];
      if (g.upper == Boundary::extrapolate) r[n - 1] = uw.w1 * r[n - 2] + uw.w2 * r[n - 3];
      for (std::size_t i = 0; i < n; ++i) rhs[start + i * s] = r[i];
    }
  }
}

void Engine::fill_boundaries(std::vector<double>& u) const {
  for (std::size_t a = 0; a < axes_.size(); ++a) {
    const std::size_t s = stride_[a];
    const std::size_t n = axes_[a].n;
    const ExtrapWeights lw = lower_weights(axes_[a]);
    const ExtrapWeights uw = upper_weights(axes_[a]);
    for (std::size_t node : extrap_lower_[a]) u[node] = lw.w1 * u[node + s] + lw.w2 * u[node + 2 * s];
    for (std::size_t node : extrap_upper_[a]) u[node] = uw.w1 * u[node - s] + uw.w2 * u[node - 2 * s];
    (void)n;
  }
}

void Engine::douglas_step(std::vector<double>& u, double dt, double theta) {
  const std::size_t d = axes_.size();
  for (std::size_t a = 0; a < d; ++a) {
    axis_terms_[a].resize(size_);
    apply_axis(a, u, axis_terms_[a]);
  }
  work_.assign(u.begin(), u.end());
  std::vector<double> mixed_term(size_, 0.0);
  apply_mixed(u, mixed_term);
  for (std::size_t node : active_nodes_) {
    double total = mixed_term[node];
    for (std::size_t a = 0; a < d; ++a) total += axis_terms_[a][node];
    work_[node] += dt * total;
  }
  const double k = theta * dt;
  for (std::size_t a = 0; a < d; ++a) {
    const auto& term = axis_terms_[a];
    for (std::size_t node = 0; node < size_; ++node) work_[node] -= k * term[node];
    solve_axis(a, k, work_);
  }
  fill_boundaries(work_);
  u.swap(work_);
}

void Engine::explicit_step(std::vector<double>& u, double dt) {
  work_.resize(size_);
  apply_full(u, work_);
  for (std::size_t node : active_nodes_) u[node] += dt * work_[node];
  fill_boundaries(u);
}

double Engine::explicit_dt_bound() const {
  double worst = 0.0;
  for (std::size_t node : active_nodes_) {
    double rate = 0.0;
    for (std::size_t a = 0; a < axes_.size(); ++a) {
      const AxisGeom& g = axes_[a];
      const double d = std::abs(diff_[a][node]) * fit(a);
      rate += 2.0 * d / (g.h * g.h);
      const double b = g.log ? std::abs(diff_[a][node]) : std::abs(drift_[a][node]);
      rate += b / g.h;
      for (std::size_t b2 = a + 1; b2 < axes_.size(); ++b2)
        rate += std::abs(mixed_[a][b2][node]) / (g.h * axes_[b2].h);
    }
    worst = std::max(worst, rate);
  }
  return worst > 0.0 ? 0.9 / worst : std::numeric_limits<double>::infinity();
}

double Engine::mixed_dt_bound() const {
  double worst = 0.0;
  for (std::size_t node : active_nodes_) {
    double rate = 0.0;
    for (std::size_t a = 0; a < axes_.size(); ++a)
      for (std::size_t b = a + 1; b < axes_.size(); ++b)
        rate += std::abs(mixed_[a][b][node]) / (axes_[a].h * axes_[b].h);
    worst = std::max(worst, rate);
  }
  return worst > 0.0 ? 0.9 / worst : std::numeric_limits<double>::infinity();
}

std::size_t Engine::working_bytes() const {
  // solution, predictor, mixed term, one term per axis, coefficient fields
  const std::size_t arrays = 3 + 2 * axes_.size() + 2 * axes_.size() + 6;
  return arrays * size_ * sizeof(double) + 3 * size_;
}

}  // namespace cvp::detail
