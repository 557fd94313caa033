#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Eigenvalues>

#include "ddscbf/core.hpp"
#include "ddscbf/sde.hpp"

namespace ddscbf {

using ScalarField = std::function<double(const Vector&)>;

/**
 * @brief Barrier h with analytic derivatives; safe set C = {h >= 0}.
 *
 * sup_on_safe_set, when present, is c = sup_{y in C} h(y), the
 * normalizer of the worst-case safety bound.
 */
struct BarrierSpec {
  ScalarField value;
  VectorField gradient;
  MatrixField hessian;
  std::optional<double> sup_on_safe_set;

  [[nodiscard]] bool in_interior(const Vector& x) const { return value(x) > 0.0; }
};

/// h(x) = c - x^T P x with P symmetric positive definite.
inline BarrierSpec quadratic_barrier(double c, Matrix P) {
  if (P.rows() != P.cols()) throw ConfigError("P must be square");
  Matrix Ps = 0.5 * (P + P.transpose());
  const double min_eig = Eigen::SelfAdjointEigenSolver<Matrix>(Ps).eigenvalues().minCoeff();
  std::optional<double> sup;
  if (min_eig > 0.0) sup = c;
  return BarrierSpec{
      [c, Ps](const Vector& x) { return c - x.dot(Ps * x); },
      [Ps](const Vector& x) -> Vector { return -2.0 * Ps * x; },
      [Ps](const Vector&) -> Matrix { return -2.0 * Ps; },
      sup,
  };
}

/// Drift and control parts of the generator: A h = lf + lg u + Delta.
struct LieParts {
  double lf = 0.0;
  RowVector lg;
};

inline LieParts lie_parts(const SdeModel& model, const BarrierSpec& barrier, const Vector& x) {
  const Vector grad = barrier.gradient(x);
  LieParts parts;
  parts.lf = grad.dot(model.drift(x));
  parts.lg = grad.transpose() * model.control_matrix(x);
  return parts;
}

/// Delta(x) = 1/2 tr[(b b^T)(x) h_xx(x)]. Throws VisibilityViolation on hidden models.
inline double trace_correction_true(const SdeModel& model, const BarrierSpec& barrier,
                                    const Vector& x) {
  const Matrix b = model.diffusion(x);
  return 0.5 * (b.transpose() * barrier.hessian(x) * b).trace();
}

inline double generator_true(const SdeModel& model, const BarrierSpec& barrier, const Vector& x,
                             const Vector& u) {
  const double delta = trace_correction_true(model, barrier, x);
  const LieParts parts = lie_parts(model, barrier, x);
  return parts.lf + parts.lg.dot(u) + delta;
}

/// Lower bound h(x0)/c on the probability of never leaving the interior.
inline double worst_case_bound(const BarrierSpec& barrier, const Vector& x0) {
  if (!barrier.sup_on_safe_set) throw ConfigError("barrier has no supremum on the safe set");
  const double h0 = barrier.value(x0);
  if (!(h0 > 0.0)) throw OutsideSafeSet("initial state is not in the interior of the safe set");
  return std::clamp(h0 / *barrier.sup_on_safe_set, 0.0, 1.0);
}

/// Axis-aligned box, one [lo, hi] interval per state dimension.
struct Box {
  Vector lo;
  Vector hi;

  [[nodiscard]] int dim() const { return static_cast<int>(lo.size()); }
  [[nodiscard]] bool contains(const Vector& x) const {
    return x.size() == lo.size() && (x.array() >= lo.array()).all() &&
           (x.array() <= hi.array()).all();
  }
  void validate() const {
    if (lo.size() == 0 || lo.size() != hi.size()) throw ConfigError("box bounds have mismatched sizes");
    if (!(lo.array() < hi.array()).all()) throw ConfigError("box needs lo < hi in every dimension");
  }
};

struct GridSupremum {
  double value = 0.0;
  Vector argmax;
  // max |grad h| over the grid times the half-diagonal of a grid cell; the
  // true supremum over the box lies within value + lipschitz_slack.
  double lipschitz_slack = 0.0;
};

/// Dense-grid estimate of sup h over box ∩ C, for barriers whose supremum is not analytic.
inline GridSupremum grid_supremum(const BarrierSpec& barrier, const Box& box, double step = 1e-2) {
  box.validate();
  const int n = box.dim();
  std::vector<int> counts(n);
  for (int i = 0; i < n; ++i)
    counts[i] = static_cast<int>(std::floor((box.hi[i] - box.lo[i]) / step + 1e-9)) + 1;

  GridSupremum best;
  best.value = -std::numeric_limits<double>::infinity();
  double max_grad = 0.0;
  std::vector<int> idx(n, 0);
  Vector x(n);
  for (;;) {
    for (int i = 0; i < n; ++i) x[i] = std::min(box.lo[i] + idx[i] * step, box.hi[i]);
    const double h = barrier.value(x);
    if (h >= 0.0) {
      max_grad = std::max(max_grad, barrier.gradient(x).norm());
      if (h > best.value) {
        best.value = h;
        best.argmax = x;
      }
    }
    int k = 0;
    while (k < n && ++idx[k] == counts[k]) idx[k++] = 0;
    if (k == n) break;
  }
  best.lipschitz_slack = max_grad * 0.5 * step * std::sqrt(static_cast<double>(n));
  return best;
}

}  // namespace ddscbf
