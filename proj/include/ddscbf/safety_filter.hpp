#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "ddscbf/barrier.hpp"
#include "ddscbf/mlp.hpp"
#include "ddscbf/sde.hpp"
#include "ddscbf/simulate.hpp"

namespace ddscbf {

/// Which generator the constraint is built from: SCBF, DDSCBF, or plain CBF.
enum class GeneratorSource { true_generator, learned, deterministic_lie };

inline const char* to_string(GeneratorSource s) {
  switch (s) {
    case GeneratorSource::true_generator: return "true-generator";
    case GeneratorSource::learned: return "learned";
    case GeneratorSource::deterministic_lie: return "deterministic-lie";
  }
  return "unknown";
}

/**
 * @brief Constraint  Âh(x, u) + decay_rate * h(x) >= margin.
 *
 * margin is the lumped robustness term of the worst-case guarantee; with
 * decay_rate = 0 the admissible set is exactly {u : Âh(x, u) >= margin}.
 * control_bounds, when present, is the box of admissible inputs.
 */
struct SafetyFilterConfig {
  double margin = 0.01;
  double decay_rate = 0.0;
  GeneratorSource generator_source = GeneratorSource::true_generator;
  std::optional<Box> control_bounds;

  void validate() const {
    if (!(margin >= 0.0)) throw ConfigError("margin must be >= 0");
    if (!(decay_rate >= 0.0)) throw ConfigError("decay_rate must be >= 0");
    if (control_bounds) control_bounds->validate();
  }
};

/// Âh(x, u) = offset + slope * u at one fixed state.
struct AffineGenerator {
  double offset = 0.0;
  RowVector slope;
};

struct FilterOutcome {
  Vector u;
  bool modified = false;
  double constraint_value = 0.0;  // offset + slope * u at the returned u
  bool feasible = true;
};

namespace detail {

inline Vector clamp_to(const Vector& u, const Box& box) {
  return u.cwiseMax(box.lo).cwiseMin(box.hi);
}

// min |u - u_nom|^2  s.t.  a.u >= r,  lo <= u <= hi.
// KKT gives u(l) = clamp(u_nom + l a) with the smallest l >= 0 reaching
// a.u(l) >= r; a.u(l) is nondecreasing and piecewise linear in l, so a sweep
// over the clamp breakpoints finds l exactly.
inline Vector project_halfspace_box(const Vector& u_nom, const RowVector& a, double r, const Box& box) {
  auto at = [&](double l) { return clamp_to(u_nom + l * a.transpose(), box); };
  std::vector<double> breaks;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (a[i] == 0.0) continue;
    for (double bound : {box.lo[i], box.hi[i]}) {
      const double l = (bound - u_nom[i]) / a[i];
      if (l > 0.0) breaks.push_back(l);
    }
  }
  std::sort(breaks.begin(), breaks.end());
  double l_prev = 0.0;
  double phi_prev = a.dot(at(0.0));
  for (double l : breaks) {
    const double phi = a.dot(at(l));
    if (phi >= r) {
      const double t = phi > phi_prev ? (r - phi_prev) / (phi - phi_prev) : 1.0;
      return at(l_prev + t * (l - l_prev));
    }
    l_prev = l;
    phi_prev = phi;
  }
  return at(l_prev);
}

}  // namespace detail

/// Minimal-norm correction of u_nom onto the admissible set of one affine constraint.
inline FilterOutcome filter_control(const AffineGenerator& gen, const Vector& u_nom,
                                    const SafetyFilterConfig& cfg) {
  if (gen.slope.size() != u_nom.size()) throw ConfigError("generator slope and control differ in size");
  const double needed = cfg.margin - gen.offset;  // require slope.u >= needed
  const auto& a = gen.slope;
  auto satisfied = [&](const Vector& u) { return gen.offset + a.dot(u) >= cfg.margin; };
  FilterOutcome out;

  if (!cfg.control_bounds) {
    if (satisfied(u_nom)) {
      out.u = u_nom;
    } else if (a.squaredNorm() == 0.0) {
      out.u = u_nom;
      out.feasible = false;
    } else {
      out.u = u_nom + ((needed - a.dot(u_nom)) / a.squaredNorm()) * a.transpose();
      out.modified = true;
    }
    out.constraint_value = gen.offset + a.dot(out.u);
    return out;
  }

  const Box& box = *cfg.control_bounds;
  if (box.dim() != u_nom.size()) throw ConfigError("control bounds have the wrong dimension");
  double best = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) best += std::max(a[i] * box.lo[i], a[i] * box.hi[i]);

  const Vector clamped = detail::clamp_to(u_nom, box);
  if (satisfied(clamped)) {
    out.u = clamped;
  } else if (best < needed) {
    out.u = clamped;
    out.feasible = false;
  } else {
    out.u = detail::project_halfspace_box(u_nom, a, needed, box);
  }
  out.modified = out.u != u_nom;
  out.constraint_value = gen.offset + a.dot(out.u);
  return out;
}

using Controller = std::function<Vector(const Vector&)>;
using GeneratorOracle = std::function<AffineGenerator(const Vector&)>;

/// Affine-in-u generator for the chosen source, including the decay term.
inline GeneratorOracle make_generator(const SafetyFilterConfig& cfg, const SdeModel& model,
                                      const BarrierSpec& barrier,
                                      const std::optional<MlpParams>& params) {
  cfg.validate();
  switch (cfg.generator_source) {
    case GeneratorSource::true_generator:
      if (!model.diffusion_visible())
        throw VisibilityViolation("the true-generator source needs a model with visible diffusion");
      break;
    case GeneratorSource::learned:
      if (!params) throw ConfigError("the learned source needs trained network parameters");
      params->validate();
      if (params->input_dim() != model.state_dim()) throw ConfigError("network input dimension mismatch");
      break;
    case GeneratorSource::deterministic_lie:
      break;
  }
  return [cfg, model, barrier, params](const Vector& x) {
    const LieParts parts = lie_parts(model, barrier, x);
    double offset = parts.lf;
    if (cfg.generator_source == GeneratorSource::true_generator)
      offset += trace_correction_true(model, barrier, x);
    else if (cfg.generator_source == GeneratorSource::learned)
      offset += mlp_forward(*params, x);
    if (cfg.decay_rate != 0.0) offset += cfg.decay_rate * barrier.value(x);
    return AffineGenerator{offset, parts.lg};
  };
}

/// Filtered state feedback; returns std::nullopt where the filter is infeasible.
inline Policy make_policy(const SafetyFilterConfig& cfg, const SdeModel& model,
                          const BarrierSpec& barrier, const std::optional<MlpParams>& params,
                          Controller nominal) {
  GeneratorOracle gen = make_generator(cfg, model, barrier, params);
  return [cfg, gen = std::move(gen), nominal = std::move(nominal)](const Vector& x) -> std::optional<Vector> {
    FilterOutcome out = filter_control(gen(x), nominal(x), cfg);
    if (!out.feasible) return std::nullopt;
    return std::move(out.u);
  };
}

struct PendulumGains {
  double k_angle = 4.0;
  double k_rate = 4.0;
};

/// PD law u = -k1 theta - k2 theta_dot.
inline Vector pendulum_nominal(const Vector& x, const PendulumGains& gains = {}) {
  Vector u(1);
  u[0] = -gains.k_angle * x[0] - gains.k_rate * x[1];
  return u;
}

/**
 * Min-norm CLF law for the cubic system with V = |x|^2 / 2:
 * dV/dt = -0.6 x1^2 - x1 x2 + x1^3 x2 + x2^2 u, and u is the smallest input
 * with dV/dt <= -gamma V. On |x2| < 1e-6 the input has no effect and u = 0.
 */
inline Vector cubic_clf_nominal(const Vector& x, double gamma = 1.0) {
  Vector u = Vector::Zero(1);
  const double x1 = x[0];
  const double x2 = x[1];
  if (std::abs(x2) < 1e-6) return u;
  const double v = 0.5 * (x1 * x1 + x2 * x2);
  const double excess = -0.6 * x1 * x1 - x1 * x2 + x1 * x1 * x1 * x2 + gamma * v;
  if (excess > 0.0) u[0] = -excess / (x2 * x2);
  return u;
}

}  // namespace ddscbf
