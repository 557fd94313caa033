#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "ddscbf/core.hpp"
#include "ddscbf/rng.hpp"

namespace ddscbf {

using VectorField = std::function<Vector(const Vector&)>;
using MatrixField = std::function<Matrix(const Vector&)>;

enum class DiffusionVisibility { known, hidden };

namespace detail {
struct Physics;
}

/**
 * @brief Controlled Ito SDE  dX = (f(X) + g(X) u) dt + b(X) dW.
 *
 * The diffusion b may be marked hidden; any controller-side call to
 * diffusion() then throws VisibilityViolation while the integrator still
 * advances the true dynamics.
 */
class SdeModel {
 public:
  SdeModel(int state_dim, int control_dim, int noise_dim, VectorField drift,
           MatrixField control_matrix, MatrixField diffusion,
           DiffusionVisibility visibility = DiffusionVisibility::known)
      : n_(state_dim),
        p_(control_dim),
        d_(noise_dim),
        drift_(std::move(drift)),
        control_(std::move(control_matrix)),
        diffusion_(std::move(diffusion)),
        visibility_(visibility) {
    if (n_ <= 0 || p_ <= 0 || d_ <= 0) throw ConfigError("SdeModel dimensions must be positive");
    if (!drift_ || !control_ || !diffusion_) throw ConfigError("SdeModel fields must be callable");
  }

  [[nodiscard]] int state_dim() const noexcept { return n_; }
  [[nodiscard]] int control_dim() const noexcept { return p_; }
  [[nodiscard]] int noise_dim() const noexcept { return d_; }
  [[nodiscard]] bool diffusion_visible() const noexcept {
    return visibility_ == DiffusionVisibility::known;
  }

  [[nodiscard]] Vector drift(const Vector& x) const {
    check_state(x);
    Vector f = drift_(x);
    if (f.size() != n_) throw ConfigError("drift returned wrong dimension");
    return f;
  }

  [[nodiscard]] Matrix control_matrix(const Vector& x) const {
    check_state(x);
    Matrix g = control_(x);
    if (g.rows() != n_ || g.cols() != p_) throw ConfigError("control matrix has wrong shape");
    return g;
  }

  [[nodiscard]] Matrix diffusion(const Vector& x) const {
    if (!diffusion_visible()) throw VisibilityViolation("diffusion of this model is hidden");
    return raw_diffusion(x);
  }

  /// Same dynamics with the diffusion withheld from callers.
  [[nodiscard]] SdeModel hidden() const {
    SdeModel copy = *this;
    copy.visibility_ = DiffusionVisibility::hidden;
    return copy;
  }

 private:
  friend struct detail::Physics;

  void check_state(const Vector& x) const {
    if (x.size() != n_) throw ConfigError("state has wrong dimension");
  }

  [[nodiscard]] Matrix raw_diffusion(const Vector& x) const {
    check_state(x);
    Matrix b = diffusion_(x);
    if (b.rows() != n_ || b.cols() != d_) throw ConfigError("diffusion has wrong shape");
    return b;
  }

  int n_;
  int p_;
  int d_;
  VectorField drift_;
  MatrixField control_;
  MatrixField diffusion_;
  DiffusionVisibility visibility_;
};

namespace detail {

// The integrator is the one place allowed to read a hidden diffusion.
struct Physics {
  static Matrix diffusion(const SdeModel& model, const Vector& x) { return model.raw_diffusion(x); }
};

inline Vector em_step_unchecked(const SdeModel& model, const Vector& x, const Vector& u, double dt,
                                RngStream& rng) {
  if (!(dt > 0.0)) throw ConfigError("dt must be positive");
  if (u.size() != model.control_dim()) throw ConfigError("control has wrong dimension");
  Vector xi(model.noise_dim());
  for (Eigen::Index k = 0; k < xi.size(); ++k) xi[k] = rng.gaussian();
  return x + (model.drift(x) + model.control_matrix(x) * u) * dt +
         Physics::diffusion(model, x) * xi * std::sqrt(dt);
}

}  // namespace detail

/// One Euler-Maruyama step; draws exactly noise_dim() variates from rng.
inline Vector em_step(const SdeModel& model, const Vector& x, const Vector& u, double dt,
                      RngStream& rng) {
  Vector next = detail::em_step_unchecked(model, x, u, dt, rng);
  if (!next.allFinite()) throw NumericalBlowup("Euler-Maruyama step produced a non-finite state");
  return next;
}

/// n independent one-step transitions, each restarted from x.
inline std::vector<Vector> sample_transitions(const SdeModel& model, const Vector& x,
                                              const Vector& u, double dt, int n, RngStream& rng) {
  if (n < 1) throw ConfigError("sample_transitions needs n >= 1");
  std::vector<Vector> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) out.push_back(em_step(model, x, u, dt, rng));
  return out;
}

}  // namespace ddscbf
