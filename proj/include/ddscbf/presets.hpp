#pragma once

#include <cmath>
#include <string>

#include "ddscbf/barrier.hpp"
#include "ddscbf/estimator.hpp"
#include "ddscbf/safety_filter.hpp"
#include "ddscbf/sde.hpp"

namespace ddscbf {

enum class Example { pendulum, cubic2d };

inline const char* to_string(Example e) { return e == Example::pendulum ? "pendulum" : "cubic2d"; }

inline Example parse_example(const std::string& name) {
  if (name == "pendulum") return Example::pendulum;
  if (name == "cubic2d") return Example::cubic2d;
  throw ConfigError("unknown example '" + name + "' (expected pendulum or cubic2d)");
}

// Inverted pendulum, x = (theta, theta_dot):
//   d theta     = theta_dot dt + sigma theta dW
//   d theta_dot = (g/l) sin(theta) dt + u / (m l^2) dt
struct PendulumParams {
  double gravity = 10.0;
  double length = 0.7;
  double mass = 1.0;
};

inline SdeModel pendulum_model(double noise_scale = 0.1, PendulumParams p = {}) {
  return SdeModel(
      2, 1, 1,
      [p](const Vector& x) -> Vector {
        Vector f(2);
        f << x[1], p.gravity / p.length * std::sin(x[0]);
        return f;
      },
      [p](const Vector&) -> Matrix {
        Matrix g(2, 1);
        g << 0.0, 1.0 / (p.mass * p.length * p.length);
        return g;
      },
      [noise_scale](const Vector& x) -> Matrix {
        Matrix b(2, 1);
        b << noise_scale * x[0], 0.0;
        return b;
      });
}

/// h = 0.2 - x^T P x with P = [[sqrt3, 1], [1, sqrt3]]; sup over C is 0.2 at the origin.
inline BarrierSpec pendulum_barrier() {
  Matrix P(2, 2);
  P << std::sqrt(3.0), 1.0, 1.0, std::sqrt(3.0);
  return quadratic_barrier(0.2, P);
}

inline double pendulum_delta(const Vector& x, double noise_scale = 0.1) {
  return -std::sqrt(3.0) * (noise_scale * x[0]) * (noise_scale * x[0]);
}

// Cubic system:
//   dx1 = (-0.6 x1 - x2) dt
//   dx2 = x1^3 dt + x2 u dt + sigma x2 dW
inline SdeModel cubic_model(double noise_scale = 0.1) {
  return SdeModel(
      2, 1, 1,
      [](const Vector& x) -> Vector {
        Vector f(2);
        f << -0.6 * x[0] - x[1], x[0] * x[0] * x[0];
        return f;
      },
      [](const Vector& x) -> Matrix {
        Matrix g(2, 1);
        g << 0.0, x[1];
        return g;
      },
      [noise_scale](const Vector& x) -> Matrix {
        Matrix b(2, 1);
        b << 0.0, noise_scale * x[1];
        return b;
      });
}

inline Box pendulum_box() { return Box{Eigen::Vector2d(-1.0, -1.0), Eigen::Vector2d(1.0, 1.0)}; }
inline Box cubic_box() { return Box{Eigen::Vector2d(-2.0, -1.5), Eigen::Vector2d(1.5, 1.5)}; }

/// h = 1 - x1 - x2^2. C is unbounded, so c is the grid maximum over cubic_box().
inline BarrierSpec cubic_barrier() {
  BarrierSpec h{
      [](const Vector& x) { return 1.0 - x[0] - x[1] * x[1]; },
      [](const Vector& x) -> Vector { return Eigen::Vector2d(-1.0, -2.0 * x[1]); },
      [](const Vector&) -> Matrix {
        Matrix H = Matrix::Zero(2, 2);
        H(1, 1) = -2.0;
        return H;
      },
      std::nullopt,
  };
  h.sup_on_safe_set = grid_supremum(h, cubic_box(), 1e-2).value;
  return h;
}

inline double cubic_delta(const Vector& x, double noise_scale = 0.1) {
  return -(noise_scale * x[1]) * (noise_scale * x[1]);
}

/**
 * @brief Everything needed to run one of the two benchmark systems.
 *
 * decay_rate is twice the smallest rate that keeps the filter constraint
 * feasible on {L_g h = 0} over the sampling box at margin 0.01 (pendulum:
 * 0.05 at the origin; cubic: 0.403 at x = (-2, 0)).
 */
struct Preset {
  Example example;
  double noise_scale;
  SdeModel model;
  BarrierSpec barrier;
  SamplingRegion region;
  Vector x0;
  Controller nominal;
  double decay_rate;
  int plot_coordinate;  // theta for the pendulum, x2 for the cubic system
  std::function<double(const Vector&)> analytic_delta;
};

inline Preset make_preset(Example example, double noise_scale) {
  if (example == Example::pendulum) {
    return Preset{example,
                  noise_scale,
                  pendulum_model(noise_scale),
                  pendulum_barrier(),
                  SamplingRegion{pendulum_box(), SamplingMode::uniform_random},
                  Eigen::Vector2d(0.1, -0.1),
                  [](const Vector& x) { return pendulum_nominal(x); },
                  0.1,
                  0,
                  [noise_scale](const Vector& x) { return pendulum_delta(x, noise_scale); }};
  }
  return Preset{example,
                noise_scale,
                cubic_model(noise_scale),
                cubic_barrier(),
                SamplingRegion{cubic_box(), SamplingMode::uniform_random},
                Eigen::Vector2d(-0.5, 0.8),
                [](const Vector& x) { return cubic_clf_nominal(x); },
                1.0,
                1,
                [noise_scale](const Vector& x) { return cubic_delta(x, noise_scale); }};
}

}  // namespace ddscbf
