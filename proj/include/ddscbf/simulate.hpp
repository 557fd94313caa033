#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <vector>

#include "ddscbf/barrier.hpp"
#include "ddscbf/sde.hpp"

namespace ddscbf {

/// State feedback; std::nullopt means the controller has no admissible input at x.
using Policy = std::function<std::optional<Vector>(const Vector&)>;

enum class TerminationReason { horizon_reached, exited_safe_set, filter_infeasible };

inline const char* to_string(TerminationReason r) {
  switch (r) {
    case TerminationReason::horizon_reached: return "horizon-reached";
    case TerminationReason::exited_safe_set: return "exited-safe-set";
    case TerminationReason::filter_infeasible: return "filter-infeasible";
  }
  return "unknown";
}

/**
 * @brief Sample path of the process stopped at the first grid exit from C°.
 *
 * states.size() == controls.size() + 1 and times[k] == k * dt.
 * exit_step, if set, is the first index k with !(h(states[k]) > 0); a
 * non-finite state counts as an exit and sets blew_up.
 */
struct Trajectory {
  double dt = 0.0;
  std::vector<double> times;
  std::vector<Vector> states;
  std::vector<Vector> controls;
  std::optional<std::size_t> exit_step;
  TerminationReason terminated_reason = TerminationReason::horizon_reached;
  bool blew_up = false;

  [[nodiscard]] bool safe() const {
    return terminated_reason == TerminationReason::horizon_reached;
  }
};

inline Trajectory simulate(const SdeModel& model, const Policy& policy, const Vector& x0, double dt,
                           int horizon_steps, const BarrierSpec& barrier, RngStream& rng) {
  if (!(dt > 0.0)) throw ConfigError("dt must be positive");
  if (horizon_steps < 1) throw ConfigError("horizon_steps must be positive");
  if (!(barrier.value(x0) > 0.0)) throw OutsideSafeSet("simulate needs h(x0) > 0");

  Trajectory traj;
  traj.dt = dt;
  traj.times.reserve(static_cast<std::size_t>(horizon_steps) + 1);
  traj.states.reserve(static_cast<std::size_t>(horizon_steps) + 1);
  traj.controls.reserve(static_cast<std::size_t>(horizon_steps));
  traj.times.push_back(0.0);
  traj.states.push_back(x0);

  for (int k = 0; k < horizon_steps; ++k) {
    const Vector& x = traj.states.back();
    std::optional<Vector> u = policy(x);
    if (!u) {
      traj.terminated_reason = TerminationReason::filter_infeasible;
      return traj;
    }
    Vector next = detail::em_step_unchecked(model, x, *u, dt, rng);
    traj.controls.push_back(std::move(*u));
    traj.times.push_back(static_cast<double>(k + 1) * dt);
    const bool finite = next.allFinite();
    traj.states.push_back(std::move(next));
    if (!finite || !(barrier.value(traj.states.back()) > 0.0)) {
      traj.blew_up = !finite;
      traj.exit_step = traj.states.size() - 1;
      traj.terminated_reason = TerminationReason::exited_safe_set;
      return traj;
    }
  }
  return traj;
}

}  // namespace ddscbf
