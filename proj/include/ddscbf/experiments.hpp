#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "ddscbf/estimator.hpp"
#include "ddscbf/io.hpp"
#include "ddscbf/mlp.hpp"
#include "ddscbf/parallel.hpp"
#include "ddscbf/presets.hpp"
#include "ddscbf/safety_filter.hpp"
#include "ddscbf/simulate.hpp"

namespace ddscbf {

enum class Variant { scbf, ddscbf, cbf };

inline const char* to_string(Variant v) {
  switch (v) {
    case Variant::scbf: return "SCBF";
    case Variant::ddscbf: return "DDSCBF";
    case Variant::cbf: return "CBF";
  }
  return "unknown";
}

inline Variant parse_variant(const std::string& name) {
  if (name == "scbf" || name == "SCBF") return Variant::scbf;
  if (name == "ddscbf" || name == "DDSCBF") return Variant::ddscbf;
  if (name == "cbf" || name == "CBF") return Variant::cbf;
  throw ConfigError("unknown variant '" + name + "' (expected scbf, ddscbf or cbf)");
}

inline GeneratorSource source_for(Variant v) {
  switch (v) {
    case Variant::scbf: return GeneratorSource::true_generator;
    case Variant::ddscbf: return GeneratorSource::learned;
    case Variant::cbf: return GeneratorSource::deterministic_lie;
  }
  return GeneratorSource::deterministic_lie;
}

/**
 * @brief One evaluation setting.
 *
 * noise_scale selects the diffusion: the pendulum runs only with 0.1 and the
 * cubic system with 0.1 or 0.15. 0 is accepted for both as the deterministic
 * reference. decay_rate defaults to the preset's value when unset.
 */
struct ExperimentConfig {
  Example example = Example::pendulum;
  double noise_scale = 0.1;
  int N = 200;
  int n = 50000;
  double dt = 0.01;
  int epochs = 500;
  double learning_rate = 1e-3;
  int trials = 1000;
  double margin = 0.01;
  std::optional<double> decay_rate;
  int horizon_steps = 1000;
  std::uint64_t seed = 0;

  void validate() const {
    if (N < 1) throw ConfigError("N must be positive");
    if (n < 1) throw ConfigError("n must be positive");
    if (!(dt > 0.0)) throw ConfigError("dt must be positive");
    if (epochs < 1) throw ConfigError("epochs must be positive");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (trials < 1) throw ConfigError("trials must be positive");
    if (!(margin >= 0.0)) throw ConfigError("margin must be >= 0");
    if (decay_rate && !(*decay_rate >= 0.0)) throw ConfigError("decay_rate must be >= 0");
    if (horizon_steps < 1) throw ConfigError("horizon_steps must be positive");
    const bool ok = noise_scale == 0.0 ||
                    (example == Example::pendulum ? noise_scale == 0.1
                                                  : noise_scale == 0.1 || noise_scale == 0.15);
    if (!ok)
      throw ConfigError("noise " + io::format_double(noise_scale) + " is not available for " +
                        to_string(example));
  }

  [[nodiscard]] Preset preset() const { return make_preset(example, noise_scale); }

  [[nodiscard]] SafetyFilterConfig filter(Variant v, const Preset& p) const {
    SafetyFilterConfig f;
    f.margin = margin;
    f.decay_rate = decay_rate.value_or(p.decay_rate);
    f.generator_source = source_for(v);
    return f;
  }

  [[nodiscard]] TrainConfig training() const {
    TrainConfig t;
    t.epochs = epochs;
    t.learning_rate = learning_rate;
    t.seed = seed;
    return t;
  }
};

struct SafetyReport {
  Example example = Example::pendulum;
  double noise_scale = 0.0;
  Variant variant = Variant::scbf;
  int trials = 0;
  int safe_count = 0;
  int unsafe_count = 0;
  int infeasible_count = 0;
  int blowup_count = 0;  // subset of unsafe_count
  double safe_rate = 0.0;
  double theoretical_bound = 0.0;
  double mean_exit_time = std::numeric_limits<double>::quiet_NaN();
};

struct TrainedModel {
  GeneratorDataset dataset;
  TrainResult result;
};

inline TrainedModel train_pipeline(const ExperimentConfig& cfg) {
  cfg.validate();
  const Preset p = cfg.preset();
  RngStream rng(cfg.seed, streams::kDataset);
  TrainedModel out;
  out.dataset = build_dataset(p.model, p.barrier, p.region, cfg.N, cfg.n, cfg.dt, rng);
  out.result = train(out.dataset, cfg.training());
  return out;
}

inline Policy variant_policy(const ExperimentConfig& cfg, const Preset& p, Variant v,
                             const std::optional<MlpParams>& params) {
  // Only SCBF may read the diffusion; the others see a hidden copy of the model.
  const SdeModel policy_model = v == Variant::scbf ? p.model : p.model.hidden();
  return make_policy(cfg.filter(v, p), policy_model, p.barrier,
                     v == Variant::ddscbf ? params : std::nullopt, p.nominal);
}

/// Trial `index` of a variant: the rollout run_variant records at that index.
inline Trajectory simulate_trial(const ExperimentConfig& cfg, Variant v, const MlpParams* params,
                                 std::uint64_t index) {
  cfg.validate();
  const Preset p = cfg.preset();
  std::optional<MlpParams> opt;
  if (params) opt = *params;
  const Policy policy = variant_policy(cfg, p, v, opt);
  RngStream rng(cfg.seed, streams::trial(static_cast<std::uint64_t>(v), index));
  return simulate(p.model, policy, p.x0, cfg.dt, cfg.horizon_steps, p.barrier, rng);
}

/// Monte Carlo safe rate of one variant on the true noisy dynamics. DDSCBF
/// trains in-pipeline when params is empty.
inline SafetyReport run_variant(const ExperimentConfig& cfg, Variant v,
                                std::optional<MlpParams> params = std::nullopt) {
  cfg.validate();
  const Preset p = cfg.preset();
  if (v == Variant::ddscbf && !params) params = train_pipeline(cfg).result.params;
  const Policy policy = variant_policy(cfg, p, v, params);

  struct Outcome {
    TerminationReason reason = TerminationReason::horizon_reached;
    bool blew_up = false;
    double exit_time = 0.0;
  };
  std::vector<Outcome> outcomes(static_cast<std::size_t>(cfg.trials));
  parallel_for(outcomes.size(), [&](std::size_t i) {
    RngStream rng(cfg.seed, streams::trial(static_cast<std::uint64_t>(v), i));
    const Trajectory t = simulate(p.model, policy, p.x0, cfg.dt, cfg.horizon_steps, p.barrier, rng);
    outcomes[i].reason = t.terminated_reason;
    outcomes[i].blew_up = t.blew_up;
    if (t.exit_step) outcomes[i].exit_time = t.times[*t.exit_step];
  });

  SafetyReport r;
  r.example = cfg.example;
  r.noise_scale = cfg.noise_scale;
  r.variant = v;
  r.trials = cfg.trials;
  r.theoretical_bound = worst_case_bound(p.barrier, p.x0);
  double exit_sum = 0.0;
  for (const Outcome& o : outcomes) {
    switch (o.reason) {
      case TerminationReason::horizon_reached: ++r.safe_count; break;
      case TerminationReason::filter_infeasible: ++r.infeasible_count; break;
      case TerminationReason::exited_safe_set:
        ++r.unsafe_count;
        r.blowup_count += o.blew_up ? 1 : 0;
        exit_sum += o.exit_time;
        break;
    }
  }
  r.safe_rate = static_cast<double>(r.safe_count) / r.trials;
  if (r.unsafe_count > 0) r.mean_exit_time = exit_sum / r.unsafe_count;
  return r;
}

/// Three variants per noise level; DDSCBF is trained once per level.
inline std::vector<SafetyReport> reproduce_table(const ExperimentConfig& base,
                                                 const std::vector<double>& noise_levels) {
  std::vector<SafetyReport> reports;
  for (double noise : noise_levels) {
    ExperimentConfig cfg = base;
    cfg.noise_scale = noise;
    cfg.validate();
    const MlpParams params = train_pipeline(cfg).result.params;
    for (Variant v : {Variant::scbf, Variant::ddscbf, Variant::cbf})
      reports.push_back(run_variant(cfg, v, params));
  }
  return reports;
}

inline std::vector<double> default_noise_levels(Example e) {
  if (e == Example::pendulum) return {0.1};
  return {0.1, 0.15};
}

inline void write_table_text(std::ostream& out, const std::vector<SafetyReport>& reports) {
  out << std::left << std::setw(10) << "example" << std::setw(8) << "noise" << std::setw(9) << "variant"
      << std::right << std::setw(8) << "trials" << std::setw(7) << "safe" << std::setw(9) << "rate%"
      << std::setw(8) << "unsafe" << std::setw(8) << "infeas" << std::setw(8) << "bound" << std::setw(11)
      << "mean_exit" << '\n';
  for (const SafetyReport& r : reports) {
    std::ostringstream rate, bound, exit;
    rate << std::fixed << std::setprecision(1) << 100.0 * r.safe_rate;
    bound << std::fixed << std::setprecision(4) << r.theoretical_bound;
    if (std::isnan(r.mean_exit_time))
      exit << "-";
    else
      exit << std::fixed << std::setprecision(3) << r.mean_exit_time;
    out << std::left << std::setw(10) << to_string(r.example) << std::setw(8) << r.noise_scale << std::setw(9)
        << to_string(r.variant) << std::right << std::setw(8) << r.trials << std::setw(7) << r.safe_count
        << std::setw(9) << rate.str() << std::setw(8) << r.unsafe_count << std::setw(8) << r.infeasible_count
        << std::setw(8) << bound.str() << std::setw(11) << exit.str() << '\n';
  }
}

inline void write_table_csv(std::ostream& out, const std::vector<SafetyReport>& reports) {
  out << "example,noise,variant,trials,safe_count,unsafe_count,infeasible_count,blowup_count,safe_rate,"
         "theoretical_bound,mean_exit_time\n";
  for (const SafetyReport& r : reports) {
    out << to_string(r.example) << ',' << io::format_double(r.noise_scale) << ',' << to_string(r.variant) << ','
        << r.trials << ',' << r.safe_count << ',' << r.unsafe_count << ',' << r.infeasible_count << ','
        << r.blowup_count << ',' << io::format_double(r.safe_rate) << ','
        << io::format_double(r.theoretical_bound) << ',';
    if (!std::isnan(r.mean_exit_time)) out << io::format_double(r.mean_exit_time);
    out << '\n';
  }
}

struct FitError {
  double max_abs = 0.0;
  Vector argmax;
};

/// max |N(x) - Δ(x)| over a per_axis^dim grid on the preset's sampling box.
inline FitError fit_grid_error(const Preset& p, const MlpParams& params, int per_axis = 41) {
  if (per_axis < 2) throw ConfigError("per_axis must be >= 2");
  const Box& box = p.region.box;
  const int dim = static_cast<int>(box.dim());
  FitError fe;
  std::vector<int> idx(static_cast<std::size_t>(dim), 0);
  Vector x(dim);
  for (;;) {
    for (int k = 0; k < dim; ++k)
      x[k] = box.lo[k] + (box.hi[k] - box.lo[k]) * idx[static_cast<std::size_t>(k)] / (per_axis - 1);
    const double e = std::abs(mlp_forward(params, x) - p.analytic_delta(x));
    if (fe.argmax.size() == 0 || e > fe.max_abs) {
      fe.max_abs = e;
      fe.argmax = x;
    }
    int k = 0;
    while (k < dim && ++idx[static_cast<std::size_t>(k)] == per_axis) idx[static_cast<std::size_t>(k++)] = 0;
    if (k == dim) break;
  }
  return fe;
}

/// One row per dataset sample, sorted by the plotted coordinate.
inline void emit_fit_figure_data(std::ostream& out, const Preset& p, const MlpParams& params,
                                 const GeneratorDataset& dataset) {
  std::vector<const Sample*> rows;
  for (const Sample& s : dataset.samples) rows.push_back(&s);
  const int c = p.plot_coordinate;
  std::stable_sort(rows.begin(), rows.end(), [c](const Sample* a, const Sample* b) { return a->x[c] < b->x[c]; });
  out << "coordinate,target,analytic_delta,network\n";
  for (const Sample* s : rows) {
    out << io::format_double(s->x[c]) << ',' << io::format_double(s->target) << ','
        << io::format_double(p.analytic_delta(s->x)) << ',' << io::format_double(mlp_forward(params, s->x))
        << '\n';
  }
}

inline void write_trajectory_csv(std::ostream& out, const Trajectory& t, const BarrierSpec& barrier) {
  out << "t,x1,x2,u,h\n";
  for (std::size_t k = 0; k < t.states.size(); ++k) {
    const Vector& x = t.states[k];
    out << io::format_double(t.times[k]) << ',' << io::format_double(x[0]) << ',' << io::format_double(x[1]) << ',';
    if (k < t.controls.size()) out << io::format_double(t.controls[k][0]);
    out << ',' << io::format_double(x.allFinite() ? barrier.value(x) : NAN) << '\n';
  }
}

inline void emit_trajectory_figure_data(std::ostream& out, const ExperimentConfig& cfg, Variant v,
                                        std::uint64_t index, const MlpParams* params = nullptr) {
  const Trajectory t = simulate_trial(cfg, v, params, index);
  write_trajectory_csv(out, t, cfg.preset().barrier);
}

/// Expected error of the difference quotient, E[Ãh] - Ah = dt/2 F^T h_xx F
/// with F = f + g u. Exact when h has a constant Hessian.
inline double euler_bias(const SdeModel& model, const BarrierSpec& barrier, const Vector& x, const Vector& u,
                         double dt) {
  const Vector F = model.drift(x) + model.control_matrix(x) * u;
  return 0.5 * dt * F.dot(barrier.hessian(x) * F);
}

struct DiagnosticPlan {
  Vector state;  // empty: the preset's x0
  Vector control;  // empty: zero input
  std::vector<int> n_values{100, 1000, 10000};
  std::vector<double> dt_values{1e-2, 5e-3, 1e-3};
  int dt_sweep_n = 100000;
  int repetitions = 20;
};

struct DiagnosticRow {
  std::string sweep;  // "n" or "dt"
  double dt = 0.0;
  int n = 0;
  double mean_abs_error = 0.0;
  double euler_bias = 0.0;
};

inline std::vector<DiagnosticRow> run_diagnostics(const ExperimentConfig& cfg, const DiagnosticPlan& plan) {
  cfg.validate();
  const Preset p = cfg.preset();
  const Vector x = plan.state.size() ? plan.state : p.x0;
  const Vector u = plan.control.size() ? plan.control : Vector::Zero(p.model.control_dim());
  std::vector<DiagnosticRow> rows;
  for (const L1Point& pt : lln_l1_curve(p.model, p.barrier, x, u, cfg.dt, plan.n_values, plan.repetitions, cfg.seed))
    rows.push_back({"n", cfg.dt, pt.n, pt.mean_abs_error, euler_bias(p.model, p.barrier, x, u, cfg.dt)});
  for (std::size_t k = 0; k < plan.dt_values.size(); ++k) {
    const double dt = plan.dt_values[k];
    const auto curve = lln_l1_curve(p.model, p.barrier, x, u, dt, {plan.dt_sweep_n}, plan.repetitions,
                                    cfg.seed + 1 + k);
    rows.push_back({"dt", dt, plan.dt_sweep_n, curve.front().mean_abs_error,
                    euler_bias(p.model, p.barrier, x, u, dt)});
  }
  return rows;
}

inline void write_diagnostics_csv(std::ostream& out, const std::vector<DiagnosticRow>& rows) {
  out << "sweep,dt,n,mean_abs_error,euler_bias\n";
  for (const DiagnosticRow& r : rows) {
    out << r.sweep << ',' << io::format_double(r.dt) << ',' << r.n << ',' << io::format_double(r.mean_abs_error)
        << ',' << io::format_double(r.euler_bias) << '\n';
  }
}

}  // namespace ddscbf
