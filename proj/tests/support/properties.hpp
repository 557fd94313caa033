#pragma once

// Property checks shared by the GoogleTest suites and the acceptance runner.
// Each returns the worst violation it found so callers can apply their own
// tolerance and print it.

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "ddscbf/ddscbf.hpp"

namespace ddscbf::checks {

inline Vector random_in(const Box& box, RngStream& rng) {
  Vector x(box.dim());
  for (int k = 0; k < box.dim(); ++k) x[k] = rng.uniform(box.lo[k], box.hi[k]);
  return x;
}

inline double relative_error(double got, double want, double floor) {
  return std::abs(got - want) / std::max({std::abs(got), std::abs(want), floor});
}

// Backprop vs central differences (step 1e-6) on every weight and bias.
// floor keeps coordinates with near-zero gradient from dividing round-off by ~0.
inline double backprop_fd_max_rel(std::uint64_t seed, const std::vector<int>& sizes, int batch,
                                  double floor = 1e-6) {
  RngStream rng(seed, 0);
  MlpParams p = init_params(sizes, seed);
  for (Eigen::Index k = 0; k < p.input_mean.size(); ++k) {
    p.input_mean[k] = rng.uniform(-0.5, 0.5);
    p.input_scale[k] = rng.uniform(0.5, 2.0);
  }
  std::vector<Sample> samples;
  for (int j = 0; j < batch; ++j) {
    Vector x(sizes.front());
    for (Eigen::Index k = 0; k < x.size(); ++k) x[k] = rng.uniform(-1.5, 1.5);
    samples.push_back({x, rng.uniform(-1.0, 1.0)});
  }
  const LossAndGrad lg = loss_and_grad(p, samples);
  constexpr double h = 1e-6;
  double worst = 0.0;
  auto probe = [&](double& param, double analytic) {
    const double saved = param;
    param = saved + h;
    const double up = loss_and_grad(p, samples).mse;
    param = saved - h;
    const double down = loss_and_grad(p, samples).mse;
    param = saved;
    worst = std::max(worst, relative_error(analytic, (up - down) / (2.0 * h), floor));
  };
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    for (Eigen::Index i = 0; i < p.layers[l].weight.size(); ++i)
      probe(p.layers[l].weight.data()[i], lg.grads[l].weight.data()[i]);
    for (Eigen::Index i = 0; i < p.layers[l].bias.size(); ++i) probe(p.layers[l].bias[i], lg.grads[l].bias[i]);
  }
  return worst;
}

// |A h - (lf + lg u + Delta)| over random (x, u) for both presets.
inline double decomposition_max_abs(std::uint64_t seed, int count) {
  RngStream rng(seed, 1);
  double worst = 0.0;
  for (Example e : {Example::pendulum, Example::cubic2d}) {
    const Preset p = make_preset(e, 0.1);
    for (int i = 0; i < count; ++i) {
      const Vector x = random_in(p.region.box, rng);
      Vector u(1);
      u[0] = rng.uniform(-5.0, 5.0);
      const LieParts parts = lie_parts(p.model, p.barrier, x);
      const double split = parts.lf + parts.lg.dot(u) + trace_correction_true(p.model, p.barrier, x);
      worst = std::max(worst, std::abs(generator_true(p.model, p.barrier, x, u) - split));
    }
  }
  return worst;
}

struct FilterInstance {
  AffineGenerator gen;
  Vector u_nom;
  SafetyFilterConfig cfg;
};

inline FilterInstance random_filter_instance(RngStream& rng, int dim, bool bounded) {
  FilterInstance in;
  in.gen.offset = rng.uniform(-2.0, 1.0);
  in.gen.slope = RowVector(dim);
  in.u_nom = Vector(dim);
  for (int k = 0; k < dim; ++k) {
    in.gen.slope[k] = rng.uniform(-2.0, 2.0);
    in.u_nom[k] = rng.uniform(-1.5, 1.5);
  }
  in.cfg.margin = rng.uniform(0.0, 0.5);
  if (bounded) {
    Vector lo(dim), hi(dim);
    for (int k = 0; k < dim; ++k) {
      lo[k] = rng.uniform(-1.0, -0.2);
      hi[k] = rng.uniform(0.2, 1.0);
    }
    in.cfg.control_bounds = Box{lo, hi};
  }
  return in;
}

// 1-D: |u_filter - u_grid| where u_grid minimizes |u - u_nom| over a step-1e-4 grid of the bounds.
// 2-D: |u_filter - u_nom| minus the best feasible grid distance (step 1e-2); positive means a grid
// point beat the filter.
inline double filter_minimality_worst(std::uint64_t seed, int instances) {
  RngStream rng(seed, 2);
  double worst = 0.0;
  for (int dim : {1, 2}) {
    const double step = dim == 1 ? 1e-4 : 1e-2;
    int tried = 0;
    while (tried < instances) {
      const FilterInstance in = random_filter_instance(rng, dim, true);
      const FilterOutcome out = filter_control(in.gen, in.u_nom, in.cfg);
      if (!out.feasible) continue;
      ++tried;
      const Box& b = *in.cfg.control_bounds;
      double best = std::numeric_limits<double>::infinity();
      Vector best_u;
      const int n0 = static_cast<int>((b.hi[0] - b.lo[0]) / step) + 1;
      const int n1 = dim == 2 ? static_cast<int>((b.hi[1] - b.lo[1]) / step) + 1 : 1;
      Vector u(dim);
      for (int i = 0; i < n0; ++i) {
        u[0] = b.lo[0] + i * step;
        for (int j = 0; j < n1; ++j) {
          if (dim == 2) u[1] = b.lo[1] + j * step;
          if (in.gen.offset + in.gen.slope.dot(u) < in.cfg.margin) continue;
          const double d = (u - in.u_nom).norm();
          if (d < best) {
            best = d;
            best_u = u;
          }
        }
      }
      if (!std::isfinite(best)) continue;  // feasible region thinner than the grid
      const double dev = dim == 1 ? std::abs(out.u[0] - best_u[0]) : (out.u - in.u_nom).norm() - best;
      worst = std::max(worst, dev);
    }
  }
  return worst;
}

// Re-filtering an output. An output that satisfies the constraint exactly must come back
// unchanged (any change counts as infinite); one that sits below it by round-off may move,
// and the largest such move is returned.
inline double filter_idempotence_worst(std::uint64_t seed, int instances) {
  RngStream rng(seed, 3);
  double worst = 0.0;
  for (int i = 0; i < instances; ++i) {
    const FilterInstance in = random_filter_instance(rng, 1 + i % 3, i % 2 == 0);
    const FilterOutcome first = filter_control(in.gen, in.u_nom, in.cfg);
    if (!first.feasible) continue;
    const FilterOutcome second = filter_control(in.gen, first.u, in.cfg);
    const double moved = (second.u - first.u).cwiseAbs().maxCoeff();
    const bool exact = in.gen.offset + in.gen.slope.dot(first.u) >= in.cfg.margin;
    if (exact && moved != 0.0) return std::numeric_limits<double>::infinity();
    worst = std::max(worst, moved);
  }
  return worst;
}

// Largest decrease of |u - u_nom| when the margin grows (should be <= 0 up to round-off).
inline double margin_monotonicity_worst(std::uint64_t seed, int instances) {
  RngStream rng(seed, 4);
  double worst = 0.0;
  for (int i = 0; i < instances; ++i) {
    FilterInstance in = random_filter_instance(rng, 1 + i % 3, i % 2 == 0);
    double prev = 0.0;
    for (double m = 0.0; m <= 1.0; m += 0.05) {
      in.cfg.margin = m;
      const FilterOutcome out = filter_control(in.gen, in.u_nom, in.cfg);
      if (!out.feasible) break;
      const double d = (out.u - in.u_nom).norm();
      worst = std::max(worst, prev - d);
      prev = d;
    }
  }
  return worst;
}

inline SdeModel without_noise(const SdeModel& m) {
  return SdeModel(
      m.state_dim(), m.control_dim(), m.noise_dim(), [m](const Vector& x) { return m.drift(x); },
      [m](const Vector& x) { return m.control_matrix(x); },
      [n = m.state_dim(), d = m.noise_dim()](const Vector&) -> Matrix { return Matrix::Zero(n, d); });
}

// b = 0: the largest |target| in a pendulum dataset built with Euler-quotient subtraction.
inline double zero_noise_target_max(std::uint64_t seed) {
  const Preset p = make_preset(Example::pendulum, 0.1);
  RngStream rng(seed, streams::kDataset);
  const GeneratorDataset ds = build_dataset(without_noise(p.model), p.barrier, p.region, 50, 20, 0.01, rng);
  double worst = 0.0;
  for (const Sample& s : ds.samples) worst = std::max(worst, std::abs(s.target));
  return worst;
}

// Zero network: |learned generator - (lf + lg u)| over random (x, u).
inline double zero_net_lie_gap(std::uint64_t seed, int count) {
  RngStream rng(seed, 5);
  const MlpParams zero = MlpParams::zeros({2, 100, 30, 1});
  double worst = 0.0;
  for (Example e : {Example::pendulum, Example::cubic2d}) {
    const Preset p = make_preset(e, 0.1);
    for (int i = 0; i < count; ++i) {
      const Vector x = random_in(p.region.box, rng);
      Vector u(1);
      u[0] = rng.uniform(-5.0, 5.0);
      const LieParts parts = lie_parts(p.model, p.barrier, x);
      worst = std::max(worst, std::abs(learned_generator(zero, p.model, p.barrier, x, u) -
                                       (parts.lf + parts.lg.dot(u))));
    }
  }
  return worst;
}

// Runs a reduced pipeline (dataset, training, all three variants) and returns the
// dataset file and the report CSV as one string.
inline std::string pipeline_fingerprint(Example e, std::uint64_t seed) {
  ExperimentConfig cfg;
  cfg.example = e;
  cfg.N = 16;
  cfg.n = 500;
  cfg.epochs = 20;
  cfg.trials = 24;
  cfg.horizon_steps = 300;
  cfg.seed = seed;
  const TrainedModel tm = train_pipeline(cfg);
  std::ostringstream out;
  write_dataset(out, tm.dataset);
  write_params(out, tm.result.params);
  std::vector<SafetyReport> reports;
  for (Variant v : {Variant::scbf, Variant::ddscbf, Variant::cbf})
    reports.push_back(run_variant(cfg, v, tm.result.params));
  write_table_csv(out, reports);
  return out.str();
}

}  // namespace ddscbf::checks
