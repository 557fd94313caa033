#pragma once

#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "ddscbf/barrier.hpp"
#include "ddscbf/io.hpp"
#include "ddscbf/parallel.hpp"
#include "ddscbf/rng.hpp"
#include "ddscbf/sde.hpp"

namespace ddscbf {

enum class SamplingMode { uniform_random, grid };

inline const char* to_string(SamplingMode m) {
  return m == SamplingMode::grid ? "grid" : "uniform";
}

/// Where the N training states are drawn from. Must cover the safe set.
struct SamplingRegion {
  Box box;
  SamplingMode mode = SamplingMode::uniform_random;

  [[nodiscard]] std::vector<Vector> points(int count, RngStream& rng) const {
    box.validate();
    if (count < 1) throw ConfigError("sampling region needs N >= 1");
    const int dim = box.dim();
    std::vector<Vector> out;
    out.reserve(static_cast<std::size_t>(count));
    if (mode == SamplingMode::uniform_random) {
      for (int i = 0; i < count; ++i) {
        Vector x(dim);
        for (int k = 0; k < dim; ++k) x[k] = rng.uniform(box.lo[k], box.hi[k]);
        out.push_back(std::move(x));
      }
      return out;
    }
    const int per_dim = static_cast<int>(std::lround(std::pow(count, 1.0 / dim)));
    if (static_cast<long>(std::pow(per_dim, dim) + 0.5) != count)
      throw ConfigError("grid sampling needs N to be a perfect power of the state dimension");
    std::vector<int> idx(dim, 0);
    for (int i = 0; i < count; ++i) {
      Vector x(dim);
      for (int k = 0; k < dim; ++k)
        x[k] = per_dim == 1 ? 0.5 * (box.lo[k] + box.hi[k])
                            : box.lo[k] + (box.hi[k] - box.lo[k]) * idx[k] / (per_dim - 1);
      out.push_back(std::move(x));
      for (int k = 0; k < dim && ++idx[k] == per_dim; ++k) idx[k] = 0;
    }
    return out;
  }
};

/**
 * How the known drift is removed from the generator estimate to form the
 * regression target.
 *
 * lie_derivative subtracts L_f h(x) as written in the algorithm; it leaves
 * the Euler curvature term dt/2 f^T h_xx f in the target. euler_quotient
 * subtracts [h(x + f dt) - h(x)] / dt, which has the same dt -> 0 limit
 * and cancels that term (exactly, for quadratic h).
 */
enum class DriftSubtraction { euler_quotient, lie_derivative };

inline const char* to_string(DriftSubtraction d) {
  return d == DriftSubtraction::lie_derivative ? "lie" : "euler";
}

struct Sample {
  Vector x;
  double target = 0.0;
};

struct DatasetMeta {
  int N = 0;
  int n = 0;
  double dt = 0.0;
  std::uint64_t seed = 0;
  SamplingRegion region;
  DriftSubtraction drift_subtraction = DriftSubtraction::euler_quotient;
  long long excluded = 0;  // transitions dropped for blowup, over all points
};

struct GeneratorDataset {
  std::vector<Sample> samples;
  DatasetMeta meta;

  [[nodiscard]] int state_dim() const {
    return samples.empty() ? 0 : static_cast<int>(samples.front().x.size());
  }
};

struct GeneratorEstimate {
  double value = 0.0;
  int used = 0;
  int excluded = 0;
};

/// Sample-mean difference quotient ([mean_j h(x_j) - h(x)] / dt) over n one-step transitions under u.
inline GeneratorEstimate estimate_generator_at(const SdeModel& model, const BarrierSpec& barrier,
                                               const Vector& x, const Vector& u, int n, double dt,
                                               RngStream& rng) {
  if (n < 1) throw ConfigError("estimate_generator_at needs n >= 1");
  if (!(dt > 0.0)) throw ConfigError("dt must be positive");
  GeneratorEstimate est;
  double sum = 0.0;
  for (int j = 0; j < n; ++j) {
    const Vector next = detail::em_step_unchecked(model, x, u, dt, rng);
    const double h = next.allFinite() ? barrier.value(next) : NAN;
    if (!std::isfinite(h)) {
      ++est.excluded;
      continue;
    }
    sum += h;
    ++est.used;
  }
  if (est.used == 0) throw NumericalBlowup("every sampled transition blew up");
  est.value = (sum / est.used - barrier.value(x)) / dt;
  return est;
}

/// Drift contribution removed from the estimate, per DriftSubtraction.
inline double drift_term(const SdeModel& model, const BarrierSpec& barrier, const Vector& x,
                         double dt, DriftSubtraction mode) {
  if (mode == DriftSubtraction::lie_derivative) return lie_parts(model, barrier, x).lf;
  const Vector euler = x + model.drift(x) * dt;
  return (barrier.value(euler) - barrier.value(x)) / dt;
}

/**
 * @brief Training set {(x_i, target_i)} for the trace correction.
 *
 * Transitions are sampled with u = 0. Point i draws its transitions from
 * stream (rng.seed(), kDataset | i), so the result does not depend on how
 * points are scheduled.
 */
inline GeneratorDataset build_dataset(const SdeModel& model, const BarrierSpec& barrier,
                                      const SamplingRegion& region, int N, int n, double dt,
                                      RngStream& rng,
                                      DriftSubtraction drift = DriftSubtraction::euler_quotient) {
  if (N < 1 || n < 1) throw ConfigError("build_dataset needs N >= 1 and n >= 1");
  if (region.box.dim() != model.state_dim()) throw ConfigError("region dimension mismatch");
  const std::vector<Vector> xs = region.points(N, rng);
  const Vector u0 = Vector::Zero(model.control_dim());

  GeneratorDataset ds;
  ds.samples.resize(xs.size());
  std::vector<int> excluded(xs.size(), 0);
  parallel_for(xs.size(), [&](std::size_t i) {
    RngStream point_rng(rng.seed(), streams::kDataset | i);
    const GeneratorEstimate est = estimate_generator_at(model, barrier, xs[i], u0, n, dt, point_rng);
    ds.samples[i] = Sample{xs[i], est.value - drift_term(model, barrier, xs[i], dt, drift)};
    excluded[i] = est.excluded;
  });

  ds.meta = DatasetMeta{N, n, dt, rng.seed(), region, drift, 0};
  for (int e : excluded) ds.meta.excluded += e;
  return ds;
}

struct L1Point {
  int n = 0;
  double mean_abs_error = 0.0;
};

/// Empirical E|Ãh(x) - Ah(x)| for each sample count n, averaged over repetitions.
inline std::vector<L1Point> lln_l1_curve(const SdeModel& model, const BarrierSpec& barrier,
                                         const Vector& x, const Vector& u, double dt,
                                         const std::vector<int>& n_values, int repetitions,
                                         std::uint64_t seed) {
  if (repetitions < 1) throw ConfigError("lln_l1_curve needs repetitions >= 1");
  const double exact = generator_true(model, barrier, x, u);
  std::vector<L1Point> curve;
  for (std::size_t k = 0; k < n_values.size(); ++k) {
    std::vector<double> errors(static_cast<std::size_t>(repetitions));
    parallel_for(errors.size(), [&](std::size_t r) {
      RngStream rng(seed, streams::kDiagnostic | (k << 24) | r);
      errors[r] = std::abs(estimate_generator_at(model, barrier, x, u, n_values[k], dt, rng).value - exact);
    });
    double sum = 0.0;
    for (double e : errors) sum += e;
    curve.push_back({n_values[k], sum / repetitions});
  }
  return curve;
}

// ---------------------------------------------------------------------------
// Text format:
//   # ddscbf-dataset v1 N=<N> n=<n> dt=<dt> seed=<seed> excluded=<k> drift=<euler|lie>
//     mode=<uniform|grid> region=<lo:hi>,<lo:hi>,...
//   then N records "x_1 ... x_dim target", 17 significant digits.
// (The header is a single line.)

inline constexpr int kDatasetVersion = 1;

inline void write_dataset(std::ostream& out, const GeneratorDataset& ds) {
  const auto& m = ds.meta;
  out << "# ddscbf-dataset v" << kDatasetVersion << " N=" << m.N << " n=" << m.n
      << " dt=" << io::format_double(m.dt) << " seed=" << m.seed << " excluded=" << m.excluded
      << " drift=" << to_string(m.drift_subtraction) << " mode=" << to_string(m.region.mode)
      << " region=";
  for (int k = 0; k < m.region.box.dim(); ++k) {
    if (k) out << ',';
    out << io::format_double(m.region.box.lo[k]) << ':' << io::format_double(m.region.box.hi[k]);
  }
  out << '\n';
  for (const Sample& s : ds.samples) out << io::join(s.x) << ' ' << io::format_double(s.target) << '\n';
}

inline GeneratorDataset read_dataset(std::istream& in) {
  io::LineReader reader(in);
  const auto header = reader.expect_tokens("dataset header");
  if (header.size() < 2 || header[0] != "#" || header[1].rfind("ddscbf-dataset", 0) != 0)
    throw ParseError("not a ddscbf dataset file", reader.line());
  if (header.size() < 3 || header[2] != "v" + std::to_string(kDatasetVersion))
    throw ParseError("dataset version mismatch: expected v" + std::to_string(kDatasetVersion) +
                         ", found " + (header.size() > 2 ? header[2] : std::string("none")),
                     reader.line());

  GeneratorDataset ds;
  bool have_region = false;
  bool have_n = false;
  for (std::size_t t = 3; t < header.size(); ++t) {
    const auto eq = header[t].find('=');
    if (eq == std::string::npos) throw ParseError("malformed header field '" + header[t] + "'", 1);
    const std::string key = header[t].substr(0, eq);
    const std::string val = header[t].substr(eq + 1);
    if (key == "N") {
      ds.meta.N = static_cast<int>(io::parse_int(val, 1));
      have_n = true;
    } else if (key == "n") {
      ds.meta.n = static_cast<int>(io::parse_int(val, 1));
    } else if (key == "dt") {
      ds.meta.dt = io::parse_double(val, 1);
    } else if (key == "seed") {
      ds.meta.seed = static_cast<std::uint64_t>(io::parse_int(val, 1));
    } else if (key == "excluded") {
      ds.meta.excluded = io::parse_int(val, 1);
    } else if (key == "drift") {
      ds.meta.drift_subtraction =
          val == "lie" ? DriftSubtraction::lie_derivative : DriftSubtraction::euler_quotient;
    } else if (key == "mode") {
      ds.meta.region.mode = val == "grid" ? SamplingMode::grid : SamplingMode::uniform_random;
    } else if (key == "region") {
      std::vector<double> lo, hi;
      std::istringstream parts(val);
      for (std::string iv; std::getline(parts, iv, ',');) {
        const auto colon = iv.find(':');
        if (colon == std::string::npos) throw ParseError("malformed region '" + val + "'", 1);
        lo.push_back(io::parse_double(iv.substr(0, colon), 1));
        hi.push_back(io::parse_double(iv.substr(colon + 1), 1));
      }
      ds.meta.region.box = Box{Eigen::Map<Vector>(lo.data(), static_cast<Eigen::Index>(lo.size())),
                               Eigen::Map<Vector>(hi.data(), static_cast<Eigen::Index>(hi.size()))};
      have_region = true;
    }
  }
  if (!have_region || !have_n) throw ParseError("dataset header lacks N or region", 1);
  const int dim = ds.meta.region.box.dim();

  ds.samples.reserve(static_cast<std::size_t>(ds.meta.N));
  std::string line;
  while (reader.next(line)) {
    const auto tokens = io::split_ws(line);
    if (tokens.empty()) continue;
    if (static_cast<int>(tokens.size()) != dim + 1)
      throw ParseError("expected " + std::to_string(dim + 1) + " columns, found " +
                           std::to_string(tokens.size()),
                       reader.line());
    Sample s;
    s.x.resize(dim);
    for (int k = 0; k < dim; ++k) s.x[k] = io::parse_double(tokens[k], reader.line());
    s.target = io::parse_double(tokens[dim], reader.line());
    if (!s.x.allFinite() || !std::isfinite(s.target))
      throw ParseError("non-finite record", reader.line());
    ds.samples.push_back(std::move(s));
  }
  if (static_cast<int>(ds.samples.size()) != ds.meta.N)
    throw ParseError("header declares N=" + std::to_string(ds.meta.N) + " but file has " +
                         std::to_string(ds.samples.size()) + " records",
                     reader.line());
  return ds;
}

inline void save_dataset(const std::string& path, const GeneratorDataset& ds) {
  auto out = io::open_out(path);
  write_dataset(out, ds);
}

inline GeneratorDataset load_dataset(const std::string& path) {
  auto in = io::open_in(path);
  return read_dataset(in);
}

}  // namespace ddscbf
