#pragma once

#include <cmath>
#include <cstdint>
#include <istream>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "ddscbf/barrier.hpp"
#include "ddscbf/estimator.hpp"
#include "ddscbf/io.hpp"
#include "ddscbf/rng.hpp"

namespace ddscbf {

enum class Activation { tanh };

struct DenseLayer {
  Matrix weight;  // out x in
  Vector bias;    // out
};

/**
 * @brief Fully connected regressor for the trace correction Delta(x).
 *
 * Hidden layers use the activation, the output layer is linear, and inputs
 * are mapped through (x - input_mean) / input_scale before the first layer.
 */
struct MlpParams {
  std::vector<int> layer_sizes;
  std::vector<DenseLayer> layers;
  Activation activation = Activation::tanh;
  Vector input_mean;
  Vector input_scale;

  [[nodiscard]] int input_dim() const { return layer_sizes.empty() ? 0 : layer_sizes.front(); }

  void validate() const {
    if (layer_sizes.size() < 2) throw ConfigError("MLP needs at least an input and an output layer");
    if (layer_sizes.back() != 1) throw ConfigError("MLP output must be scalar");
    if (layers.size() + 1 != layer_sizes.size()) throw ConfigError("layer count mismatch");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      if (layers[l].weight.rows() != layer_sizes[l + 1] || layers[l].weight.cols() != layer_sizes[l] ||
          layers[l].bias.size() != layer_sizes[l + 1])
        throw ConfigError("layer " + std::to_string(l) + " has the wrong shape");
      if (!layers[l].weight.allFinite() || !layers[l].bias.allFinite())
        throw ConfigError("layer " + std::to_string(l) + " has non-finite entries");
    }
    if (input_mean.size() != input_dim() || input_scale.size() != input_dim())
      throw ConfigError("input normalizer has the wrong dimension");
    if (!(input_scale.array() > 0.0).all()) throw ConfigError("input scale must be positive");
  }

  /// All-zero network with identity normalization.
  static MlpParams zeros(std::vector<int> sizes) {
    MlpParams p;
    p.layer_sizes = std::move(sizes);
    for (std::size_t l = 0; l + 1 < p.layer_sizes.size(); ++l)
      p.layers.push_back({Matrix::Zero(p.layer_sizes[l + 1], p.layer_sizes[l]),
                          Vector::Zero(p.layer_sizes[l + 1])});
    p.input_mean = Vector::Zero(p.input_dim());
    p.input_scale = Vector::Ones(p.input_dim());
    return p;
  }

  [[nodiscard]] std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return n;
  }
};

/// Symmetric uniform init in +-1/sqrt(fan_in), drawn from a seeded stream.
inline MlpParams init_params(std::vector<int> sizes, std::uint64_t seed) {
  MlpParams p = MlpParams::zeros(std::move(sizes));
  RngStream rng(seed, streams::kTraining);
  for (auto& layer : p.layers) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer.weight.cols()));
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] = rng.uniform(-bound, bound);
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias[i] = rng.uniform(-bound, bound);
  }
  return p;
}

namespace detail {

inline Matrix normalize_inputs(const MlpParams& p, const Matrix& X) {
  return (X.colwise() - p.input_mean).array().colwise() / p.input_scale.array();
}

/// Forward pass over a batch (columns); activations[l] is the input to layer l.
inline RowVector forward_batch(const MlpParams& p, const Matrix& X, std::vector<Matrix>* activations) {
  Matrix a = normalize_inputs(p, X);
  if (activations) activations->clear();
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    if (activations) activations->push_back(a);
    Matrix z = p.layers[l].weight * a;
    z.colwise() += p.layers[l].bias;
    a = (l + 1 < p.layers.size()) ? Matrix(z.array().tanh()) : z;
  }
  return a.row(0);
}

}  // namespace detail

inline double mlp_forward(const MlpParams& params, const Vector& x) {
  if (x.size() != params.input_dim()) throw ConfigError("MLP input has the wrong dimension");
  if (params.layers.size() + 1 != params.layer_sizes.size()) throw ConfigError("MLP shape mismatch");
  return detail::forward_batch(params, x, nullptr)[0];
}

struct LossAndGrad {
  double mse = 0.0;
  std::vector<DenseLayer> grads;  // same shapes as MlpParams::layers
};

/// Mean squared error over the batch and its exact gradient by backpropagation.
inline LossAndGrad loss_and_grad(const MlpParams& params, std::span<const Sample> batch) {
  if (batch.empty()) throw ConfigError("loss_and_grad needs a nonempty batch");
  const auto B = static_cast<Eigen::Index>(batch.size());
  Matrix X(params.input_dim(), B);
  RowVector y(B);
  for (Eigen::Index j = 0; j < B; ++j) {
    X.col(j) = batch[static_cast<std::size_t>(j)].x;
    y[j] = batch[static_cast<std::size_t>(j)].target;
  }

  std::vector<Matrix> acts;
  const RowVector out = detail::forward_batch(params, X, &acts);
  const RowVector resid = out - y;

  LossAndGrad r;
  r.mse = resid.squaredNorm() / static_cast<double>(B);
  r.grads.resize(params.layers.size());
  Matrix delta = (2.0 / static_cast<double>(B)) * resid;  // dL/dz for the output layer
  for (std::size_t l = params.layers.size(); l-- > 0;) {
    r.grads[l].weight = delta * acts[l].transpose();
    r.grads[l].bias = delta.rowwise().sum();
    if (l > 0) {
      // acts[l] = tanh(z_{l-1}), so tanh' = 1 - acts[l]^2
      delta = (params.layers[l].weight.transpose() * delta).array() * (1.0 - acts[l].array().square());
    }
  }
  return r;
}

enum class Optimizer { adam, sgd };

struct TrainConfig {
  int epochs = 500;
  int batch_size = 0;  // 0: full batch
  double learning_rate = 1e-3;
  Optimizer optimizer = Optimizer::adam;
  std::uint64_t seed = 0;
  std::vector<int> hidden = {100, 30};

  void validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (batch_size < 0) throw ConfigError("batch_size must be >= 0");
  }
};

struct TrainResult {
  MlpParams params;
  double initial_mse = 0.0;
  std::vector<double> loss_history;  // full-dataset mse after each epoch
};

inline double dataset_mse(const MlpParams& params, std::span<const Sample> samples) {
  double sum = 0.0;
  for (const Sample& s : samples) {
    const double e = mlp_forward(params, s.x) - s.target;
    sum += e * e;
  }
  return sum / static_cast<double>(samples.size());
}

/// Inputs are normalized with dataset statistics and the output bias starts at the target mean.
inline TrainResult train(const GeneratorDataset& dataset, const TrainConfig& config) {
  config.validate();
  if (dataset.samples.empty()) throw ConfigError("cannot train on an empty dataset");
  const int dim = dataset.state_dim();
  const auto N = dataset.samples.size();

  std::vector<int> sizes{dim};
  sizes.insert(sizes.end(), config.hidden.begin(), config.hidden.end());
  sizes.push_back(1);
  MlpParams params = init_params(sizes, config.seed);

  Vector mean = Vector::Zero(dim);
  for (const Sample& s : dataset.samples) mean += s.x;
  mean /= static_cast<double>(N);
  Vector var = Vector::Zero(dim);
  for (const Sample& s : dataset.samples) var += (s.x - mean).cwiseAbs2();
  Vector scale = (var / static_cast<double>(N)).cwiseSqrt();
  for (Eigen::Index k = 0; k < dim; ++k)
    if (!(scale[k] > 1e-12)) scale[k] = 1.0;
  params.input_mean = mean;
  params.input_scale = scale;
  double target_mean = 0.0;
  for (const Sample& s : dataset.samples) target_mean += s.target;
  params.layers.back().bias[0] = target_mean / static_cast<double>(N);

  TrainResult result;
  result.initial_mse = dataset_mse(params, dataset.samples);

  std::vector<DenseLayer> m1, m2;
  for (const auto& l : params.layers) {
    m1.push_back({Matrix::Zero(l.weight.rows(), l.weight.cols()), Vector::Zero(l.bias.size())});
    m2.push_back(m1.back());
  }
  constexpr double beta1 = 0.9;
  constexpr double beta2 = 0.999;
  constexpr double eps = 1e-8;
  long step = 0;

  std::vector<Sample> shuffled(dataset.samples);
  const std::size_t batch = config.batch_size == 0 ? N : static_cast<std::size_t>(config.batch_size);
  RngStream shuffle_rng(config.seed, streams::kTraining | 1);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    if (batch < N) {
      for (std::size_t i = N - 1; i > 0; --i)
        std::swap(shuffled[i], shuffled[shuffle_rng.next_u64() % (i + 1)]);
    }
    for (std::size_t start = 0; start < N; start += batch) {
      const std::span<const Sample> mb(shuffled.data() + start, std::min(batch, N - start));
      const LossAndGrad lg = loss_and_grad(params, mb);
      ++step;
      for (std::size_t l = 0; l < params.layers.size(); ++l) {
        if (config.optimizer == Optimizer::sgd) {
          params.layers[l].weight -= config.learning_rate * lg.grads[l].weight;
          params.layers[l].bias -= config.learning_rate * lg.grads[l].bias;
          continue;
        }
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
        auto adam = [&](auto& param, auto& mom, auto& sq, const auto& g) {
          mom = beta1 * mom + (1.0 - beta1) * g;
          sq = beta2 * sq + (1.0 - beta2) * g.cwiseAbs2();
          param.array() -= config.learning_rate * (mom.array() / c1) / ((sq.array() / c2).sqrt() + eps);
        };
        adam(params.layers[l].weight, m1[l].weight, m2[l].weight, lg.grads[l].weight);
        adam(params.layers[l].bias, m1[l].bias, m2[l].bias, lg.grads[l].bias);
      }
    }
    const double mse = dataset_mse(params, dataset.samples);
    if (!std::isfinite(mse)) throw TrainingDiverged(epoch);
    result.loss_history.push_back(mse);
  }
  result.params = std::move(params);
  return result;
}

/// Learned generator L_f h + L_g h u + N(x). Reads only drift and control matrix.
inline double learned_generator(const MlpParams& params, const SdeModel& model,
                                const BarrierSpec& barrier, const Vector& x, const Vector& u) {
  const LieParts parts = lie_parts(model, barrier, x);
  return parts.lf + parts.lg.dot(u) + mlp_forward(params, x);
}

// ---------------------------------------------------------------------------
// Weight file:
//   ddscbf-mlp v1
//   activation tanh
//   layers <L+1> <size_0> ... <size_L>
//   input_mean <v...>
//   input_scale <v...>
//   then for each layer l: "weight <l> <rows> <cols>", rows lines of cols
//   entries, "bias <l> <rows>" and one line of rows entries
//   end

inline constexpr int kMlpVersion = 1;

inline void write_params(std::ostream& out, const MlpParams& p) {
  p.validate();
  out << "ddscbf-mlp v" << kMlpVersion << '\n' << "activation tanh\n" << "layers " << p.layer_sizes.size();
  for (int s : p.layer_sizes) out << ' ' << s;
  out << "\ninput_mean " << io::join(p.input_mean) << "\ninput_scale " << io::join(p.input_scale) << '\n';
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const auto& W = p.layers[l].weight;
    out << "weight " << l << ' ' << W.rows() << ' ' << W.cols() << '\n';
    for (Eigen::Index r = 0; r < W.rows(); ++r) out << io::join(W.row(r).transpose()) << '\n';
    out << "bias " << l << ' ' << p.layers[l].bias.size() << '\n' << io::join(p.layers[l].bias) << '\n';
  }
  out << "end\n";
}

inline MlpParams read_params(std::istream& in) {
  io::LineReader reader(in);
  auto expect_key = [&](const std::string& key) {
    auto t = reader.expect_tokens(key);
    if (t.empty() || t[0] != key) throw ParseError("expected '" + key + "'", reader.line());
    return t;
  };
  auto read_values = [&](const std::vector<std::string>& t, std::size_t from, std::size_t count) {
    if (t.size() != from + count)
      throw ParseError("expected " + std::to_string(count) + " values, found " +
                           std::to_string(t.size() - std::min(t.size(), from)),
                       reader.line());
    Vector v(static_cast<Eigen::Index>(count));
    for (std::size_t k = 0; k < count; ++k) v[static_cast<Eigen::Index>(k)] = io::parse_double(t[from + k], reader.line());
    return v;
  };

  const auto magic = reader.expect_tokens("header");
  if (magic.size() != 2 || magic[0] != "ddscbf-mlp") throw ParseError("not a ddscbf-mlp file", reader.line());
  if (magic[1] != "v" + std::to_string(kMlpVersion))
    throw ParseError("weight file version mismatch: expected v" + std::to_string(kMlpVersion) +
                         ", found " + magic[1],
                     reader.line());
  const auto act = expect_key("activation");
  if (act.size() != 2 || act[1] != "tanh") throw ParseError("unsupported activation", reader.line());

  MlpParams p;
  const auto sizes = expect_key("layers");
  if (sizes.size() < 2) throw ParseError("missing layer count", reader.line());
  const auto count = io::parse_int(sizes[1], reader.line());
  if (count < 2 || static_cast<std::size_t>(count) + 2 != sizes.size())
    throw ParseError("layer count does not match sizes", reader.line());
  for (std::size_t k = 2; k < sizes.size(); ++k) {
    const auto s = io::parse_int(sizes[k], reader.line());
    if (s < 1) throw ParseError("layer sizes must be positive", reader.line());
    p.layer_sizes.push_back(static_cast<int>(s));
  }
  const auto dim = static_cast<std::size_t>(p.layer_sizes.front());
  p.input_mean = read_values(expect_key("input_mean"), 1, dim);
  p.input_scale = read_values(expect_key("input_scale"), 1, dim);

  for (std::size_t l = 0; l + 1 < p.layer_sizes.size(); ++l) {
    const auto rows = static_cast<std::size_t>(p.layer_sizes[l + 1]);
    const auto cols = static_cast<std::size_t>(p.layer_sizes[l]);
    const auto wh = expect_key("weight");
    if (wh.size() != 4 || io::parse_int(wh[1], reader.line()) != static_cast<long long>(l) ||
        io::parse_int(wh[2], reader.line()) != static_cast<long long>(rows) ||
        io::parse_int(wh[3], reader.line()) != static_cast<long long>(cols))
      throw ParseError("weight header does not match layer sizes", reader.line());
    DenseLayer layer{Matrix(rows, cols), Vector()};
    for (std::size_t r = 0; r < rows; ++r)
      layer.weight.row(static_cast<Eigen::Index>(r)) = read_values(reader.expect_tokens("weight row"), 0, cols).transpose();
    const auto bh = expect_key("bias");
    if (bh.size() != 3 || io::parse_int(bh[2], reader.line()) != static_cast<long long>(rows))
      throw ParseError("bias header does not match layer sizes", reader.line());
    layer.bias = read_values(reader.expect_tokens("bias values"), 0, rows);
    p.layers.push_back(std::move(layer));
  }
  expect_key("end");
  try {
    p.validate();
  } catch (const ConfigError& e) {
    throw ParseError(e.what(), reader.line());
  }
  return p;
}

inline void save_params(const std::string& path, const MlpParams& p) {
  auto out = io::open_out(path);
  write_params(out, p);
}

inline MlpParams load_params(const std::string& path) {
  auto in = io::open_in(path);
  return read_params(in);
}

}  // namespace ddscbf
