#include <cmath>
#include <filesystem>
#include <sstream>

#include <gtest/gtest.h>

#include "ddscbf/ddscbf.hpp"
#include "support/properties.hpp"

using namespace ddscbf;

namespace {

const double kSqrt3 = std::sqrt(3.0);

// One pendulum fit shared by the tests that need a trained network.
const TrainedModel& pendulum_fit() {
  static const TrainedModel tm = [] {
    ExperimentConfig cfg;
    cfg.example = Example::pendulum;
    cfg.seed = 2;
    return train_pipeline(cfg);
  }();
  return tm;
}

std::string serialize(const MlpParams& p) {
  std::ostringstream out;
  write_params(out, p);
  return out.str();
}

}  // namespace

TEST(MlpForward, ZeroNetworkIsZero) {
  const MlpParams p = MlpParams::zeros({2, 100, 30, 1});
  for (double a : {-1.0, 0.0, 3.0}) EXPECT_EQ(mlp_forward(p, Eigen::Vector2d(a, -a)), 0.0);
}

TEST(MlpForward, LinearNetworkIsAffineMap) {
  MlpParams p = MlpParams::zeros({2, 1});
  p.layers[0].weight << 2.0, -3.0;
  p.layers[0].bias << 0.5;
  p.input_mean << 1.0, 0.0;
  p.input_scale << 2.0, 1.0;
  // 2 (x1 - 1) / 2 - 3 x2 + 0.5
  EXPECT_DOUBLE_EQ(mlp_forward(p, Eigen::Vector2d(3.0, 1.0)), 2.0 - 3.0 + 0.5);
}

TEST(MlpForward, ShapeMismatchIsConfigError) {
  const MlpParams p = MlpParams::zeros({2, 4, 1});
  EXPECT_THROW(mlp_forward(p, Vector::Zero(3)), ConfigError);
  MlpParams bad = p;
  bad.layers[1].weight = Matrix::Zero(1, 5);
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(LossAndGrad, ExactFitHasZeroLossAndGradient) {
  const MlpParams p = init_params({2, 6, 1}, 3);
  std::vector<Sample> batch;
  RngStream rng(3, 0);
  for (int i = 0; i < 10; ++i) {
    const Vector x(Eigen::Vector2d(rng.uniform(-1, 1), rng.uniform(-1, 1)));
    batch.push_back({x, mlp_forward(p, x)});
  }
  const LossAndGrad lg = loss_and_grad(p, batch);
  EXPECT_LT(lg.mse, 1e-28);
  for (const auto& g : lg.grads) {
    EXPECT_LT(g.weight.cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_LT(g.bias.cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(LossAndGrad, MatchesFiniteDifferences) {
  for (std::uint64_t seed : {1, 2, 3}) EXPECT_LE(checks::backprop_fd_max_rel(seed, {2, 5, 4, 1}, 12), 1e-4);
  EXPECT_LE(checks::backprop_fd_max_rel(4, {2, 100, 30, 1}, 8), 1e-4);
}

TEST(LossAndGrad, DuplicatedBatchIsUnchanged) {
  const MlpParams p = init_params({2, 7, 3, 1}, 5);
  std::vector<Sample> batch;
  RngStream rng(5, 0);
  for (int i = 0; i < 9; ++i) batch.push_back({Eigen::Vector2d(rng.uniform(-1, 1), rng.uniform(-1, 1)), rng.gaussian()});
  std::vector<Sample> twice = batch;
  twice.insert(twice.end(), batch.begin(), batch.end());
  const LossAndGrad a = loss_and_grad(p, batch), b = loss_and_grad(p, twice);
  EXPECT_NEAR(a.mse, b.mse, 1e-15);
  for (std::size_t l = 0; l < a.grads.size(); ++l) {
    EXPECT_LE((a.grads[l].weight - b.grads[l].weight).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_LE((a.grads[l].bias - b.grads[l].bias).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(Train, LearnsConstantTarget) {
  GeneratorDataset ds;
  RngStream rng(6, 0);
  for (int i = 0; i < 50; ++i) ds.samples.push_back({Eigen::Vector2d(rng.uniform(-1, 1), rng.uniform(-1, 1)), -0.37});
  TrainConfig cfg;
  cfg.seed = 6;
  const TrainResult r = train(ds, cfg);
  EXPECT_LE(r.loss_history.back(), 1e-6);
  EXPECT_LT(r.loss_history.back(), r.initial_mse);
}

TEST(Train, DeterministicUnderSeed) {
  GeneratorDataset ds;
  RngStream rng(7, 0);
  for (int i = 0; i < 40; ++i) {
    const Vector x(Eigen::Vector2d(rng.uniform(-1, 1), rng.uniform(-1, 1)));
    ds.samples.push_back({x, std::sin(x[0]) * x[1]});
  }
  for (int batch : {0, 8}) {
    TrainConfig cfg;
    cfg.epochs = 30;
    cfg.seed = 7;
    cfg.batch_size = batch;
    const TrainResult a = train(ds, cfg), b = train(ds, cfg);
    EXPECT_EQ(a.loss_history, b.loss_history);
    EXPECT_EQ(serialize(a.params), serialize(b.params));
  }
}

TEST(Train, DivergenceReportsEpoch) {
  GeneratorDataset ds;
  for (int i = 0; i < 10; ++i) ds.samples.push_back({Eigen::Vector2d(i * 0.1, 0.0), 1e300});
  TrainConfig cfg;
  cfg.epochs = 5;
  try {
    train(ds, cfg);
    FAIL() << "expected TrainingDiverged";
  } catch (const TrainingDiverged& e) {
    EXPECT_EQ(e.epoch(), 0);
  }
}

TEST(Train, RejectsBadConfig) {
  GeneratorDataset ds;
  ds.samples.push_back({Eigen::Vector2d(0, 0), 0.0});
  TrainConfig cfg;
  cfg.epochs = 0;
  EXPECT_THROW(train(ds, cfg), ConfigError);
  cfg.epochs = 1;
  cfg.learning_rate = 0.0;
  EXPECT_THROW(train(ds, cfg), ConfigError);
  EXPECT_THROW(train(GeneratorDataset{}, TrainConfig{}), ConfigError);
}

TEST(TrainedPendulum, MatchesAnalyticTraceTerm) {
  const MlpParams& p = pendulum_fit().result.params;
  for (double om : {-0.5, 0.0, 0.5})
    EXPECT_NEAR(mlp_forward(p, Eigen::Vector2d(0.8, om)), -kSqrt3 * 0.08 * 0.08, 0.01);
  double worst = 0.0;
  for (int i = 0; i <= 200; ++i) {
    const double th = -1.0 + i * 0.01;
    worst = std::max(worst, std::abs(mlp_forward(p, Eigen::Vector2d(th, 0.0)) + kSqrt3 * std::pow(0.1 * th, 2)));
  }
  EXPECT_LE(worst, 0.01);
}

TEST(TrainedPendulum, LearnedGeneratorNearTruth) {
  const Preset pre = make_preset(Example::pendulum, 0.1);
  const MlpParams& p = pendulum_fit().result.params;
  const Vector x(Eigen::Vector2d(0.5, 0.0));
  EXPECT_NEAR(learned_generator(p, pre.model.hidden(), pre.barrier, x, Vector::Zero(1)),
              generator_true(pre.model, pre.barrier, x, Vector::Zero(1)), 0.02);
}

TEST(LearnedGenerator, ZeroNetIsLieDerivative) { EXPECT_EQ(checks::zero_net_lie_gap(8, 100), 0.0); }

TEST(LearnedGenerator, AffineInControl) {
  const Preset pre = make_preset(Example::cubic2d, 0.1);
  const MlpParams p = init_params({2, 100, 30, 1}, 9);
  const SdeModel m = pre.model.hidden();
  RngStream rng(9, 0);
  for (int i = 0; i < 20; ++i) {
    const Vector x = checks::random_in(pre.region.box, rng);
    const double base = learned_generator(p, m, pre.barrier, x, Vector::Zero(1));
    const LieParts parts = lie_parts(m, pre.barrier, x);
    for (double u : {-2.0, 0.5, 3.0}) {
      const double got = learned_generator(p, m, pre.barrier, x, Vector::Constant(1, u));
      EXPECT_NEAR(got - base, parts.lg[0] * u, 1e-12 * std::max(1.0, std::abs(got)));
    }
  }
}

TEST(ParamsFile, RoundTripKeepsForwardBitExact) {
  const MlpParams p = init_params({2, 100, 30, 1}, 10);
  std::stringstream buf;
  write_params(buf, p);
  const MlpParams back = read_params(buf);
  RngStream rng(10, 0);
  for (int i = 0; i < 50; ++i) {
    const Vector x(Eigen::Vector2d(rng.uniform(-2, 2), rng.uniform(-2, 2)));
    EXPECT_EQ(mlp_forward(back, x), mlp_forward(p, x));
  }
  const auto path = (std::filesystem::temp_directory_path() / "ddscbf_params_roundtrip.txt").string();
  save_params(path, p);
  EXPECT_EQ(serialize(load_params(path)), serialize(p));
  std::filesystem::remove(path);
}

TEST(ParamsFile, TruncatedFileIsParseError) {
  const std::string text = serialize(init_params({2, 4, 1}, 11));
  for (std::size_t cut : {text.size() / 3, text.size() / 2, text.size() - 5}) {
    std::istringstream in(text.substr(0, cut));
    EXPECT_THROW(read_params(in), ParseError) << "cut at " << cut;
  }
}

TEST(ParamsFile, VersionMismatchNamesBothVersions) {
  std::string text = serialize(init_params({2, 4, 1}, 12));
  text.replace(text.find("v1"), 2, "v7");
  std::istringstream in(text);
  try {
    read_params(in);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("v1"), std::string::npos) << what;
    EXPECT_NE(what.find("v7"), std::string::npos) << what;
    EXPECT_EQ(e.line(), 1u);
  }
}
