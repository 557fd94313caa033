// ddscbf: dataset generation, training, evaluation and diagnostics.
//
// Exit codes: 0 ok, 1 runtime failure, 2 bad config or usage, 3 unreadable
// input file, 4 training diverged.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ddscbf/ddscbf.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace ddscbf;

namespace {

constexpr const char* kToolVersion = "ddscbf 1.0.0";

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> trials;
  std::optional<int> epochs;
  std::optional<double> noise;
};

template <typename T>
std::optional<T> field(const json& j, const char* name) {
  if (!j.contains(name)) return std::nullopt;
  try {
    return j.at(name).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("field '") + name + "' has the wrong type");
  }
}

template <typename T>
T required(const json& j, const char* name) {
  auto v = field<T>(j, name);
  if (!v) throw ConfigError(std::string("missing required field '") + name + "'");
  return *v;
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
}

ExperimentConfig load_config(const std::string& path, const std::vector<const char*>& must_have,
                             const Overrides& ov) {
  const json j = read_json(path);
  for (const char* name : must_have)
    if (!j.contains(name)) throw ConfigError(std::string("missing required field '") + name + "'");

  ExperimentConfig cfg;
  cfg.example = parse_example(required<std::string>(j, "example"));
  cfg.dt = required<double>(j, "dt");
  if (auto v = field<double>(j, "noise")) cfg.noise_scale = *v;
  if (auto v = field<int>(j, "N")) cfg.N = *v;
  if (auto v = field<int>(j, "n")) cfg.n = *v;
  if (auto v = field<int>(j, "epochs")) cfg.epochs = *v;
  if (auto v = field<double>(j, "learning_rate")) cfg.learning_rate = *v;
  if (auto v = field<int>(j, "trials")) cfg.trials = *v;
  if (auto v = field<double>(j, "margin")) cfg.margin = *v;
  if (auto v = field<double>(j, "decay_rate")) cfg.decay_rate = *v;
  if (auto v = field<int>(j, "horizon_steps")) cfg.horizon_steps = *v;
  if (auto v = field<std::uint64_t>(j, "seed")) cfg.seed = *v;
  if (ov.seed) cfg.seed = *ov.seed;
  if (ov.trials) cfg.trials = *ov.trials;
  if (ov.epochs) cfg.epochs = *ov.epochs;
  if (ov.noise) cfg.noise_scale = *ov.noise;
  cfg.validate();
  return cfg;
}

json to_json(const ExperimentConfig& c) {
  json j;
  j["example"] = to_string(c.example);
  j["noise"] = c.noise_scale;
  j["N"] = c.N;
  j["n"] = c.n;
  j["dt"] = c.dt;
  j["epochs"] = c.epochs;
  j["learning_rate"] = c.learning_rate;
  j["trials"] = c.trials;
  j["margin"] = c.margin;
  j["decay_rate"] = c.decay_rate.value_or(c.preset().decay_rate);
  j["horizon_steps"] = c.horizon_steps;
  j["seed"] = c.seed;
  return j;
}

// Relative output paths land under $DDSCBF_OUT_DIR when it is set.
std::string output_path(const std::string& path) {
  const char* dir = std::getenv("DDSCBF_OUT_DIR");
  if (!dir || !*dir || fs::path(path).is_absolute()) return path;
  fs::create_directories(dir);
  return (fs::path(dir) / path).string();
}

class Manifest {
 public:
  explicit Manifest(std::string command) : start_(std::chrono::steady_clock::now()) {
    doc_["command"] = std::move(command);
    doc_["version"] = kToolVersion;
    doc_["inputs"] = json::array();
    doc_["outputs"] = json::array();
  }
  void config(const json& c, std::uint64_t seed) {
    doc_["config"] = c;
    doc_["seed"] = seed;
  }
  void input(const std::string& p) { doc_["inputs"].push_back(p); }
  void output(const std::string& p) { doc_["outputs"].push_back(p); }
  json& extra() { return doc_; }

  // Written next to the primary output as <primary>.manifest.json.
  void write(const std::string& primary) {
    doc_["duration_s"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    auto out = io::open_out(primary + ".manifest.json");
    out << doc_.dump(2) << '\n';
  }

 private:
  json doc_;
  std::chrono::steady_clock::time_point start_;
};

int cmd_sample(const std::string& config, const std::string& out_arg, const Overrides& ov) {
  Manifest m("sample");
  const ExperimentConfig cfg = load_config(config, {"example", "N", "n", "dt", "seed"}, ov);
  const Preset p = cfg.preset();
  RngStream rng(cfg.seed, streams::kDataset);
  const GeneratorDataset ds = build_dataset(p.model, p.barrier, p.region, cfg.N, cfg.n, cfg.dt, rng);

  const std::string out = output_path(out_arg);
  save_dataset(out, ds);
  m.config(to_json(cfg), cfg.seed);
  m.input(config);
  m.output(out);
  m.write(out);
  std::cout << "wrote " << ds.samples.size() << " records to " << out << " (excluded transitions: "
            << ds.meta.excluded << ")\n";
  return 0;
}

int cmd_train(const std::string& dataset_path, const std::string& out_arg, int epochs, double lr,
              const Overrides& ov, const std::optional<std::string>& example, double noise) {
  Manifest m("train");
  const GeneratorDataset ds = load_dataset(dataset_path);
  TrainConfig tc;
  tc.epochs = epochs;
  tc.learning_rate = lr;
  tc.seed = ov.seed.value_or(ds.meta.seed);
  const TrainResult r = train(ds, tc);

  const std::string out = output_path(out_arg);
  save_params(out, r.params);
  {
    auto loss = io::open_out(out + ".loss.csv");
    loss << "epoch,mse\n";
    for (std::size_t e = 0; e < r.loss_history.size(); ++e)
      loss << e + 1 << ',' << io::format_double(r.loss_history[e]) << '\n';
  }
  json c;
  c["epochs"] = epochs;
  c["learning_rate"] = lr;
  c["hidden"] = tc.hidden;
  m.config(c, tc.seed);
  m.input(dataset_path);
  m.output(out);
  m.output(out + ".loss.csv");

  std::cout << "final mse " << io::format_double(r.loss_history.back()) << '\n';
  if (example) {
    const FitError fe = fit_grid_error(make_preset(parse_example(*example), noise), r.params);
    std::cout << "validation grid error " << io::format_double(fe.max_abs) << '\n';
    m.extra()["validation_grid_error"] = fe.max_abs;
  }
  m.write(out);
  return 0;
}

std::vector<Variant> variants_for(const std::string& which) {
  if (which == "all") return {Variant::scbf, Variant::ddscbf, Variant::cbf};
  return {parse_variant(which)};
}

std::optional<MlpParams> weights_if(const std::vector<Variant>& vs, const std::string& path, Manifest& m) {
  const bool needs = std::find(vs.begin(), vs.end(), Variant::ddscbf) != vs.end();
  if (!needs) return std::nullopt;
  if (path.empty()) throw ConfigError("the ddscbf variant needs --weights");
  m.input(path);
  return load_params(path);
}

int cmd_evaluate(const std::string& config, const std::string& which, const std::string& weights,
                 const std::string& out_arg, const Overrides& ov) {
  Manifest m("evaluate");
  const std::vector<Variant> vs = variants_for(which);
  const ExperimentConfig cfg = load_config(config, {"example", "dt"}, ov);
  const std::optional<MlpParams> params = weights_if(vs, weights, m);

  std::vector<SafetyReport> reports;
  for (Variant v : vs) reports.push_back(run_variant(cfg, v, params));
  write_table_text(std::cout, reports);

  const std::string out = output_path(out_arg);
  {
    auto csv = io::open_out(out);
    write_table_csv(csv, reports);
  }
  m.config(to_json(cfg), cfg.seed);
  m.input(config);
  m.output(out);
  m.write(out);
  return 0;
}

int cmd_simulate(const std::string& config, const std::string& which, const std::string& weights,
                 std::uint64_t trial, const std::string& out_arg, const Overrides& ov) {
  Manifest m("simulate");
  const Variant v = parse_variant(which);
  const ExperimentConfig cfg = load_config(config, {"example", "dt"}, ov);
  const std::optional<MlpParams> params = weights_if({v}, weights, m);

  const std::string out = output_path(out_arg);
  const Trajectory t = simulate_trial(cfg, v, params ? &*params : nullptr, trial);
  {
    auto csv = io::open_out(out);
    write_trajectory_csv(csv, t, cfg.preset().barrier);
  }
  m.config(to_json(cfg), cfg.seed);
  m.extra()["trial"] = trial;
  m.input(config);
  m.output(out);
  m.write(out);
  std::cout << to_string(v) << " trial " << trial << ": " << to_string(t.terminated_reason) << " after "
            << t.controls.size() << " steps\n";
  return 0;
}

int cmd_diagnose(const std::string& config, const std::string& out_arg, const Overrides& ov) {
  Manifest m("diagnose");
  const json j = read_json(config);
  const ExperimentConfig cfg = load_config(config, {"example", "dt"}, ov);
  DiagnosticPlan plan;
  if (auto v = field<std::vector<int>>(j, "n_values")) plan.n_values = *v;
  if (auto v = field<std::vector<double>>(j, "dt_values")) plan.dt_values = *v;
  if (auto v = field<int>(j, "dt_sweep_n")) plan.dt_sweep_n = *v;
  if (auto v = field<int>(j, "repetitions")) plan.repetitions = *v;
  if (auto v = field<std::vector<double>>(j, "state"))
    plan.state = Eigen::Map<const Vector>(v->data(), static_cast<Eigen::Index>(v->size()));

  const std::vector<DiagnosticRow> rows = run_diagnostics(cfg, plan);
  const std::string out = output_path(out_arg);
  {
    auto csv = io::open_out(out);
    write_diagnostics_csv(csv, rows);
  }
  write_diagnostics_csv(std::cout, rows);
  json c = to_json(cfg);
  c["n_values"] = plan.n_values;
  c["dt_values"] = plan.dt_values;
  c["dt_sweep_n"] = plan.dt_sweep_n;
  c["repetitions"] = plan.repetitions;
  m.config(c, cfg.seed);
  m.input(config);
  m.output(out);
  m.write(out);
  return 0;
}

int cmd_reproduce(const std::string& config, const std::string& dir_arg, const Overrides& ov) {
  Manifest m("reproduce");
  const ExperimentConfig base = load_config(config, {"example", "dt"}, ov);
  const std::string dir = output_path(dir_arg);
  fs::create_directories(dir);

  std::vector<SafetyReport> reports;
  for (double noise : default_noise_levels(base.example)) {
    ExperimentConfig cfg = base;
    cfg.noise_scale = noise;
    const TrainedModel tm = train_pipeline(cfg);
    const std::string tag = std::string(to_string(cfg.example)) + "_" + io::format_double(noise);

    const std::string fit = (fs::path(dir) / (tag + "_fit.csv")).string();
    {
      auto out = io::open_out(fit);
      emit_fit_figure_data(out, cfg.preset(), tm.result.params, tm.dataset);
    }
    m.output(fit);
    for (Variant v : {Variant::scbf, Variant::ddscbf, Variant::cbf}) {
      reports.push_back(run_variant(cfg, v, tm.result.params));
      const std::string traj = (fs::path(dir) / (tag + "_" + to_string(v) + "_trajectory.csv")).string();
      auto out = io::open_out(traj);
      emit_trajectory_figure_data(out, cfg, v, 0, &tm.result.params);
      m.output(traj);
    }
  }
  write_table_text(std::cout, reports);
  const std::string table = (fs::path(dir) / "table.csv").string();
  {
    auto out = io::open_out(table);
    write_table_csv(out, reports);
  }
  m.config(to_json(base), base.seed);
  m.input(config);
  m.output(table);
  m.write(table);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Data-driven stochastic control barrier function toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", kToolVersion);

  Overrides ov;
  std::uint64_t seed = 0;
  app.add_option("--seed", seed, "Root seed (overrides the config)")
      ->each([&](const std::string&) { ov.seed = seed; });

  std::string config, out, dataset, weights, variant = "all", example;
  int epochs = 500;
  int trials = 0;
  double lr = 1e-3;
  double noise = 0.1;
  std::uint64_t trial = 0;

  auto* sample = app.add_subcommand("sample", "Build a generator dataset from transition samples");
  sample->add_option("config", config, "JSON config")->required();
  sample->add_option("--out", out, "Dataset file")->required();

  auto* trn = app.add_subcommand("train", "Fit the trace-correction network");
  trn->add_option("dataset", dataset, "Dataset file")->required();
  trn->add_option("--out", out, "Weights file")->required();
  trn->add_option("--epochs", epochs, "Training epochs")->check(CLI::PositiveNumber);
  trn->add_option("--lr", lr, "Adam learning rate")->check(CLI::PositiveNumber);
  trn->add_option("--example", example, "Report grid error against this preset's analytic term");
  trn->add_option("--noise", noise, "Noise scale of the preset used with --example");

  auto* eval = app.add_subcommand("evaluate", "Monte Carlo safe rates");
  eval->add_option("config", config, "JSON config")->required();
  eval->add_option("--variant", variant, "all, scbf, ddscbf or cbf")
      ->check(CLI::IsMember({"all", "scbf", "ddscbf", "cbf"}));
  eval->add_option("--weights", weights, "Weights file for ddscbf");
  eval->add_option("--out", out, "CSV table")->default_val("evaluate.csv");
  eval->add_option("--trials", trials, "Trials per variant")
      ->check(CLI::PositiveNumber)
      ->each([&](const std::string&) { ov.trials = trials; });

  auto* sim = app.add_subcommand("simulate", "One seeded closed-loop rollout");
  sim->add_option("config", config, "JSON config")->required();
  sim->add_option("--variant", variant, "scbf, ddscbf or cbf")
      ->required()
      ->check(CLI::IsMember({"scbf", "ddscbf", "cbf"}));
  sim->add_option("--weights", weights, "Weights file for ddscbf");
  sim->add_option("--trial", trial, "Trial index");
  sim->add_option("--out", out, "Trajectory CSV")->default_val("trajectory.csv");

  auto* diag = app.add_subcommand("diagnose", "Estimator error sweeps over n and dt");
  diag->add_option("config", config, "JSON config")->required();
  diag->add_option("--out", out, "CSV")->default_val("diagnose.csv");

  auto* repro = app.add_subcommand("reproduce", "Train, evaluate all variants and emit figure data");
  repro->add_option("config", config, "JSON config")->required();
  repro->add_option("--out-dir", out, "Output directory")->default_val("reproduce");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (sample->parsed()) return cmd_sample(config, out, ov);
    if (trn->parsed())
      return cmd_train(dataset, out, epochs, lr, ov,
                       example.empty() ? std::nullopt : std::optional<std::string>(example), noise);
    if (eval->parsed()) return cmd_evaluate(config, variant, weights, out, ov);
    if (sim->parsed()) return cmd_simulate(config, variant, weights, trial, out, ov);
    if (diag->parsed()) return cmd_diagnose(config, out, ov);
    if (repro->parsed()) return cmd_reproduce(config, out, ov);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return 3;
  } catch (const TrainingDiverged& e) {
    std::cerr << "training diverged at epoch " << e.epoch() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
