// Safe rate of the three filters on the noisy pendulum, 200 trials each.
#include <iostream>

#include "ddscbf/ddscbf.hpp"

int main() {
  using namespace ddscbf;
  ExperimentConfig cfg;
  cfg.example = Example::pendulum;
  cfg.trials = 200;
  cfg.seed = 7;

  const TrainedModel trained = train_pipeline(cfg);
  std::cout << "trained: mse " << trained.result.loss_history.back() << "\n\n";

  std::vector<SafetyReport> reports;
  for (Variant v : {Variant::scbf, Variant::ddscbf, Variant::cbf})
    reports.push_back(run_variant(cfg, v, trained.result.params));
  write_table_text(std::cout, reports);
}
