// Learns the diffusion correction of the cubic system from transition samples
// and prints the network next to the analytic term along x2 (x1 = 0).
#include <cstdio>

#include "ddscbf/ddscbf.hpp"

int main() {
  using namespace ddscbf;
  const Preset p = make_preset(Example::cubic2d, 0.15);
  RngStream rng(11, streams::kDataset);
  const GeneratorDataset ds = build_dataset(p.model, p.barrier, p.region, 200, 50000, 0.01, rng);

  TrainConfig tc;
  tc.seed = 11;
  const TrainResult fit = train(ds, tc);

  std::printf("%6s %12s %12s\n", "x2", "network", "analytic");
  for (double x2 = -1.5; x2 <= 1.5001; x2 += 0.25) {
    const Vector x = Eigen::Vector2d(0.0, x2);
    std::printf("%6.2f %12.5f %12.5f\n", x2, mlp_forward(fit.params, x), p.analytic_delta(x));
  }
  std::printf("grid max error %.5f\n", fit_grid_error(p, fit.params).max_abs);
}
