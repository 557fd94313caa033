#pragma once

#include <cstdint>
#include <random>

namespace ddscbf {

/**
 * @brief Reproducible Gaussian stream identified by (seed, stream_id).
 *
 * Two streams with the same pair replay the same variates; distinct
 * stream ids are decorrelated through std::seed_seq mixing, so every
 * trajectory / dataset point can own its own stream regardless of
 * scheduling.
 */
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id)
      : seed_(seed), stream_id_(stream_id), engine_(make_engine(seed, stream_id)) {}

  [[nodiscard]] std::uint64_t seed() const noexcept { return seed_; }
  [[nodiscard]] std::uint64_t stream_id() const noexcept { return stream_id_; }

  double gaussian() { return normal_(engine_); }

  double uniform(double lo, double hi) {
    return lo + (hi - lo) * std::generate_canonical<double, 53>(engine_);
  }

  std::uint64_t next_u64() { return engine_(); }


 private:
  static std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream_id) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream_id),
                      static_cast<std::uint32_t>(stream_id >> 32), 0x5DEECE66u};
    return std::mt19937_64(seq);
  }

  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// Stream-id layout so datasets, trials and diagnostics never share variates.
namespace streams {
inline constexpr std::uint64_t kDataset = 1ULL << 56;
inline constexpr std::uint64_t kTrial = 2ULL << 56;
inline constexpr std::uint64_t kDiagnostic = 3ULL << 56;
inline constexpr std::uint64_t kTraining = 4ULL << 56;

inline std::uint64_t trial(std::uint64_t variant, std::uint64_t index) {
  return kTrial | (variant << 32) | index;
}
}  // namespace streams

}  // namespace ddscbf
