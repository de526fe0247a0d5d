#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace gmpslab {

/// Purposes used when deriving independent streams from a run seed.
namespace stream {
inline constexpr std::uint64_t kTasks = 1;
inline constexpr std::uint64_t kInit = 2;
inline constexpr std::uint64_t kRollout = 3;
inline constexpr std::uint64_t kBatch = 4;
inline constexpr std::uint64_t kEval = 5;
inline constexpr std::uint64_t kExpert = 6;
inline constexpr std::uint64_t kAggregate = 7;
inline constexpr std::uint64_t kHeldOut = 8;
}  // namespace stream

/// Random stream identified by a 64-bit key. derive() hashes the key with a
/// list of identifiers (run, task, purpose, iteration, ...) into a fresh
/// independent stream without touching this one, so results never depend on
/// the order in which parallel consumers draw.
class Rng {
 public:
  explicit Rng(std::uint64_t key) : key_(key), engine_(mix(key)) {}

  Rng derive(std::initializer_list<std::uint64_t> parts) const {
    std::uint64_t k = key_;
    for (auto p : parts) k = mix(k ^ mix(p + 0x632BE59BD9B4E019ULL));
    return Rng(k);
  }

  std::uint64_t key() const { return key_; }

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  double normal() { return normal_(engine_); }
  Eigen::MatrixXd normal(Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
      for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = normal();
    return m;
  }
  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_); }

  std::mt19937_64& engine() { return engine_; }

 private:
  // SplitMix64 finalizer.
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t key_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace gmpslab
