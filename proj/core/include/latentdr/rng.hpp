#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <string_view>
#include <vector>

namespace latentdr {

/// Counter-based random stream.
///
/// Each draw is a pure function of (key, counter), so a stream can be
/// replayed from any position and child streams derived by name never
/// overlap with their parent. Every stochastic site in a run (init, dropout,
/// subset selection, data generation, shuffling) owns a stream obtained via
/// `split("site")`, which keeps ablations from perturbing unrelated sites.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0) noexcept;

  /// Child stream keyed by (this key, name). Does not advance this stream.
  [[nodiscard]] Rng split(std::string_view name) const noexcept;
  /// Child stream keyed by (this key, index).
  [[nodiscard]] Rng split(std::uint64_t index) const noexcept;
  /// Fresh child stream; advances this stream by one draw, so successive
  /// forks are independent.
  Rng fork() noexcept;

  result_type operator()() noexcept { return next_u64(); }
  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  std::uint64_t next_u64() noexcept;
  /// Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept;
  /// Uniform integer in [0, n). n must be positive.
  std::size_t index(std::size_t n) noexcept;
  /// Standard normal via Box-Muller (both outputs used).
  double normal() noexcept;
  double normal(double mean, double stddev) noexcept { return mean + stddev * normal(); }
  bool bernoulli(double p) noexcept { return uniform() < p; }

  /// In-place Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& items) noexcept {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = index(i);
      std::swap(items[i - 1], items[j]);
    }
  }

  /// k distinct indices drawn uniformly from [0, n), in draw order.
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

  [[nodiscard]] std::uint64_t key() const noexcept { return key_; }
  [[nodiscard]] std::uint64_t counter() const noexcept { return counter_; }

 private:
  Rng(std::uint64_t key, std::uint64_t counter) noexcept : key_(key), counter_(counter) {}

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool has_spare_normal_ = false;
  double spare_normal_ = 0.0;
};

/// Stable 64-bit hash of a string (FNV-1a followed by a finalizer).
std::uint64_t hash_name(std::string_view name) noexcept;

}  // namespace latentdr
