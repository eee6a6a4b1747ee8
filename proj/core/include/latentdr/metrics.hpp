#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "latentdr/datagen.hpp"
#include "latentdr/model.hpp"
#include "latentdr/tensor.hpp"

namespace latentdr {

/// Unordered same-class pairs above which alignment subsamples.
inline constexpr std::size_t kAlignmentPairCap = 1'000'000;

struct AlignmentScore {
  double value = 0.0;
  std::size_t pair_count = 0;
};

struct UniformityScore {
  double value = 0.0;
  std::size_t pair_count = 0;
};

/// Copy of `features` with every row scaled to unit L2 norm (zero rows kept).
Tensor l2_normalize_rows(const Tensor& features);

/// Mean squared distance over unordered same-class pairs of the normalized
/// features. Throws UndefinedMetricError if no class has two members.
AlignmentScore alignment(const Tensor& features, std::span<const int> classes,
                         std::uint64_t subsample_seed = 0);

/// log mean over unordered distinct pairs of exp(-2 * squared distance) of the
/// normalized features. Throws UndefinedMetricError for fewer than 2 rows.
UniformityScore uniformity(const Tensor& features);

struct NnQueryResult {
  std::optional<std::size_t> query_id;
  std::vector<std::size_t> neighbor_ids;
  std::vector<double> distances;
  std::vector<int> neighbor_classes;
  std::vector<int> neighbor_domains;
};

/// k nearest rows of `bank` by Euclidean distance, lower index first on ties.
/// When `query_id` is set that row is excluded. Class/domain annotations are
/// copied when supplied.
NnQueryResult nearest_neighbors(std::span<const double> query, const Tensor& bank, std::size_t k,
                                std::optional<std::size_t> query_id = std::nullopt,
                                std::span<const int> bank_classes = {},
                                std::span<const int> bank_domains = {});

/// Fraction of positions where predictions equal labels.
double accuracy(std::span<const int> predictions, std::span<const int> labels);

struct AccuracySuite {
  double clean_acc = 0.0;
  double degraded_acc = 0.0;
  double restored_acc = 0.0;
};

/// Clean, degraded and restored accuracy of a bundle on one split, evaluated
/// with dropout off in batches of `batch_size` rows (the operators mix within
/// a batch). Requires the bundle's operators.
AccuracySuite accuracy_suite(const ModelBundle& bundle, const SyntheticDataset& split, Rng rng,
                             std::size_t batch_size = 96);

}  // namespace latentdr
