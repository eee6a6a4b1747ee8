#include "latentdr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "latentdr/errors.hpp"
#include "latentdr/ops.hpp"
#include "latentdr/operators.hpp"

namespace latentdr {
namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    total += d * d;
  }
  return total;
}

}  // namespace

Tensor l2_normalize_rows(const Tensor& features) {
  Tensor out = features.detached();
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    double norm = 0.0;
    for (const double v : row) norm += v * v;
    norm = std::sqrt(norm);
    if (norm > 0.0) {
      for (double& v : row) v /= norm;
    }
  }
  return out;
}

AlignmentScore alignment(const Tensor& features, std::span<const int> classes,
                         std::uint64_t subsample_seed) {
  if (features.rank() != 2 || features.rows() != classes.size()) {
    throw DimensionError("alignment: features " + shape_string(features.shape()) + " vs " +
                         std::to_string(classes.size()) + " labels");
  }
  const Tensor z = l2_normalize_rows(features);
  const std::size_t n = z.rows();

  std::size_t total_pairs = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) total_pairs += classes[i] == classes[j];
  }
  if (total_pairs == 0) throw UndefinedMetricError("alignment needs at least one same-class pair");

  AlignmentScore score;
  if (total_pairs <= kAlignmentPairCap) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        if (classes[i] == classes[j]) sum += squared_distance(z.row(i), z.row(j));
      }
    }
    score.value = sum / static_cast<double>(total_pairs);
    score.pair_count = total_pairs;
    return score;
  }
  // Seeded uniform subsample of same-class pairs.
  Rng rng = Rng(subsample_seed).split("alignment");
  double sum = 0.0;
  std::size_t drawn = 0;
  while (drawn < kAlignmentPairCap) {
    const std::size_t i = rng.index(n);
    const std::size_t j = rng.index(n);
    if (i == j || classes[i] != classes[j]) continue;
    sum += squared_distance(z.row(i), z.row(j));
    ++drawn;
  }
  score.value = sum / static_cast<double>(drawn);
  score.pair_count = drawn;
  return score;
}

UniformityScore uniformity(const Tensor& features) {
  if (features.rank() != 2 || features.rows() < 2) {
    throw UndefinedMetricError("uniformity needs at least 2 feature rows");
  }
  const Tensor z = l2_normalize_rows(features);
  const std::size_t n = z.rows();
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) sum += std::exp(-2.0 * squared_distance(z.row(i), z.row(j)));
  }
  const std::size_t pairs = n * (n - 1) / 2;
  return UniformityScore{std::log(sum / static_cast<double>(pairs)), pairs};
}

NnQueryResult nearest_neighbors(std::span<const double> query, const Tensor& bank, std::size_t k,
                                std::optional<std::size_t> query_id,
                                std::span<const int> bank_classes,
                                std::span<const int> bank_domains) {
  if (bank.rank() != 2 || bank.cols() != query.size()) {
    throw DimensionError("nearest_neighbors: query of length " + std::to_string(query.size()) +
                         " vs bank " + shape_string(bank.shape()));
  }
  const std::size_t n = bank.rows();
  const bool excludes_self = query_id.has_value() && *query_id < n;
  const std::size_t available = n - (excludes_self ? 1 : 0);
  if (k > available) {
    throw RangeError("k=" + std::to_string(k) + " exceeds " + std::to_string(available) +
                     " candidates");
  }
  std::vector<std::pair<double, std::size_t>> scored;
  scored.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (excludes_self && i == *query_id) continue;
    scored.emplace_back(std::sqrt(squared_distance(query, bank.row(i))), i);
  }
  // Pair ordering breaks distance ties by bank index.
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k), scored.end());

  NnQueryResult result;
  result.query_id = query_id;
  for (std::size_t r = 0; r < k; ++r) {
    const auto [dist, id] = scored[r];
    result.neighbor_ids.push_back(id);
    result.distances.push_back(dist);
    if (!bank_classes.empty()) result.neighbor_classes.push_back(bank_classes[id]);
    if (!bank_domains.empty()) result.neighbor_domains.push_back(bank_domains[id]);
  }
  return result;
}

double accuracy(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size()) throw DimensionError("accuracy: length mismatch");
  if (labels.empty()) throw ValidationError("accuracy of an empty split");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += predictions[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

AccuracySuite accuracy_suite(const ModelBundle& bundle, const SyntheticDataset& split, Rng rng,
                             std::size_t batch_size) {
  if (split.samples.empty()) throw ValidationError("accuracy_suite on an empty split");
  if (batch_size == 0) throw ConfigError("evaluation batch size must be positive");
  // Stored splits are grouped by class; mix them so every evaluation batch
  // looks like a training batch to the mixing operators.
  const std::size_t n = split.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng order_rng = rng.fork();
  order_rng.shuffle(order);
  const SyntheticDataset mixed = subset(split, order);
  const Tensor x = mixed.features();
  const std::vector<int> labels = mixed.labels();
  const std::size_t dim = split.input_dim;

  std::vector<int> clean;
  std::vector<int> degraded;
  std::vector<int> restored;
  std::size_t start = 0;
  while (start < n) {
    std::size_t stop = std::min(n, start + batch_size);
    // A trailing singleton cannot be mixed; fold it into the previous batch.
    if (n - stop == 1) stop = n;
    const std::size_t rows = stop - start;
    Tensor xb({rows, dim});
    std::copy(x.values().begin() + static_cast<std::ptrdiff_t>(start * dim),
              x.values().begin() + static_cast<std::ptrdiff_t>(stop * dim), xb.values().begin());

    Tape tape;
    const Var z = bundle.encode(tape.constant(std::move(xb)));
    const auto c = argmax_rows(bundle.classify(z).value());
    clean.insert(clean.end(), c.begin(), c.end());
    if (bundle.has_operators()) {
      Rng d_rng = rng.fork();
      Rng r_rng = rng.fork();
      const Var zd = degrade(z, bundle.degrader(), false, d_rng);
      const Var zr = restore(zd, z, bundle.restorer(), false, r_rng);
      const auto d = argmax_rows(bundle.classify_augmented(zd).value());
      const auto r = argmax_rows(bundle.classify_augmented(zr).value());
      degraded.insert(degraded.end(), d.begin(), d.end());
      restored.insert(restored.end(), r.begin(), r.end());
    }
    start = stop;
  }
  AccuracySuite suite;
  suite.clean_acc = accuracy(clean, labels);
  suite.degraded_acc = bundle.has_operators() ? accuracy(degraded, labels) : suite.clean_acc;
  suite.restored_acc = bundle.has_operators() ? accuracy(restored, labels) : suite.clean_acc;
  return suite;
}

}  // namespace latentdr
