#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "latentdr/rng.hpp"
#include "latentdr/tensor.hpp"

namespace latentdr {

/// Affine shift defining one domain:
///   x = scale * Rot(rotation_angle) * u + translation + N(0, noise_std^2)
/// Rot rotates every coordinate pair (2k, 2k+1) by the same angle.
struct DomainSpec {
  int domain_id = 0;
  double rotation_angle = 0.0;
  double scale = 1.0;
  std::vector<double> translation;  // input_dim entries; empty means zero
  double noise_std = 0.0;
};

struct Sample {
  std::vector<double> features;
  int label = 0;
  int domain = 0;
};

struct SyntheticDataset {
  std::vector<Sample> samples;
  std::size_t classes = 0;
  std::size_t domains = 0;
  std::size_t input_dim = 0;
  std::uint64_t seed = 0;
  std::vector<std::vector<double>> prototypes;  // class means before the domain transform
  std::vector<DomainSpec> domain_specs;

  [[nodiscard]] std::size_t size() const noexcept { return samples.size(); }
  /// Features as a [N, input_dim] matrix.
  [[nodiscard]] Tensor features() const;
  [[nodiscard]] std::vector<int> labels() const;
  [[nodiscard]] std::vector<int> domain_ids() const;
  /// Per-class sample counts.
  [[nodiscard]] std::vector<std::size_t> class_counts() const;
};

struct MultiDomainParams {
  std::size_t classes = 7;
  std::size_t domains = 4;
  std::size_t per_cell = 60;
  std::size_t input_dim = 32;
  /// Radius of the sphere the class prototypes live on.
  double prototype_radius = 3.0;
  /// Minimum pairwise angle between prototypes, radians.
  double min_separation = 0.9;
  /// Std of the isotropic jitter around each prototype.
  double within_class_std = 1.0;
  /// Defaults used when `domain_specs` is empty: domain k is rotated by
  /// k * rotation_step, scaled by 1 + k * scale_step, shifted by a random
  /// vector of norm k * shift_norm, with observation noise noise_std.
  double rotation_step = 0.3;
  double scale_step = 0.1;
  double shift_norm = 0.5;
  double noise_std = 0.3;
  std::vector<DomainSpec> domain_specs;
  /// When >= 0, domain `override_domain` gets `override_rotation` instead of
  /// its default rotation.
  int override_domain = -1;
  double override_rotation = 0.0;
};

/// Default domain transforms for `params` (empty `domain_specs`).
std::vector<DomainSpec> default_domain_specs(const MultiDomainParams& params, Rng& rng);

/// Prototypes on a sphere by rejection sampling. Throws ConfigError when the
/// separation cannot be met.
std::vector<std::vector<double>> draw_prototypes(std::size_t classes, std::size_t input_dim,
                                                 double radius, double min_separation, Rng& rng);

/// Applies a domain transform (without observation noise) to u.
std::vector<double> apply_domain_transform(const DomainSpec& spec, std::span<const double> u);

/// Balanced corpus with per_cell samples in every (class, domain) cell.
SyntheticDataset generate_multidomain(const MultiDomainParams& params, std::uint64_t seed);
SyntheticDataset generate_multidomain(const MultiDomainParams& params, Rng& rng);

struct DatasetSplit {
  SyntheticDataset train;
  SyntheticDataset val;
  SyntheticDataset test;
};

/// Splits every (class, domain) cell with round(train_fraction * n) samples
/// (at least one) going to the first part. Both parts keep source order.
std::pair<SyntheticDataset, SyntheticDataset> stratified_split(const SyntheticDataset& dataset,
                                                               double train_fraction, Rng& rng);

/// Test = every sample of the held-out domain; the remaining samples are split
/// train/val inside each (class, domain) cell with round(train_fraction * n)
/// going to train.
DatasetSplit leave_one_domain_out_split(const SyntheticDataset& dataset, int held_out_domain,
                                        double train_fraction, Rng& rng);

struct LongTailConfig {
  double imbalance_ratio = 100.0;
  std::size_t classes = 10;
  std::size_t head_count = 500;
  /// Balanced evaluation samples per class.
  std::size_t test_per_class = 50;
  double prototype_radius = 3.0;
  double min_separation = 0.9;
  double within_class_std = 1.0;
  double noise_std = 0.3;
};

/// round(head_count * ratio^(-c/(C-1))) for c = 0..C-1.
std::vector<std::size_t> longtail_class_counts(const LongTailConfig& cfg);

enum class FrequencyGroup { Many, Medium, Few };

/// Class-index thirds: floor(3c/C) = 0, 1, 2.
FrequencyGroup frequency_group(std::size_t class_index, std::size_t classes);

/// Single-domain corpus with the exponential class profile.
SyntheticDataset generate_longtail(const LongTailConfig& cfg, std::size_t input_dim, Rng& rng);

/// Balanced samples drawn around the prototypes of `like` (same geometry,
/// identity domain transform plus observation noise).
SyntheticDataset sample_balanced_like(const SyntheticDataset& like, std::size_t per_class,
                                      double within_class_std, double noise_std, Rng& rng);

/// Samples at `indices`, in that order, with the metadata of `dataset`.
SyntheticDataset subset(const SyntheticDataset& dataset, const std::vector<std::size_t>& indices);

}  // namespace latentdr
