#include "latentdr/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include "latentdr/errors.hpp"

namespace latentdr {

Tensor SyntheticDataset::features() const {
  Tensor out({samples.size(), input_dim});
  for (std::size_t i = 0; i < samples.size(); ++i) {
    std::copy(samples[i].features.begin(), samples[i].features.end(), out.row(i).begin());
  }
  return out;
}

std::vector<int> SyntheticDataset::labels() const {
  std::vector<int> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.label);
  return out;
}

std::vector<int> SyntheticDataset::domain_ids() const {
  std::vector<int> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.domain);
  return out;
}

std::vector<std::size_t> SyntheticDataset::class_counts() const {
  std::vector<std::size_t> counts(classes, 0);
  for (const auto& s : samples) ++counts[static_cast<std::size_t>(s.label)];
  return counts;
}

std::vector<std::vector<double>> draw_prototypes(std::size_t classes, std::size_t input_dim,
                                                 double radius, double min_separation, Rng& rng) {
  if (input_dim < 2) throw ConfigError("input_dim must be at least 2");
  constexpr int kMaxAttempts = 20000;
  const double min_cos = std::cos(min_separation);
  std::vector<std::vector<double>> prototypes;
  int attempts = 0;
  while (prototypes.size() < classes) {
    if (++attempts > kMaxAttempts) {
      throw ConfigError("cannot place " + std::to_string(classes) + " prototypes in dimension " +
                        std::to_string(input_dim) + " with separation " +
                        std::to_string(min_separation) + " rad");
    }
    std::vector<double> v(input_dim);
    double norm = 0.0;
    for (double& x : v) {
      x = rng.normal();
      norm += x * x;
    }
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    const bool separated = std::all_of(prototypes.begin(), prototypes.end(), [&](const auto& p) {
      double cos = 0.0;
      for (std::size_t i = 0; i < input_dim; ++i) cos += v[i] * p[i] / radius;
      return cos <= min_cos;
    });
    if (!separated) continue;
    for (double& x : v) x *= radius;
    prototypes.push_back(std::move(v));
  }
  return prototypes;
}

std::vector<DomainSpec> default_domain_specs(const MultiDomainParams& params, Rng& rng) {
  std::vector<DomainSpec> specs;
  for (std::size_t k = 0; k < params.domains; ++k) {
    DomainSpec spec;
    spec.domain_id = static_cast<int>(k);
    spec.rotation_angle = static_cast<double>(k) * params.rotation_step;
    spec.scale = 1.0 + static_cast<double>(k) * params.scale_step;
    spec.noise_std = params.noise_std;
    spec.translation.assign(params.input_dim, 0.0);
    double norm = 0.0;
    for (double& t : spec.translation) {
      t = rng.normal();
      norm += t * t;
    }
    norm = std::sqrt(norm);
    const double target = static_cast<double>(k) * params.shift_norm;
    for (double& t : spec.translation) t = norm > 0.0 ? t * target / norm : 0.0;
    if (params.override_domain == static_cast<int>(k)) {
      spec.rotation_angle = params.override_rotation;
    }
    specs.push_back(std::move(spec));
  }
  return specs;
}

std::vector<double> apply_domain_transform(const DomainSpec& spec, std::span<const double> u) {
  std::vector<double> x(u.begin(), u.end());
  const double c = std::cos(spec.rotation_angle);
  const double s = std::sin(spec.rotation_angle);
  for (std::size_t i = 0; i + 1 < x.size(); i += 2) {
    const double a = x[i];
    const double b = x[i + 1];
    x[i] = c * a - s * b;
    x[i + 1] = s * a + c * b;
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] *= spec.scale;
    if (!spec.translation.empty()) x[i] += spec.translation[i];
  }
  return x;
}

namespace {

Sample draw_sample(const std::vector<double>& prototype, const DomainSpec& spec, int label,
                   double within_class_std, Rng& rng) {
  std::vector<double> u = prototype;
  if (within_class_std > 0.0) {
    for (double& v : u) v += within_class_std * rng.normal();
  }
  Sample sample;
  sample.features = apply_domain_transform(spec, u);
  if (spec.noise_std > 0.0) {
    for (double& v : sample.features) v += spec.noise_std * rng.normal();
  }
  sample.label = label;
  sample.domain = spec.domain_id;
  return sample;
}

}  // namespace

SyntheticDataset generate_multidomain(const MultiDomainParams& params, std::uint64_t seed) {
  Rng rng = Rng(seed).split("datagen");
  SyntheticDataset ds = generate_multidomain(params, rng);
  ds.seed = seed;
  return ds;
}

SyntheticDataset generate_multidomain(const MultiDomainParams& params, Rng& rng) {
  if (params.classes < 2) throw ConfigError("need at least 2 classes");
  if (params.domains < 1) throw ConfigError("need at least 1 domain");
  if (params.per_cell < 1) throw ConfigError("per_cell must be positive");
  if (!params.domain_specs.empty() && params.domain_specs.size() != params.domains) {
    throw ConfigError("domain_specs must list exactly one spec per domain");
  }
  Rng proto_rng = rng.split("prototypes");
  Rng domain_rng = rng.split("domains");
  Rng sample_rng = rng.split("samples");

  SyntheticDataset ds;
  ds.classes = params.classes;
  ds.domains = params.domains;
  ds.input_dim = params.input_dim;
  ds.prototypes = draw_prototypes(params.classes, params.input_dim, params.prototype_radius,
                                  params.min_separation, proto_rng);
  ds.domain_specs = params.domain_specs.empty() ? default_domain_specs(params, domain_rng)
                                                : params.domain_specs;
  for (std::size_t k = 0; k < ds.domain_specs.size(); ++k) {
    auto& spec = ds.domain_specs[k];
    spec.domain_id = static_cast<int>(k);
    if (!(spec.scale > 0.0)) throw ConfigError("domain scale must be positive");
    if (!(spec.noise_std >= 0.0)) throw ConfigError("domain noise_std must be nonnegative");
    if (!spec.translation.empty() && spec.translation.size() != params.input_dim) {
      throw ConfigError("domain translation must have input_dim entries");
    }
  }
  ds.samples.reserve(params.classes * params.domains * params.per_cell);
  for (std::size_t d = 0; d < params.domains; ++d) {
    for (std::size_t c = 0; c < params.classes; ++c) {
      for (std::size_t i = 0; i < params.per_cell; ++i) {
        ds.samples.push_back(draw_sample(ds.prototypes[c], ds.domain_specs[d],
                                         static_cast<int>(c), params.within_class_std,
                                         sample_rng));
      }
    }
  }
  return ds;
}

SyntheticDataset subset(const SyntheticDataset& dataset, const std::vector<std::size_t>& indices) {
  SyntheticDataset out;
  out.classes = dataset.classes;
  out.domains = dataset.domains;
  out.input_dim = dataset.input_dim;
  out.seed = dataset.seed;
  out.prototypes = dataset.prototypes;
  out.domain_specs = dataset.domain_specs;
  out.samples.reserve(indices.size());
  for (const std::size_t i : indices) out.samples.push_back(dataset.samples.at(i));
  return out;
}

namespace {

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_indices(
    const SyntheticDataset& dataset, const std::vector<std::size_t>& pool, double train_fraction,
    Rng& rng) {
  if (!(train_fraction > 0.0) || train_fraction > 1.0) {
    throw ConfigError("train_fraction must be in (0, 1]");
  }
  std::map<std::pair<int, int>, std::vector<std::size_t>> cells;
  for (const std::size_t i : pool) {
    const Sample& s = dataset.samples[i];
    cells[{s.domain, s.label}].push_back(i);
  }
  std::vector<std::size_t> first;
  std::vector<std::size_t> second;
  for (auto& [key, members] : cells) {
    rng.shuffle(members);
    const auto n_train = static_cast<std::size_t>(
        std::llround(train_fraction * static_cast<double>(members.size())));
    // Singleton cells stay in the first part.
    const std::size_t cut = std::max<std::size_t>(1, n_train);
    for (std::size_t j = 0; j < members.size(); ++j) (j < cut ? first : second).push_back(members[j]);
  }
  std::sort(first.begin(), first.end());
  std::sort(second.begin(), second.end());
  return {std::move(first), std::move(second)};
}

}  // namespace

std::pair<SyntheticDataset, SyntheticDataset> stratified_split(const SyntheticDataset& dataset,
                                                               double train_fraction, Rng& rng) {
  std::vector<std::size_t> all(dataset.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  auto [first, second] = stratified_indices(dataset, all, train_fraction, rng);
  return {subset(dataset, first), subset(dataset, second)};
}

DatasetSplit leave_one_domain_out_split(const SyntheticDataset& dataset, int held_out_domain,
                                        double train_fraction, Rng& rng) {
  if (held_out_domain < 0 || static_cast<std::size_t>(held_out_domain) >= dataset.domains) {
    throw RangeError("held-out domain " + std::to_string(held_out_domain) + " outside [0, " +
                     std::to_string(dataset.domains) + ")");
  }
  std::vector<std::size_t> test;
  std::vector<std::size_t> rest;
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
    (dataset.samples[i].domain == held_out_domain ? test : rest).push_back(i);
  }
  auto [train, val] = stratified_indices(dataset, rest, train_fraction, rng);
  return DatasetSplit{subset(dataset, train), subset(dataset, val), subset(dataset, test)};
}

std::vector<std::size_t> longtail_class_counts(const LongTailConfig& cfg) {
  if (cfg.classes < 2) throw ConfigError("long-tail needs at least 2 classes");
  if (!(cfg.imbalance_ratio >= 1.0)) throw ConfigError("imbalance ratio must be >= 1");
  if (static_cast<double>(cfg.head_count) < cfg.imbalance_ratio) {
    throw ConfigError("head_count " + std::to_string(cfg.head_count) +
                      " below imbalance ratio leaves an empty tail class");
  }
  std::vector<std::size_t> counts(cfg.classes);
  const double denom = static_cast<double>(cfg.classes - 1);
  for (std::size_t c = 0; c < cfg.classes; ++c) {
    const double n = static_cast<double>(cfg.head_count) *
                     std::pow(cfg.imbalance_ratio, -static_cast<double>(c) / denom);
    counts[c] = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(n)));
  }
  return counts;
}

FrequencyGroup frequency_group(std::size_t class_index, std::size_t classes) {
  const std::size_t third = (3 * class_index) / classes;
  return third == 0 ? FrequencyGroup::Many : third == 1 ? FrequencyGroup::Medium : FrequencyGroup::Few;
}

SyntheticDataset generate_longtail(const LongTailConfig& cfg, std::size_t input_dim, Rng& rng) {
  const auto counts = longtail_class_counts(cfg);
  Rng proto_rng = rng.split("prototypes");
  Rng sample_rng = rng.split("samples");
  SyntheticDataset ds;
  ds.classes = cfg.classes;
  ds.domains = 1;
  ds.input_dim = input_dim;
  ds.prototypes =
      draw_prototypes(cfg.classes, input_dim, cfg.prototype_radius, cfg.min_separation, proto_rng);
  DomainSpec identity;
  identity.noise_std = cfg.noise_std;
  ds.domain_specs = {identity};
  for (std::size_t c = 0; c < cfg.classes; ++c) {
    for (std::size_t i = 0; i < counts[c]; ++i) {
      ds.samples.push_back(draw_sample(ds.prototypes[c], identity, static_cast<int>(c),
                                       cfg.within_class_std, sample_rng));
    }
  }
  return ds;
}

SyntheticDataset sample_balanced_like(const SyntheticDataset& like, std::size_t per_class,
                                      double within_class_std, double noise_std, Rng& rng) {
  SyntheticDataset ds;
  ds.classes = like.classes;
  ds.domains = 1;
  ds.input_dim = like.input_dim;
  ds.seed = like.seed;
  ds.prototypes = like.prototypes;
  DomainSpec identity;
  identity.noise_std = noise_std;
  ds.domain_specs = {identity};
  for (std::size_t c = 0; c < like.classes; ++c) {
    for (std::size_t i = 0; i < per_class; ++i) {
      ds.samples.push_back(
          draw_sample(like.prototypes[c], identity, static_cast<int>(c), within_class_std, rng));
    }
  }
  return ds;
}

}  // namespace latentdr
