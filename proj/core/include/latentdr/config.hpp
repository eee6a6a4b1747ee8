#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "latentdr/datagen.hpp"
#include "latentdr/latentdr.hpp"
#include "latentdr/model.hpp"
#include "latentdr/operators.hpp"

namespace latentdr {

enum class TaskKind { DomainGeneralization, LongTail };

std::string_view to_string(TaskKind t) noexcept;
std::string_view to_string(DegradationKind k) noexcept;
std::string_view to_string(NormPlacement n) noexcept;
DegradationKind parse_degradation_kind(std::string_view text);

/// Everything that determines a run. Parsed from a flat `key = value` file;
/// `#` starts a comment. Unknown keys are rejected.
struct ExperimentConfig {
  TaskKind task = TaskKind::DomainGeneralization;

  // Multi-domain corpus.
  std::size_t classes = 7;
  std::size_t domains = 4;
  std::size_t per_cell = 60;
  std::size_t input_dim = 32;
  double prototype_radius = 3.0;
  double min_separation = 0.9;
  double within_class_std = 1.0;
  double noise_std = 0.3;
  double rotation_step = 0.3;
  double scale_step = 0.1;
  double shift_norm = 0.5;
  /// Overrides the rotation of the held-out domain when >= 0.
  double held_out_rotation = -1.0;
  int held_out = 0;
  double train_fraction = 0.8;

  // Long-tail corpus.
  double imbalance_ratio = 100.0;
  std::size_t head_count = 500;
  std::size_t test_per_class = 50;

  // Model.
  std::vector<std::size_t> hidden = {256, 128};
  std::size_t latent_dim = 64;
  DegradationKind op_kind = DegradationKind::SelfAttention;
  /// "auto" selects the task default: PostLN for DG, PreLN for long-tail.
  std::string norm = "auto";
  PreLnMixerInput pre_ln_input = PreLnMixerInput::Normalized;
  std::size_t heads = 4;
  std::size_t head_dim = 0;
  std::size_t ff_dim = 0;
  double dropout = 0.5;
  double restore_dropout = 0.5;
  double subset_fraction = 0.5;
  double noise_scale = 1.0;
  bool share_classifier = true;

  // Training.
  AblationVariant variant = AblationVariant::DPlusR;
  std::size_t batch_size = 32;
  std::size_t epochs = 40;
  double base_lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double lr_adjust = 0.5;
  bool stop_grad_into_encoder_for_l2 = false;
  std::uint64_t seed = 0;

  // Evaluation and orchestration.
  std::size_t eval_batch_size = 96;
  std::size_t grid_seeds = 5;
  std::size_t workers = 1;
  bool dump_latents = false;

  [[nodiscard]] NormPlacement resolved_norm() const;
  [[nodiscard]] ModelConfig model_config() const;
  [[nodiscard]] MultiDomainParams multidomain_params() const;
  [[nodiscard]] LongTailConfig longtail_config() const;

  /// Throws ConfigError on the first invalid field.
  void validate() const;

  /// Canonical (key, value) listing in file order; parses back to an equal
  /// config.
  [[nodiscard]] std::vector<std::pair<std::string, std::string>> to_key_values() const;
};

/// Applies one `key = value` assignment. Throws ConfigError for an unknown key
/// or malformed value.
void apply_config_value(ExperimentConfig& cfg, std::string_view key, std::string_view value);

ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string serialize_config(const ExperimentConfig& cfg);

}  // namespace latentdr
