#pragma once

#include <cstddef>
#include <optional>
#include <string>

#include "latentdr/attention.hpp"
#include "latentdr/tensor.hpp"

namespace latentdr {

enum class DegradationKind {
  SelfAttention,  ///< z + Attn(Z), then residual MLP
  Pool,           ///< z + mean of a random batch subset, then residual MLP
  Gaussian,       ///< z + N(0, noise_scale^2), no parameters
};

/// Hyperparameters shared by the degradation and restoration operators.
/// Zero head/ff dimensions select the per-kind defaults from
/// `resolved_head_dim` / `resolved_ff_dim`.
struct OperatorConfig {
  DegradationKind kind = DegradationKind::SelfAttention;
  NormPlacement norm = NormPlacement::PostLN;
  PreLnMixerInput pre_ln_input = PreLnMixerInput::Normalized;
  std::size_t heads = 4;
  std::size_t head_dim = 0;
  std::size_t ff_dim = 0;
  double dropout_rate = 0.5;
  double restore_dropout_rate = 0.5;
  double subset_fraction = 0.5;
  double noise_scale = 1.0;
};

/// d/4 for self-attention (and Gaussian), d/32 for the pooling variant; never
/// below 1.
std::size_t resolved_head_dim(const OperatorConfig& cfg, std::size_t latent_dim);
/// d/4 for self-attention (and Gaussian), d/8 for the pooling variant.
std::size_t resolved_ff_dim(const OperatorConfig& cfg, std::size_t latent_dim);

struct DegradationOperator {
  DegradationKind kind = DegradationKind::SelfAttention;
  std::optional<AttentionWeights> attention;  // SelfAttention only
  MixerKind mixer;
  FeedForward ff;       // unset for Gaussian
  LayerNormParams ln1;  // unset for Gaussian
  LayerNormParams ln2;  // unset for Gaussian
  NormPlacement norm = NormPlacement::PostLN;
  PreLnMixerInput pre_ln_input = PreLnMixerInput::Normalized;
  double dropout_rate = 0.5;
  double noise_scale = 1.0;

  static DegradationOperator create(ParameterRegistry& registry, const std::string& prefix,
                                    const OperatorConfig& cfg, std::size_t latent_dim, Rng& rng);
  [[nodiscard]] bool has_parameters() const noexcept { return kind != DegradationKind::Gaussian; }
};

struct RestorationOperator {
  AttentionWeights attention;
  FeedForward ff;
  LayerNormParams ln1;
  LayerNormParams ln2;
  NormPlacement norm = NormPlacement::PostLN;
  PreLnMixerInput pre_ln_input = PreLnMixerInput::Normalized;
  double dropout_rate = 0.5;

  static RestorationOperator create(ParameterRegistry& registry, const std::string& prefix,
                                    const OperatorConfig& cfg, std::size_t latent_dim, Rng& rng);
};

/// Intermediate values of one degradation pass, for replay checks.
struct DegradeTrace {
  PoolTrace pool;
  AttentionTrace attention;
  /// Mixer output after dropout (SA/Pool) or the sampled noise (Gaussian).
  Tensor mixer_output;
};

/// Sample-aware degradation of a latent batch. SA and Pool need at least two
/// rows (BatchSizeError otherwise).
Var degrade(Var z, const DegradationOperator& op, bool training, Rng& rng,
            DegradeTrace* trace = nullptr);

/// Cross-attention restoration: queries from the degraded batch, keys and
/// values from the original batch, then a residual MLP.
Var restore(Var z_degraded, Var z_original, const RestorationOperator& op, bool training, Rng& rng,
            AttentionTrace* trace = nullptr);

}  // namespace latentdr
