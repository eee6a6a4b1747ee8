#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "latentdr/ops.hpp"
#include "latentdr/rng.hpp"
#include "latentdr/tape.hpp"
#include "latentdr/tensor.hpp"

namespace latentdr {

enum class NormPlacement {
  PostLN,  ///< Z' = LN(Z + Mix(Z));  out = LN(Z' + FF(Z'))
  PreLN,   ///< Z' = LN(Z) + Mix(.);  out = LN(Z') + FF(Z')
};

/// Which input the mixer sees under PreLN. The standard pre-norm block mixes
/// LN(Z); `Raw` mixes Z itself.
enum class PreLnMixerInput { Normalized, Raw };

struct MixerKind {
  enum class Variant { SelfAttention, PoolSubset };
  Variant variant = Variant::SelfAttention;
  /// Fraction of the batch averaged per query (PoolSubset only).
  double subset_fraction = 0.5;
};

/// Rows drawn per query by the pooling mixer: ceil(fraction * batch), at
/// least one. Throws ConfigError for a fraction outside (0, 1].
std::size_t pool_subset_size(double fraction, std::size_t batch);

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialized [fan_in, fan_out]
/// weight.
Tensor init_weight(std::size_t fan_in, std::size_t fan_out, Rng& rng);

/// Multi-head projection weights. Pointers refer into the owning registry.
struct AttentionWeights {
  Parameter* w_q = nullptr;    ///< [d, heads*head_dim]
  Parameter* w_k = nullptr;    ///< [d, heads*head_dim]
  Parameter* w_v = nullptr;    ///< [d, heads*head_dim]
  Parameter* w_out = nullptr;  ///< [heads*head_dim, d]
  std::size_t model_dim = 0;
  std::size_t heads = 0;
  std::size_t head_dim = 0;

  static AttentionWeights create(ParameterRegistry& registry, const std::string& prefix,
                                 std::size_t model_dim, std::size_t heads, std::size_t head_dim,
                                 Rng& rng);
  [[nodiscard]] std::size_t inner_dim() const noexcept { return heads * head_dim; }
};

/// Two-layer GELU MLP d -> d_ff -> d.
struct FeedForward {
  Parameter* w1 = nullptr;
  Parameter* b1 = nullptr;
  Parameter* w2 = nullptr;
  Parameter* b2 = nullptr;

  static FeedForward create(ParameterRegistry& registry, const std::string& prefix,
                            std::size_t model_dim, std::size_t hidden_dim, Rng& rng);
};

struct LayerNormParams {
  Parameter* gain = nullptr;
  Parameter* bias = nullptr;

  static LayerNormParams create(ParameterRegistry& registry, const std::string& prefix,
                                std::size_t model_dim);
};

/// Per-head attention probabilities captured during a forward pass.
struct AttentionTrace {
  std::vector<Tensor> probabilities;
};

/// Subsets drawn by the pooling mixer, one list of row indices per query.
struct PoolTrace {
  std::vector<std::vector<std::size_t>> subsets;
};

/// Scaled dot-product attention with queries from `queries` and keys/values
/// from `context`. Dropout is applied to the projected output.
Var multi_head_attention(Var queries, Var context, const AttentionWeights& w, double dropout_rate,
                         bool training, Rng& rng, AttentionTrace* trace = nullptr);

/// Attention over the batch: every row attends to every row of Z. No
/// positional information, so the op is permutation-equivariant.
Var self_attention(Var z, const AttentionWeights& w, double dropout_rate, bool training, Rng& rng,
                   AttentionTrace* trace = nullptr);

/// Queries from `z_query` [B,d], keys and values from `z_context` [B',d].
/// Output has B rows and does not depend on the row order of the context.
Var cross_attention(Var z_query, Var z_context, const AttentionWeights& w, double dropout_rate,
                    bool training, Rng& rng, AttentionTrace* trace = nullptr);

/// Zero-parameter token mixer: row i of the output is the mean of a fresh
/// uniform subset of the rows of Z. The residual is added by the caller.
Var pool_mix(Var z, const MixerKind& kind, Rng& rng, PoolTrace* trace = nullptr);

Var feed_forward(Var z, const FeedForward& ff);

Var apply_layer_norm(Var z, const LayerNormParams& ln);

using Mixer = std::function<Var(Var)>;

/// One transformer block around an arbitrary token mixer.
Var transformer_layer(Var z_in, const Mixer& mixer, const FeedForward& ff, NormPlacement norm,
                      const LayerNormParams& ln1, const LayerNormParams& ln2,
                      PreLnMixerInput pre_ln_input = PreLnMixerInput::Normalized);

}  // namespace latentdr
