#include "latentdr/operators.hpp"

#include <algorithm>

#include "latentdr/errors.hpp"

namespace latentdr {

std::size_t resolved_head_dim(const OperatorConfig& cfg, std::size_t latent_dim) {
  if (cfg.head_dim != 0) return cfg.head_dim;
  const std::size_t divisor = cfg.kind == DegradationKind::Pool ? 32 : 4;
  return std::max<std::size_t>(1, latent_dim / divisor);
}

std::size_t resolved_ff_dim(const OperatorConfig& cfg, std::size_t latent_dim) {
  if (cfg.ff_dim != 0) return cfg.ff_dim;
  const std::size_t divisor = cfg.kind == DegradationKind::Pool ? 8 : 4;
  return std::max<std::size_t>(1, latent_dim / divisor);
}

DegradationOperator DegradationOperator::create(ParameterRegistry& registry,
                                                const std::string& prefix,
                                                const OperatorConfig& cfg, std::size_t latent_dim,
                                                Rng& rng) {
  if (!(cfg.dropout_rate >= 0.0) || cfg.dropout_rate >= 1.0) {
    throw ConfigError("degradation dropout must be in [0, 1)");
  }
  if (!(cfg.noise_scale >= 0.0)) throw ConfigError("noise scale must be nonnegative");
  DegradationOperator op;
  op.kind = cfg.kind;
  op.norm = cfg.norm;
  op.pre_ln_input = cfg.pre_ln_input;
  op.dropout_rate = cfg.dropout_rate;
  op.noise_scale = cfg.noise_scale;
  if (cfg.kind == DegradationKind::Gaussian) return op;

  if (cfg.kind == DegradationKind::SelfAttention) {
    op.mixer.variant = MixerKind::Variant::SelfAttention;
    op.attention = AttentionWeights::create(registry, prefix + ".attn", latent_dim, cfg.heads,
                                            resolved_head_dim(cfg, latent_dim), rng);
  } else {
    op.mixer.variant = MixerKind::Variant::PoolSubset;
    op.mixer.subset_fraction = cfg.subset_fraction;
    pool_subset_size(cfg.subset_fraction, 1);  // validates the fraction
  }
  op.ff = FeedForward::create(registry, prefix + ".ff", latent_dim,
                              resolved_ff_dim(cfg, latent_dim), rng);
  op.ln1 = LayerNormParams::create(registry, prefix + ".ln1", latent_dim);
  op.ln2 = LayerNormParams::create(registry, prefix + ".ln2", latent_dim);
  return op;
}

RestorationOperator RestorationOperator::create(ParameterRegistry& registry,
                                                const std::string& prefix,
                                                const OperatorConfig& cfg, std::size_t latent_dim,
                                                Rng& rng) {
  if (!(cfg.restore_dropout_rate >= 0.0) || cfg.restore_dropout_rate >= 1.0) {
    throw ConfigError("restoration dropout must be in [0, 1)");
  }
  RestorationOperator op;
  op.norm = cfg.norm;
  op.pre_ln_input = cfg.pre_ln_input;
  op.dropout_rate = cfg.restore_dropout_rate;
  op.attention = AttentionWeights::create(registry, prefix + ".attn", latent_dim, cfg.heads,
                                          resolved_head_dim(cfg, latent_dim), rng);
  op.ff = FeedForward::create(registry, prefix + ".ff", latent_dim,
                              resolved_ff_dim(cfg, latent_dim), rng);
  op.ln1 = LayerNormParams::create(registry, prefix + ".ln1", latent_dim);
  op.ln2 = LayerNormParams::create(registry, prefix + ".ln2", latent_dim);
  return op;
}

Var degrade(Var z, const DegradationOperator& op, bool training, Rng& rng, DegradeTrace* trace) {
  if (z.value().rank() != 2) throw DimensionError("degrade expects a [B, d] latent batch");
  const std::size_t b = z.value().rows();

  if (op.kind == DegradationKind::Gaussian) {
    Tensor noise(z.shape());
    if (op.noise_scale > 0.0) {
      for (double& v : noise.values()) v = op.noise_scale * rng.normal();
    }
    if (trace != nullptr) trace->mixer_output = noise.detached();
    return add(z, z.tape().constant(std::move(noise)));
  }

  if (b < 2) {
    throw BatchSizeError("sample-mixing degradation needs a batch of at least 2, got " +
                         std::to_string(b));
  }
  Rng mixer_rng = rng.fork();
  Rng dropout_rng = rng.fork();

  const Mixer mixer = [&](Var input) {
    Var mixed;
    if (op.kind == DegradationKind::SelfAttention) {
      mixed = self_attention(input, *op.attention, op.dropout_rate, training, dropout_rng,
                             trace != nullptr ? &trace->attention : nullptr);
    } else {
      mixed = dropout(pool_mix(input, op.mixer, mixer_rng, trace != nullptr ? &trace->pool : nullptr),
                      op.dropout_rate, training, dropout_rng);
    }
    if (trace != nullptr) trace->mixer_output = mixed.value().detached();
    return mixed;
  };
  return transformer_layer(z, mixer, op.ff, op.norm, op.ln1, op.ln2, op.pre_ln_input);
}

Var restore(Var z_degraded, Var z_original, const RestorationOperator& op, bool training, Rng& rng,
            AttentionTrace* trace) {
  if (z_degraded.value().rank() != 2 || z_original.value().rank() != 2) {
    throw DimensionError("restore expects [B, d] latent batches");
  }
  if (z_degraded.shape() != z_original.shape()) {
    throw DimensionError("restore: degraded " + shape_string(z_degraded.shape()) +
                         " vs original " + shape_string(z_original.shape()));
  }
  Rng dropout_rng = rng.fork();
  const Mixer mixer = [&](Var queries) {
    return cross_attention(queries, z_original, op.attention, op.dropout_rate, training,
                           dropout_rng, trace);
  };
  return transformer_layer(z_degraded, mixer, op.ff, op.norm, op.ln1, op.ln2, op.pre_ln_input);
}

}  // namespace latentdr
