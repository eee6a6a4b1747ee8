#include "latentdr/attention.hpp"

#include <cmath>

#include "latentdr/errors.hpp"

namespace latentdr {

std::size_t pool_subset_size(double fraction, std::size_t batch) {
  if (!(fraction > 0.0) || fraction > 1.0) {
    throw ConfigError("pool subset fraction must be in (0, 1], got " + std::to_string(fraction));
  }
  const auto k = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(batch) - 1e-12));
  return std::max<std::size_t>(1, std::min(k, batch));
}

Tensor init_weight(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Tensor w({fan_in, fan_out});
  for (double& v : w.values()) v = rng.uniform(-bound, bound);
  return w;
}

AttentionWeights AttentionWeights::create(ParameterRegistry& registry, const std::string& prefix,
                                          std::size_t model_dim, std::size_t heads,
                                          std::size_t head_dim, Rng& rng) {
  if (model_dim == 0 || heads == 0 || head_dim == 0) {
    throw ConfigError("attention dimensions must be positive");
  }
  const std::size_t inner = heads * head_dim;
  AttentionWeights w;
  w.model_dim = model_dim;
  w.heads = heads;
  w.head_dim = head_dim;
  w.w_q = &registry.add(prefix + ".w_q", init_weight(model_dim, inner, rng));
  w.w_k = &registry.add(prefix + ".w_k", init_weight(model_dim, inner, rng));
  w.w_v = &registry.add(prefix + ".w_v", init_weight(model_dim, inner, rng));
  w.w_out = &registry.add(prefix + ".w_out", init_weight(inner, model_dim, rng));
  return w;
}

FeedForward FeedForward::create(ParameterRegistry& registry, const std::string& prefix,
                                std::size_t model_dim, std::size_t hidden_dim, Rng& rng) {
  if (model_dim == 0 || hidden_dim == 0) throw ConfigError("feed-forward dimensions must be positive");
  FeedForward ff;
  ff.w1 = &registry.add(prefix + ".w1", init_weight(model_dim, hidden_dim, rng));
  ff.b1 = &registry.add(prefix + ".b1", Tensor({hidden_dim}));
  ff.w2 = &registry.add(prefix + ".w2", init_weight(hidden_dim, model_dim, rng));
  ff.b2 = &registry.add(prefix + ".b2", Tensor({model_dim}));
  return ff;
}

LayerNormParams LayerNormParams::create(ParameterRegistry& registry, const std::string& prefix,
                                        std::size_t model_dim) {
  LayerNormParams ln;
  ln.gain = &registry.add(prefix + ".gain", Tensor({model_dim}, 1.0));
  ln.bias = &registry.add(prefix + ".bias", Tensor({model_dim}));
  return ln;
}

Var multi_head_attention(Var queries, Var context, const AttentionWeights& w, double dropout_rate,
                         bool training, Rng& rng, AttentionTrace* trace) {
  if (queries.value().rank() != 2 || context.value().rank() != 2) {
    throw DimensionError("attention inputs must be matrices");
  }
  if (queries.value().cols() != w.model_dim || context.value().cols() != w.model_dim) {
    throw DimensionError("attention: inputs " + shape_string(queries.shape()) + " and " +
                         shape_string(context.shape()) + " do not match model dim " +
                         std::to_string(w.model_dim));
  }
  Tape& tape = queries.tape();
  const Var q = matmul(queries, tape.param(*w.w_q));
  const Var k = matmul(context, tape.param(*w.w_k));
  const Var v = matmul(context, tape.param(*w.w_v));
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(w.head_dim));

  std::vector<Var> heads;
  heads.reserve(w.heads);
  if (trace != nullptr) trace->probabilities.clear();
  for (std::size_t h = 0; h < w.heads; ++h) {
    const std::size_t lo = h * w.head_dim;
    const std::size_t hi = lo + w.head_dim;
    const Var qh = w.heads == 1 ? q : slice_cols(q, lo, hi);
    const Var kh = w.heads == 1 ? k : slice_cols(k, lo, hi);
    const Var vh = w.heads == 1 ? v : slice_cols(v, lo, hi);
    const Var probs = softmax_rows(scale(matmul(qh, transpose(kh)), inv_sqrt_dk));
    if (trace != nullptr) trace->probabilities.push_back(probs.value().detached());
    heads.push_back(matmul(probs, vh));
  }
  const Var merged = w.heads == 1 ? heads.front() : concat_cols(heads);
  const Var out = matmul(merged, tape.param(*w.w_out));
  return dropout(out, dropout_rate, training, rng);
}

Var self_attention(Var z, const AttentionWeights& w, double dropout_rate, bool training, Rng& rng,
                   AttentionTrace* trace) {
  return multi_head_attention(z, z, w, dropout_rate, training, rng, trace);
}

Var cross_attention(Var z_query, Var z_context, const AttentionWeights& w, double dropout_rate,
                    bool training, Rng& rng, AttentionTrace* trace) {
  return multi_head_attention(z_query, z_context, w, dropout_rate, training, rng, trace);
}

Var pool_mix(Var z, const MixerKind& kind, Rng& rng, PoolTrace* trace) {
  if (z.value().rank() != 2) throw DimensionError("pool_mix expects a matrix");
  const std::size_t b = z.value().rows();
  const std::size_t k = pool_subset_size(kind.subset_fraction, b);
  // The mixer is linear in Z: out = M Z with M[i, j] = 1/k on row i's subset.
  Tensor mixing({b, b});
  if (trace != nullptr) trace->subsets.assign(b, {});
  const double weight = 1.0 / static_cast<double>(k);
  for (std::size_t i = 0; i < b; ++i) {
    auto subset = rng.sample_without_replacement(b, k);
    for (const std::size_t j : subset) mixing.at(i, j) += weight;
    if (trace != nullptr) trace->subsets[i] = std::move(subset);
  }
  return matmul(z.tape().constant(std::move(mixing)), z);
}

Var feed_forward(Var z, const FeedForward& ff) {
  Tape& tape = z.tape();
  const Var hidden = gelu(add_row_vector(matmul(z, tape.param(*ff.w1)), tape.param(*ff.b1)));
  return add_row_vector(matmul(hidden, tape.param(*ff.w2)), tape.param(*ff.b2));
}

Var apply_layer_norm(Var z, const LayerNormParams& ln) {
  Tape& tape = z.tape();
  return layer_norm(z, tape.param(*ln.gain), tape.param(*ln.bias));
}

Var transformer_layer(Var z_in, const Mixer& mixer, const FeedForward& ff, NormPlacement norm,
                      const LayerNormParams& ln1, const LayerNormParams& ln2,
                      PreLnMixerInput pre_ln_input) {
  if (norm == NormPlacement::PostLN) {
    const Var mixed = apply_layer_norm(add(z_in, mixer(z_in)), ln1);
    return apply_layer_norm(add(mixed, feed_forward(mixed, ff)), ln2);
  }
  const Var normed = apply_layer_norm(z_in, ln1);
  const Var mixer_out = mixer(pre_ln_input == PreLnMixerInput::Normalized ? normed : z_in);
  const Var mixed = add(normed, mixer_out);
  return add(apply_layer_norm(mixed, ln2), feed_forward(mixed, ff));
}

}  // namespace latentdr
