#pragma once

#include <cstddef>
#include <vector>

#include "latentdr/rng.hpp"
#include "latentdr/tape.hpp"

namespace latentdr {

/// LayerNorm epsilon added to the variance inside the square root.
inline constexpr double kLayerNormEps = 1e-5;

// Differentiable operations. Every output is recorded on the tape of its
// inputs; adjoints are exact first derivatives.

/// [M,K] x [K,N] -> [M,N].
Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
/// Elementwise product.
Var mul(Var a, Var b);
Var scale(Var a, double factor);
/// a[M,N] + bias[N] on every row.
Var add_row_vector(Var a, Var bias);
/// Exact (erf-based) GELU.
Var gelu(Var a);
/// Row-wise softmax with max subtraction.
Var softmax_rows(Var a);
/// Per-row standardization with affine gain/bias. Needs at least two columns.
Var layer_norm(Var a, Var gain, Var bias);
/// Inverted dropout: survivors are scaled by 1/(1-rate). Identity when
/// `training` is false or rate is 0. If `mask_out` is non-null the keep-mask
/// (0 or 1 per element) is written there.
Var dropout(Var a, double rate, bool training, Rng& rng, std::vector<double>* mask_out = nullptr);
/// Mean over rows of -sum_c target[c] * log_softmax(logits)[c]. Targets are
/// constants and must be probability rows.
Var cross_entropy_soft(Var logits, const Tensor& targets);
/// Sum of all elements, shape {1}.
Var sum(Var a);
Var mean(Var a);
/// Columns [begin, end) of a matrix.
Var slice_cols(Var a, std::size_t begin, std::size_t end);
Var concat_cols(const std::vector<Var>& parts);
/// Same value, no gradient flows to `a`.
Var stop_gradient(Var a);

/// One-hot [B, C] matrix from integer labels.
Tensor one_hot(const std::vector<int>& labels, std::size_t num_classes);
/// Index of the largest entry of each row; ties go to the lowest index.
std::vector<int> argmax_rows(const Tensor& a);

}  // namespace latentdr
