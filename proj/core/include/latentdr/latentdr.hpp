#pragma once

#include <string_view>

#include "latentdr/model.hpp"
#include "latentdr/operators.hpp"
#include "latentdr/optim.hpp"
#include "latentdr/tape.hpp"

namespace latentdr {

/// Which loss terms drive the update.
enum class AblationVariant {
  ERM,      ///< original term only
  DOnly,    ///< original + degraded
  ROnly,    ///< original + restored
  DPlusR,   ///< all three
};

std::string_view to_string(AblationVariant v) noexcept;
AblationVariant parse_ablation_variant(std::string_view text);
[[nodiscard]] bool uses_degraded_term(AblationVariant v) noexcept;
[[nodiscard]] bool uses_restored_term(AblationVariant v) noexcept;

/// Batch-average label distribution.
struct SoftLabel {
  Tensor distribution;  // [C]
};

/// Mean of the one-hot rows. Throws ValidationError for a row that is not
/// exactly one-hot.
SoftLabel build_soft_label(const Tensor& one_hot_labels);

/// Loss values of one step. Terms the variant drops are still evaluated when
/// the operators exist, but flagged unused and excluded from `total`.
struct LossBreakdown {
  double l_original = 0.0;
  double l_degraded = 0.0;
  double l_restored = 0.0;
  double total = 0.0;
  bool degraded_used = false;
  bool restored_used = false;
};

struct LossOptions {
  AblationVariant variant = AblationVariant::DPlusR;
  bool training = true;
  /// Feed the degrader a gradient-stopped copy of the latents.
  bool stop_grad_into_encoder_for_degraded = false;
};

/// Graph handles of one loss evaluation.
struct LossGraph {
  Var z;
  Var z_degraded;   // invalid when the bundle has no operators
  Var z_restored;   // invalid when the bundle has no operators
  Var l_original;
  Var l_degraded;
  Var l_restored;
  Var total;
  Tensor soft_label;  // [B, C], the batch distribution on every row
  LossBreakdown breakdown;
};

/// Z = f(x); Z_d = D(Z); Z_r = R(Z_d, Z);
/// total = CE(g(Z), Y) + CE(g(Z_d), y~) + CE(g(Z_r), Y), restricted to the
/// variant's terms.
LossGraph latentdr_loss(Tape& tape, const Tensor& x, const Tensor& one_hot_labels,
                        const ModelBundle& bundle, Rng& rng, const LossOptions& options = {});

struct TrainStepOptions {
  AblationVariant variant = AblationVariant::DPlusR;
  double base_lr = 0.01;
  /// Multiplier applied to the learning rate for the three-term loss.
  double lr_adjust = 0.5;
  bool stop_grad_into_encoder_for_degraded = false;
};

/// base_lr * lr_adjust for D+R, base_lr otherwise.
double effective_learning_rate(const TrainStepOptions& options) noexcept;

/// Forward, backward over the variant's total, then one SGD step.
LossBreakdown training_step(const Tensor& x, const Tensor& one_hot_labels, ModelBundle& bundle,
                            SgdOptimizer& optimizer, const TrainStepOptions& options, Rng& rng);

}  // namespace latentdr
