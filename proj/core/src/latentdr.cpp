#include "latentdr/latentdr.hpp"

#include <cmath>
#include <string>

#include "latentdr/errors.hpp"
#include "latentdr/ops.hpp"

namespace latentdr {

std::string_view to_string(AblationVariant v) noexcept {
  switch (v) {
    case AblationVariant::ERM: return "ERM";
    case AblationVariant::DOnly: return "D_only";
    case AblationVariant::ROnly: return "R_only";
    case AblationVariant::DPlusR: return "D_plus_R";
  }
  return "unknown";
}

AblationVariant parse_ablation_variant(std::string_view text) {
  if (text == "ERM" || text == "erm") return AblationVariant::ERM;
  if (text == "D_only" || text == "d_only") return AblationVariant::DOnly;
  if (text == "R_only" || text == "r_only") return AblationVariant::ROnly;
  if (text == "D_plus_R" || text == "d_plus_r" || text == "D+R") return AblationVariant::DPlusR;
  throw ConfigError("unknown ablation variant '" + std::string(text) + "'");
}

bool uses_degraded_term(AblationVariant v) noexcept {
  return v == AblationVariant::DOnly || v == AblationVariant::DPlusR;
}

bool uses_restored_term(AblationVariant v) noexcept {
  return v == AblationVariant::ROnly || v == AblationVariant::DPlusR;
}

SoftLabel build_soft_label(const Tensor& one_hot_labels) {
  if (one_hot_labels.rank() != 2) throw DimensionError("soft label expects a [B, C] matrix");
  const std::size_t b = one_hot_labels.rows();
  const std::size_t c = one_hot_labels.cols();
  std::vector<std::size_t> counts(c, 0);
  for (std::size_t r = 0; r < b; ++r) {
    std::size_t ones = 0;
    std::size_t hot = 0;
    for (std::size_t k = 0; k < c; ++k) {
      const double v = one_hot_labels.at(r, k);
      if (v == 1.0) {
        ++ones;
        hot = k;
      } else if (v != 0.0) {
        throw ValidationError("label row " + std::to_string(r) + " is not one-hot");
      }
    }
    if (ones != 1) throw ValidationError("label row " + std::to_string(r) + " is not one-hot");
    ++counts[hot];
  }
  Tensor dist({c});
  for (std::size_t k = 0; k < c; ++k) {
    dist[k] = static_cast<double>(counts[k]) / static_cast<double>(b);
  }
  return SoftLabel{std::move(dist)};
}

LossGraph latentdr_loss(Tape& tape, const Tensor& x, const Tensor& one_hot_labels,
                        const ModelBundle& bundle, Rng& rng, const LossOptions& options) {
  if (x.rank() != 2 || one_hot_labels.rank() != 2 || x.rows() != one_hot_labels.rows()) {
    throw DimensionError("latentdr_loss: inputs " + shape_string(x.shape()) + " and labels " +
                         shape_string(one_hot_labels.shape()) + " disagree");
  }
  const std::size_t b = x.rows();
  const std::size_t c = one_hot_labels.cols();
  const bool wants_operators = options.variant != AblationVariant::ERM;
  if (wants_operators && !bundle.has_operators()) {
    throw InvariantError("variant " + std::string(to_string(options.variant)) +
                         " needs degradation/restoration operators");
  }

  LossGraph g;
  g.z = bundle.encode(tape.constant(x.detached()));
  g.l_original = cross_entropy_soft(bundle.classify(g.z), one_hot_labels);
  g.total = g.l_original;
  g.breakdown.l_original = g.l_original.value().item();

  if (!bundle.has_operators()) {
    g.breakdown.total = g.total.value().item();
    return g;
  }

  const SoftLabel soft = build_soft_label(one_hot_labels);
  g.soft_label = Tensor({b, c});
  for (std::size_t r = 0; r < b; ++r) {
    for (std::size_t k = 0; k < c; ++k) g.soft_label.at(r, k) = soft.distribution[k];
  }

  Rng degrade_rng = rng.fork();
  Rng restore_rng = rng.fork();
  const Var z_in = options.stop_grad_into_encoder_for_degraded ? stop_gradient(g.z) : g.z;
  g.z_degraded = degrade(z_in, bundle.degrader(), options.training, degrade_rng);
  g.z_restored = restore(g.z_degraded, g.z, bundle.restorer(), options.training, restore_rng);
  g.l_degraded = cross_entropy_soft(bundle.classify_augmented(g.z_degraded), g.soft_label);
  g.l_restored = cross_entropy_soft(bundle.classify_augmented(g.z_restored), one_hot_labels);

  g.breakdown.l_degraded = g.l_degraded.value().item();
  g.breakdown.l_restored = g.l_restored.value().item();
  g.breakdown.degraded_used = uses_degraded_term(options.variant);
  g.breakdown.restored_used = uses_restored_term(options.variant);
  if (g.breakdown.degraded_used) g.total = add(g.total, g.l_degraded);
  if (g.breakdown.restored_used) g.total = add(g.total, g.l_restored);
  g.breakdown.total = g.total.value().item();
  return g;
}

double effective_learning_rate(const TrainStepOptions& options) noexcept {
  return options.variant == AblationVariant::DPlusR ? options.base_lr * options.lr_adjust
                                                    : options.base_lr;
}

LossBreakdown training_step(const Tensor& x, const Tensor& one_hot_labels, ModelBundle& bundle,
                            SgdOptimizer& optimizer, const TrainStepOptions& options, Rng& rng) {
  Tape tape;
  LossOptions loss_options;
  loss_options.variant = options.variant;
  loss_options.training = true;
  loss_options.stop_grad_into_encoder_for_degraded = options.stop_grad_into_encoder_for_degraded;
  const LossGraph graph = latentdr_loss(tape, x, one_hot_labels, bundle, rng, loss_options);
  if (!std::isfinite(graph.breakdown.total)) {
    throw NumericalError("non-finite loss " + std::to_string(graph.breakdown.total));
  }
  tape.backward(graph.total);
  optimizer.step(bundle.registry(), effective_learning_rate(options));
  return graph.breakdown;
}

}  // namespace latentdr
