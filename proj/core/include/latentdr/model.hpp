#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "latentdr/operators.hpp"
#include "latentdr/rng.hpp"
#include "latentdr/tape.hpp"
#include "latentdr/tensor.hpp"

namespace latentdr {

struct ModelConfig {
  std::size_t input_dim = 32;
  std::vector<std::size_t> hidden = {256, 128};
  std::size_t latent_dim = 64;
  std::size_t classes = 7;
  /// One classifier for all three loss terms. When false a second classifier
  /// scores the degraded and restored latents.
  bool share_classifier = true;
  /// Build the degradation/restoration pair. Inference never needs them.
  bool with_operators = true;
  OperatorConfig operators;
};

struct Linear {
  Parameter* weight = nullptr;  // [in, out]
  Parameter* bias = nullptr;    // [out]
};

/// MLP f: input_dim -> hidden... -> latent_dim with GELU between layers and a
/// linear output.
struct Encoder {
  std::vector<Linear> layers;
  std::size_t input_dim = 0;
  std::size_t latent_dim = 0;
};

/// Affine g: latent_dim -> classes.
struct Classifier {
  Linear affine;
  std::size_t latent_dim = 0;
  std::size_t classes = 0;
};

/// Encoder, classifier, and the train-only degradation/restoration operators,
/// all backed by one parameter registry.
///
/// The registry holds stable addresses, so a bundle is move-only; use
/// `clone()` for a deep copy.
class ModelBundle {
 public:
  ModelBundle(const ModelConfig& config, Rng rng);

  ModelBundle(ModelBundle&&) noexcept = default;
  ModelBundle& operator=(ModelBundle&&) noexcept = default;
  ModelBundle(const ModelBundle&) = delete;
  ModelBundle& operator=(const ModelBundle&) = delete;

  [[nodiscard]] ModelBundle clone() const;
  /// Encoder and classifier only, with values copied from this bundle.
  [[nodiscard]] ModelBundle inference_only() const;

  /// z = f(x).
  Var encode(Var x) const;
  /// Logits g(z) from the primary classifier.
  Var classify(Var z) const;
  /// Classifier used for the degraded/restored terms: the primary one when
  /// shared, the auxiliary one otherwise.
  Var classify_augmented(Var z) const;

  /// argmax g(f(x)), lowest index on ties. Never touches the operators.
  [[nodiscard]] std::vector<int> predict(const Tensor& x) const;
  /// Latents f(x) without recording gradients.
  [[nodiscard]] Tensor latents(const Tensor& x) const;

  [[nodiscard]] bool has_operators() const noexcept { return degrader_.has_value(); }
  /// Drops the operator handles; their parameters remain in the registry.
  void detach_operators() noexcept;
  [[nodiscard]] const DegradationOperator& degrader() const;
  [[nodiscard]] const RestorationOperator& restorer() const;

  [[nodiscard]] const Encoder& encoder() const noexcept { return encoder_; }
  [[nodiscard]] const Classifier& classifier() const noexcept { return classifier_; }
  [[nodiscard]] const Classifier& augmented_classifier() const noexcept;
  [[nodiscard]] const ModelConfig& config() const noexcept { return config_; }

  ParameterRegistry& registry() noexcept { return registry_; }
  [[nodiscard]] const ParameterRegistry& registry() const noexcept { return registry_; }

 private:
  ModelConfig config_;
  ParameterRegistry registry_;
  Encoder encoder_;
  Classifier classifier_;
  std::optional<Classifier> aux_classifier_;
  std::optional<DegradationOperator> degrader_;
  std::optional<RestorationOperator> restorer_;
};

/// Free-function forms of the bundle's forward pieces.
Var encode(const ModelBundle& bundle, Var x);
Var classify(const ModelBundle& bundle, Var z);
std::vector<int> inference_forward(const ModelBundle& bundle, const Tensor& x);

}  // namespace latentdr
