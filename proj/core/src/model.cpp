#include "latentdr/model.hpp"

#include "latentdr/errors.hpp"
#include "latentdr/ops.hpp"

namespace latentdr {
namespace {

Linear make_linear(ParameterRegistry& registry, const std::string& prefix, std::size_t in,
                   std::size_t out, Rng& rng) {
  Linear layer;
  layer.weight = &registry.add(prefix + ".weight", init_weight(in, out, rng));
  layer.bias = &registry.add(prefix + ".bias", Tensor({out}));
  return layer;
}

Classifier make_classifier(ParameterRegistry& registry, const std::string& prefix,
                           std::size_t latent_dim, std::size_t classes, Rng& rng) {
  Classifier c;
  c.affine = make_linear(registry, prefix, latent_dim, classes, rng);
  c.latent_dim = latent_dim;
  c.classes = classes;
  return c;
}

Var apply_linear(Var x, const Linear& layer) {
  Tape& tape = x.tape();
  return add_row_vector(matmul(x, tape.param(*layer.weight)), tape.param(*layer.bias));
}

Var apply_classifier(Var z, const Classifier& c) {
  if (z.value().rank() != 2 || z.value().cols() != c.latent_dim) {
    throw DimensionError("classify: latent " + shape_string(z.shape()) + " does not match d=" +
                         std::to_string(c.latent_dim));
  }
  return apply_linear(z, c.affine);
}

}  // namespace

ModelBundle::ModelBundle(const ModelConfig& config, Rng rng) : config_(config) {
  if (config_.input_dim == 0 || config_.latent_dim == 0) {
    throw ConfigError("encoder dimensions must be positive");
  }
  if (config_.classes < 2) throw ConfigError("need at least 2 classes");

  // Independent init streams keep encoder/classifier init identical whether
  // or not the operators are built.
  Rng enc_rng = rng.split("init.encoder");
  Rng cls_rng = rng.split("init.classifier");
  Rng aux_rng = rng.split("init.classifier_aux");
  Rng deg_rng = rng.split("init.degrader");
  Rng res_rng = rng.split("init.restorer");

  encoder_.input_dim = config_.input_dim;
  encoder_.latent_dim = config_.latent_dim;
  std::size_t width = config_.input_dim;
  std::size_t index = 0;
  for (const std::size_t hidden : config_.hidden) {
    if (hidden == 0) throw ConfigError("hidden widths must be positive");
    encoder_.layers.push_back(
        make_linear(registry_, "encoder.l" + std::to_string(index++), width, hidden, enc_rng));
    width = hidden;
  }
  encoder_.layers.push_back(make_linear(registry_, "encoder.l" + std::to_string(index), width,
                                        config_.latent_dim, enc_rng));

  classifier_ =
      make_classifier(registry_, "classifier", config_.latent_dim, config_.classes, cls_rng);
  if (!config_.share_classifier) {
    aux_classifier_ = make_classifier(registry_, "classifier_aux", config_.latent_dim,
                                      config_.classes, aux_rng);
  }
  if (config_.with_operators) {
    degrader_ = DegradationOperator::create(registry_, "degrader", config_.operators,
                                            config_.latent_dim, deg_rng);
    restorer_ = RestorationOperator::create(registry_, "restorer", config_.operators,
                                            config_.latent_dim, res_rng);
  }
}

ModelBundle ModelBundle::clone() const {
  ModelBundle copy(config_, Rng(0));
  copy.registry_.restore(registry_.snapshot());
  if (!degrader_) copy.detach_operators();
  return copy;
}

ModelBundle ModelBundle::inference_only() const {
  ModelConfig cfg = config_;
  cfg.with_operators = false;
  ModelBundle copy(cfg, Rng(0));
  for (Parameter& p : copy.registry_) {
    const auto& src = registry_.get(p.name).tensor.data();
    std::copy(src.begin(), src.end(), p.tensor.data().begin());
  }
  return copy;
}

Var ModelBundle::encode(Var x) const {
  if (x.value().rank() != 2 || x.value().cols() != encoder_.input_dim) {
    throw DimensionError("encode: input " + shape_string(x.shape()) + " does not match input_dim=" +
                         std::to_string(encoder_.input_dim));
  }
  Var h = x;
  for (std::size_t i = 0; i < encoder_.layers.size(); ++i) {
    h = apply_linear(h, encoder_.layers[i]);
    if (i + 1 < encoder_.layers.size()) h = gelu(h);
  }
  return h;
}

Var ModelBundle::classify(Var z) const { return apply_classifier(z, classifier_); }

Var ModelBundle::classify_augmented(Var z) const {
  return apply_classifier(z, augmented_classifier());
}

const Classifier& ModelBundle::augmented_classifier() const noexcept {
  return aux_classifier_ ? *aux_classifier_ : classifier_;
}

std::vector<int> ModelBundle::predict(const Tensor& x) const {
  Tape tape;
  const Var logits = classify(encode(tape.constant(x.detached())));
  return argmax_rows(logits.value());
}

Tensor ModelBundle::latents(const Tensor& x) const {
  Tape tape;
  return encode(tape.constant(x.detached())).value().detached();
}

void ModelBundle::detach_operators() noexcept {
  degrader_.reset();
  restorer_.reset();
}

const DegradationOperator& ModelBundle::degrader() const {
  if (!degrader_) throw InvariantError("bundle has no degradation operator");
  return *degrader_;
}

const RestorationOperator& ModelBundle::restorer() const {
  if (!restorer_) throw InvariantError("bundle has no restoration operator");
  return *restorer_;
}

Var encode(const ModelBundle& bundle, Var x) { return bundle.encode(x); }

Var classify(const ModelBundle& bundle, Var z) { return bundle.classify(z); }

std::vector<int> inference_forward(const ModelBundle& bundle, const Tensor& x) {
  return bundle.predict(x);
}

}  // namespace latentdr
