#include "latentdr/optim.hpp"

#include "latentdr/errors.hpp"

namespace latentdr {

SgdOptimizer::SgdOptimizer(SgdConfig config) : config_(config) {
  if (!(config_.lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(config_.momentum >= 0.0) || config_.momentum >= 1.0) {
    throw ConfigError("momentum must be in [0, 1)");
  }
  if (!(config_.weight_decay >= 0.0)) throw ConfigError("weight decay must be nonnegative");
}

void SgdOptimizer::step(ParameterRegistry& registry, double lr) {
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  for (Parameter& p : registry) {
    if (!p.tensor.has_grad()) {
      throw InvariantError("parameter '" + p.name + "' has no gradient buffer");
    }
  }
  for (Parameter& p : registry) {
    auto& v = velocity_[p.name];
    auto values = p.tensor.values();
    auto grad = p.tensor.grad();
    if (v.size() != values.size()) v.assign(values.size(), 0.0);
    for (std::size_t i = 0; i < values.size(); ++i) {
      v[i] = config_.momentum * v[i] + grad[i] + config_.weight_decay * values[i];
      values[i] -= lr * v[i];
    }
    p.tensor.zero_grad();
  }
}

void sgd_step(ParameterRegistry& registry, SgdOptimizer& state, double lr) {
  state.step(registry, lr);
}

}  // namespace latentdr
