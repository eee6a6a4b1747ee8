#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "latentdr/tensor.hpp"

namespace latentdr {

struct SgdConfig {
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.0;
};

/// SGD with heavy-ball momentum and L2 weight decay:
///   v <- momentum * v + grad + weight_decay * param
///   param <- param - lr * v
/// Gradients are zeroed after the update. Velocities are keyed by parameter
/// name and created lazily at zero.
class SgdOptimizer {
 public:
  explicit SgdOptimizer(SgdConfig config);

  /// Steps every parameter in the registry with learning rate `lr`.
  void step(ParameterRegistry& registry, double lr);
  void step(ParameterRegistry& registry) { step(registry, config_.lr); }

  [[nodiscard]] const SgdConfig& config() const noexcept { return config_; }
  void reset() { velocity_.clear(); }

 private:
  SgdConfig config_;
  std::unordered_map<std::string, std::vector<double>> velocity_;
};

/// Single step with a caller-owned optimizer state, as a free function.
void sgd_step(ParameterRegistry& registry, SgdOptimizer& state, double lr);

}  // namespace latentdr
