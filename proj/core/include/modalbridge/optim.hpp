// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "modalbridge/tensor.hpp"

namespace modalbridge {

struct SgdSettings {
  float lr = 0.01f;
  float momentum = 0.9f;
  float weight_decay = 0.0f;
};

// SGD with heavy-ball momentum and L2 weight decay:
//   v <- momentum * v + grad + weight_decay * param
//   param <- param - lr * v
// Velocity buffers are owned per parameter and persist across steps.
class Sgd {
 public:
  Sgd(std::vector<Tensor> params, SgdSettings settings);

  // Throws GradError when a parameter has no populated grad.
  void step();
  void zero_grad();

  void set_lr(float lr) { settings_.lr = lr; }
  const SgdSettings& settings() const { return settings_; }
  const std::vector<Tensor>& params() const { return params_; }
  std::vector<float>& velocity(std::size_t index) { return velocity_.at(index); }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<float>> velocity_;
  SgdSettings settings_;
};

// One-shot update with a caller-owned velocity buffer per parameter.
void sgd_step(std::vector<Tensor>& params, std::vector<std::vector<float>>& velocity,
              const SgdSettings& settings);

}  // namespace modalbridge
