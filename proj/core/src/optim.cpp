// SPDX-License-Identifier: Apache-2.0
#include "modalbridge/optim.hpp"

#include <string>

namespace modalbridge {

void sgd_step(std::vector<Tensor>& params, std::vector<std::vector<float>>& velocity,
              const SgdSettings& settings) {
  if (velocity.size() != params.size()) velocity.resize(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].has_grad()) {
      throw GradError("sgd_step: parameter " + std::to_string(i) + " " +
                      shape_str(params[i].shape()) + " has no gradient");
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto value = params[i].mutable_data();
    const auto grad = params[i].grad();
    auto& v = velocity[i];
    if (v.size() != value.size()) v.assign(value.size(), 0.0f);
    for (std::size_t j = 0; j < value.size(); ++j) {
      v[j] = settings.momentum * v[j] + grad[j] + settings.weight_decay * value[j];
      value[j] -= settings.lr * v[j];
    }
  }
}

Sgd::Sgd(std::vector<Tensor> params, SgdSettings settings)
    : params_(std::move(params)), velocity_(params_.size()), settings_(settings) {
  for (std::size_t i = 0; i < params_.size(); ++i) velocity_[i].assign(params_[i].numel(), 0.0f);
}

void Sgd::step() { sgd_step(params_, velocity_, settings_); }

void Sgd::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace modalbridge
