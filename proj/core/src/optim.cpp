// Copyright 2026 The BadVision Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "badvision/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "badvision/common.hpp"

namespace badvision {

Adam::Adam(std::size_t size, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps), m_(size, 0.0), v_(size, 0.0) {}

void Adam::step(std::span<double> params, std::span<const double> grad, double lr) {
  if (params.size() != m_.size() || grad.size() != m_.size()) {
    throw ContractError("Adam: buffer size mismatch");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
    params[i] -= lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
  }
}

void sgd_step(std::span<double> params, std::span<const double> grad, double lr) {
  if (params.size() != grad.size()) throw ContractError("SGD: buffer size mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * grad[i];
}

CosineAnnealing::CosineAnnealing(double initial, std::size_t total_steps)
    : initial_(initial), total_(total_steps) {}

double CosineAnnealing::lr(std::size_t step) const {
  if (total_ == 0) return initial_;
  const double t = static_cast<double>(std::min(step, total_)) / static_cast<double>(total_);
  return initial_ * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

}  // namespace badvision
