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

#ifndef BADVISION_OPTIM_HPP_
#define BADVISION_OPTIM_HPP_

#include <cstddef>
#include <span>
#include <vector>

namespace badvision {

// Adaptive-moment gradient descent over a flat parameter vector
// (beta1 = 0.9, beta2 = 0.999, eps = 1e-8, bias-corrected).
class Adam {
 public:
  explicit Adam(std::size_t size, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  void step(std::span<double> params, std::span<const double> grad, double lr);
  std::size_t steps() const { return t_; }

 private:
  double beta1_;
  double beta2_;
  double eps_;
  std::size_t t_ = 0;
  std::vector<double> m_;
  std::vector<double> v_;
};

// params -= lr * grad
void sgd_step(std::span<double> params, std::span<const double> grad, double lr);

// Cosine annealing from `initial` to 0 over `total_steps` steps:
// lr(t) = initial * (1 + cos(pi * t / total_steps)) / 2.
class CosineAnnealing {
 public:
  CosineAnnealing(double initial, std::size_t total_steps);
  double lr(std::size_t step) const;

 private:
  double initial_;
  std::size_t total_;
};

}  // namespace badvision

#endif  // BADVISION_OPTIM_HPP_
