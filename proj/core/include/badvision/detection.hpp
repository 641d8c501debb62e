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

#ifndef BADVISION_DETECTION_HPP_
#define BADVISION_DETECTION_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "badvision/data.hpp"
#include "badvision/encoders.hpp"
#include "badvision/perturbation.hpp"

namespace badvision {

enum class Verdict { kClean, kBackdoored };

std::string to_string(Verdict verdict);

inline constexpr double kDefaultDetectionThreshold = 0.1;

// Sum |p| divided by the largest L1 norm the input space admits,
// C * H * W * 1.0 for pixels in [0, 1].
double pl1_norm(const Perturbation& p);
double pl1_norm(std::span<const double> values);

// Backdoored iff pl1 < threshold (strict).
Verdict judge(double pl1, double threshold = kDefaultDetectionThreshold);

// Feature-concentration trigger inversion.
//
// Minimizes -pairwise_mean_cos(f(clamp(x + d))) + gamma * PL1(d) over
// d in [-1, 1]^(CxHxW) with Adam on probe minibatches. Every
// `check_every` steps the concentration of the whole probe set is measured:
// if it reaches `concentration_goal` the iterate is a candidate and gamma
// doubles (push the norm down), otherwise gamma halves. The result is the
// smallest-norm candidate, or the most concentrated iterate when none met
// the goal.
struct InversionConfig {
  std::size_t steps = 400;
  double lr = 0.01;
  double gamma_init = 1.0;
  double gamma_min = 1e-4;
  double gamma_max = 1e4;
  double concentration_goal = 0.99;
  std::size_t batch_size = 32;
  std::size_t check_every = 10;
  double threshold = kDefaultDetectionThreshold;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
};

struct InversionTrace {
  std::size_t step = 0;
  double gamma = 0.0;
  double concentration = 0.0;
  double pl1 = 0.0;
  bool goal_met = false;
};

struct InversionResult {
  Perturbation inverted;
  double l1_norm = 0.0;
  double pl1 = 0.0;
  double achieved_concentration = 0.0;
  bool converged = false;  // some iterate reached the concentration goal
  Verdict verdict = Verdict::kClean;
  double threshold = kDefaultDetectionThreshold;
  std::vector<InversionTrace> trace;

  nlohmann::json to_json() const;
};

// Throws ContractError when the probe holds fewer than two images.
InversionResult invert_trigger(const Encoder& encoder, const ImageBatch& probe, const InversionConfig& cfg);

// Mean pairwise cosine of f(clamp(x + d)) over the whole probe.
double feature_concentration(const Encoder& encoder, const ImageBatch& probe, std::span<const double> d);

}  // namespace badvision

#endif  // BADVISION_DETECTION_HPP_
