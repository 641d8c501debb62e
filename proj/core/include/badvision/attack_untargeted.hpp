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

#ifndef BADVISION_ATTACK_UNTARGETED_HPP_
#define BADVISION_ATTACK_UNTARGETED_HPP_

#include <cstdint>

#include <nlohmann/json.hpp>

#include "badvision/attack_targeted.hpp"
#include "badvision/data.hpp"
#include "badvision/encoders.hpp"
#include "badvision/perturbation.hpp"
#include "badvision/trigger.hpp"

// Untargeted variant: no target image anywhere in this module.
namespace badvision {

struct UntargetedConfig {
  double lambda3 = 1.0;
  double lambda4 = 1.0;
  double epsilon1 = 8.0 / 255.0;
  TriggerOptConfig trigger;  // stage-one schedule (Adam, cosine annealing)
  std::size_t epochs = 60;
  double lr = 0.01;
  std::size_t batch_size = 4;

  void validate() const;
  nlohmann::json to_json() const;
};

// mean cos(f0(x), f0(clamp(x + delta))); `grad` receives dL/ddelta.
double untargeted_trigger_loss(const Encoder& clean, const ImageBatch& images, std::span<const double> delta,
                               std::vector<double>* grad = nullptr);

// Minimizes untargeted_trigger_loss under ||delta||_inf <= epsilon with the
// stage-one optimizer. history[i].mean_loss is the epoch-mean loss.
TriggerResult optimize_untargeted_trigger(const Encoder& clean, const ShadowDataset& shadow, double epsilon,
                                          const TriggerOptConfig& cfg, std::uint64_t seed,
                                          const PerturbationObserver& observer = {});

// +mean cos(f'(x + delta), f'(x)); gradients flow through both branches.
double separation_loss(const Encoder& trainable, const ImageBatch& images, const Perturbation& delta,
                       std::span<double> param_grad = {}, double weight = 1.0);
// +pairwise_mean_cos(f'(x + delta)); `triggered` already stamped, N >= 2.
double scatter_loss(const Encoder& trainable, const ImageBatch& triggered, std::span<double> param_grad = {},
                    double weight = 1.0);

// Fine-tunes pair.trainable() on L_un = L_s + lambda3 * L_p + lambda4 * L_u
// with the trigger frozen. Recorded StepLosses map effectiveness -> L_s,
// utility -> L_u, focus -> L_p.
BackdooredEncoder train_untargeted(EncoderPair& pair, const ShadowDataset& shadow, const Perturbation& trigger,
                                   const UntargetedConfig& cfg, std::uint64_t seed,
                                   const TrainingObserver& observer = {});

}  // namespace badvision

#endif  // BADVISION_ATTACK_UNTARGETED_HPP_
