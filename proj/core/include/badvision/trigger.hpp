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

#ifndef BADVISION_TRIGGER_HPP_
#define BADVISION_TRIGGER_HPP_

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "badvision/data.hpp"
#include "badvision/encoders.hpp"
#include "badvision/perturbation.hpp"

namespace badvision {

// Stage-one optimizer settings. Defaults: Adam at 1e-3, cosine-annealed to
// zero over every step of the run, 10 epochs, batches of 4.
struct TriggerOptConfig {
  std::size_t epochs = 10;
  double initial_lr = 1e-3;
  std::size_t batch_size = 4;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double lr = 0.0;  // learning rate of the epoch's last step
};

nlohmann::json to_json(const std::vector<EpochRecord>& history);

struct TriggerResult {
  Perturbation trigger;
  std::vector<EpochRecord> history;
  double baseline_loss = 0.0;  // loss with a zero trigger over the whole set
  double final_loss = 0.0;     // loss of the returned trigger over the whole set
};

// Called after every projected update with the step index and the iterate.
using PerturbationObserver = std::function<void(std::size_t step, std::span<const double> values)>;

// -mean_i cos(f(clamp(x_i + delta)), e_tar). When `grad` is non-null it
// receives dL/ddelta.
double trigger_loss(const Encoder& clean, const ImageBatch& images, std::span<const double> delta,
                    const Eigen::RowVectorXd& target_embedding, std::vector<double>* grad = nullptr);
double trigger_loss(const Encoder& clean, const ImageBatch& images, const Perturbation& delta,
                    const TargetSpec& target);

// Same objective evaluated over a large set in chunks, value only.
double trigger_loss_full(const Encoder& clean, const ImageBatch& images, std::span<const double> delta,
                         const Eigen::RowVectorXd& target_embedding);

// Universal trigger against the frozen clean encoder: uniform init projected
// to the budget, then Adam steps on minibatches, each followed by projection
// onto [-epsilon, epsilon]. The returned values are rounded to float32.
// Throws ContractError on an empty shadow set or epsilon outside [0, 1].
TriggerResult optimize_trigger(const Encoder& clean, const ShadowDataset& shadow, const TargetSpec& target,
                               double epsilon, const TriggerOptConfig& cfg, std::uint64_t seed,
                               const PerturbationObserver& observer = {});

}  // namespace badvision

#endif  // BADVISION_TRIGGER_HPP_
