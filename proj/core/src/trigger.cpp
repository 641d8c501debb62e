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

#include "badvision/trigger.hpp"

#include <algorithm>
#include <cmath>

#include "badvision/common.hpp"
#include "badvision/optim.hpp"

namespace badvision {

void TriggerOptConfig::validate() const {
  if (epochs < 1) throw ConfigError("trigger.epochs must be >= 1");
  if (!(initial_lr > 0.0)) throw ConfigError("trigger.lr must be > 0");
  if (batch_size < 1) throw ConfigError("trigger.batch_size must be >= 1");
}

nlohmann::json to_json(const std::vector<EpochRecord>& history) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : history) {
    out.push_back({{"epoch", r.epoch}, {"mean_loss", r.mean_loss}, {"lr", r.lr}});
  }
  return out;
}

double trigger_loss(const Encoder& clean, const ImageBatch& images, std::span<const double> delta,
                    const Eigen::RowVectorXd& target_embedding, std::vector<double>* grad) {
  const ImageBatch triggered = apply_trigger(images, delta);
  const Activation act = clean.forward(triggered, grad != nullptr);
  Eigen::MatrixXd d_features;
  const double sim = cosgrad::mean_cos_to(act.features, target_embedding, grad ? &d_features : nullptr);
  if (grad != nullptr) {
    std::vector<double> d_input(triggered.pixels().size());
    clean.backward(act, -d_features, {}, d_input);
    *grad = trigger_gradient(images, delta, d_input);
  }
  return -sim;
}

double trigger_loss(const Encoder& clean, const ImageBatch& images, const Perturbation& delta,
                    const TargetSpec& target) {
  return trigger_loss(clean, images, delta.values(), target.embedding);
}

double trigger_loss_full(const Encoder& clean, const ImageBatch& images, std::span<const double> delta,
                         const Eigen::RowVectorXd& target_embedding) {
  const FeatureMatrix features = embed(clean, apply_trigger(images, delta), false);
  return -cosgrad::mean_cos_to(features.rows, target_embedding, nullptr);
}

TriggerResult optimize_trigger(const Encoder& clean, const ShadowDataset& shadow, const TargetSpec& target,
                               double epsilon, const TriggerOptConfig& cfg, std::uint64_t seed,
                               const PerturbationObserver& observer) {
  cfg.validate();
  if (shadow.size() == 0) throw ContractError("optimize_trigger: empty shadow set");
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ContractError("optimize_trigger: epsilon must lie in [0, 1]");
  const ImageBatch& images = shadow.images;
  const int c = images.channels();
  const int h = images.height();
  const int w = images.width();

  Perturbation init = init_perturbation(c, h, w, epsilon, derive_seed(seed, 1));
  std::vector<double> delta(init.values().begin(), init.values().end());
  const std::vector<double> zeros(delta.size(), 0.0);

  TriggerResult result;
  result.baseline_loss = trigger_loss_full(clean, images, zeros, target.embedding);

  const std::size_t steps_per_epoch = (images.size() + cfg.batch_size - 1) / cfg.batch_size;
  CosineAnnealing schedule(cfg.initial_lr, cfg.epochs * steps_per_epoch);
  Adam adam(delta.size());
  std::size_t step = 0;
  std::vector<double> grad;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    double loss_sum = 0.0;
    std::size_t batches = 0;
    double lr = schedule.lr(step);
    for (const auto& idx : epoch_batches(images.size(), cfg.batch_size, derive_seed(seed, 2, epoch))) {
      const ImageBatch batch = images.gather(idx);
      const double loss = trigger_loss(clean, batch, delta, target.embedding, &grad);
      if (!std::isfinite(loss)) throw DivergenceError("trigger loss is not finite", "{}");
      loss_sum += loss;
      ++batches;
      lr = schedule.lr(step);
      adam.step(delta, grad, lr);
      project_linf_inplace(delta, epsilon);
      for (double v : delta) {
        if (std::abs(v) > epsilon + kBudgetSlack) throw ContractError("trigger left its L-inf budget");
      }
      if (observer) observer(step, delta);
      ++step;
    }
    result.history.push_back({epoch, loss_sum / static_cast<double>(batches), lr});
  }

  result.trigger = Perturbation(c, h, w, epsilon, PerturbationRole::kTrigger, round_to_float32(delta));
  result.final_loss = trigger_loss_full(clean, images, result.trigger.values(), target.embedding);
  return result;
}

}  // namespace badvision
