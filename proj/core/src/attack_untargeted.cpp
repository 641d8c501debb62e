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

#include "badvision/attack_untargeted.hpp"

#include <algorithm>
#include <cmath>

#include "badvision/common.hpp"
#include "badvision/optim.hpp"

namespace badvision {

void UntargetedConfig::validate() const {
  if (!(lambda3 >= 0.0)) throw ConfigError("untargeted.lambda3 must be >= 0");
  if (!(lambda4 >= 0.0)) throw ConfigError("untargeted.lambda4 must be >= 0");
  if (!(epsilon1 >= 0.0 && epsilon1 <= 1.0)) throw ConfigError("untargeted.epsilon1 must lie in [0, 1]");
  trigger.validate();
  if (epochs < 1) throw ConfigError("untargeted.epochs must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("untargeted.lr must be > 0");
  if (batch_size < 2) throw ConfigError("untargeted.batch_size must be >= 2");
}

nlohmann::json UntargetedConfig::to_json() const {
  return {{"lambda3", lambda3},
          {"lambda4", lambda4},
          {"epsilon1", epsilon1},
          {"trigger_epochs", trigger.epochs},
          {"trigger_lr", trigger.initial_lr},
          {"trigger_batch_size", trigger.batch_size},
          {"epochs", epochs},
          {"lr", lr},
          {"batch_size", batch_size}};
}

double untargeted_trigger_loss(const Encoder& clean, const ImageBatch& images, std::span<const double> delta,
                               std::vector<double>* grad) {
  const Eigen::MatrixXd reference = embed(clean, images, false).rows;
  const ImageBatch triggered = apply_trigger(images, delta);
  const Activation act = clean.forward(triggered, grad != nullptr);
  Eigen::MatrixXd d_features;
  const double sim =
      cosgrad::mean_rowwise_cos(act.features, reference, grad ? &d_features : nullptr, nullptr);
  if (grad != nullptr) {
    std::vector<double> d_input(triggered.pixels().size());
    clean.backward(act, d_features, {}, d_input);
    *grad = trigger_gradient(images, delta, d_input);
  }
  return sim;
}

TriggerResult optimize_untargeted_trigger(const Encoder& clean, const ShadowDataset& shadow, double epsilon,
                                          const TriggerOptConfig& cfg, std::uint64_t seed,
                                          const PerturbationObserver& observer) {
  cfg.validate();
  if (shadow.size() == 0) throw ContractError("optimize_untargeted_trigger: empty shadow set");
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ContractError("epsilon must lie in [0, 1]");
  const ImageBatch& images = shadow.images;
  const int c = images.channels();
  const int h = images.height();
  const int w = images.width();
  Perturbation init = init_perturbation(c, h, w, epsilon, derive_seed(seed, 21));
  std::vector<double> delta(init.values().begin(), init.values().end());

  auto full_loss = [&](std::span<const double> d) {
    const FeatureMatrix a = embed(clean, images, false);
    const FeatureMatrix b = embed(clean, apply_trigger(images, d), false);
    return cosgrad::mean_rowwise_cos(a.rows, b.rows, nullptr, nullptr);
  };

  TriggerResult result;
  result.baseline_loss = full_loss(std::vector<double>(delta.size(), 0.0));
  const std::size_t steps_per_epoch = (images.size() + cfg.batch_size - 1) / cfg.batch_size;
  CosineAnnealing schedule(cfg.initial_lr, cfg.epochs * steps_per_epoch);
  Adam adam(delta.size());
  std::vector<double> grad;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    double loss_sum = 0.0;
    std::size_t batches = 0;
    double lr = schedule.lr(step);
    for (const auto& idx : epoch_batches(images.size(), cfg.batch_size, derive_seed(seed, 22, epoch))) {
      const double loss = untargeted_trigger_loss(clean, images.gather(idx), delta, &grad);
      if (!std::isfinite(loss)) throw DivergenceError("untargeted trigger loss is not finite", "{}");
      loss_sum += loss;
      ++batches;
      lr = schedule.lr(step);
      adam.step(delta, grad, lr);
      project_linf_inplace(delta, epsilon);
      if (observer) observer(step, delta);
      ++step;
    }
    result.history.push_back({epoch, loss_sum / static_cast<double>(batches), lr});
  }
  result.trigger = Perturbation(c, h, w, epsilon, PerturbationRole::kTrigger, round_to_float32(delta));
  result.final_loss = full_loss(result.trigger.values());
  return result;
}

double separation_loss(const Encoder& trainable, const ImageBatch& images, const Perturbation& delta,
                       std::span<double> param_grad, double weight) {
  const bool grad = !param_grad.empty();
  const Activation clean_act = trainable.forward(images, grad);
  const Activation trig_act = trainable.forward(apply_trigger(images, delta), grad);
  Eigen::MatrixXd d_trig;
  Eigen::MatrixXd d_clean;
  const double sim = cosgrad::mean_rowwise_cos(trig_act.features, clean_act.features,
                                               grad ? &d_trig : nullptr, grad ? &d_clean : nullptr);
  if (grad) {
    trainable.backward(trig_act, weight * d_trig, param_grad, {});
    trainable.backward(clean_act, weight * d_clean, param_grad, {});
  }
  return sim;
}

double scatter_loss(const Encoder& trainable, const ImageBatch& triggered, std::span<double> param_grad,
                    double weight) {
  if (triggered.size() < 2) throw ContractError("scatter loss needs at least two images");
  const bool grad = !param_grad.empty();
  const Activation act = trainable.forward(triggered, grad);
  Eigen::MatrixXd d_features;
  const double value = cosgrad::pairwise_mean_cos(act.features, grad ? &d_features : nullptr);
  if (grad) trainable.backward(act, weight * d_features, param_grad, {});
  return value;
}

BackdooredEncoder train_untargeted(EncoderPair& pair, const ShadowDataset& shadow, const Perturbation& trigger,
                                   const UntargetedConfig& cfg, std::uint64_t seed,
                                   const TrainingObserver& observer) {
  cfg.validate();
  if (shadow.size() < 2) throw ContractError("train_untargeted needs at least two shadow images");
  const ImageBatch& images = shadow.images;
  if (trigger.size() != images.image_size()) throw ContractError("trigger does not match the image shape");
  const Encoder& clean = pair.clean();
  Encoder& trainable = pair.trainable();
  const std::string clean_hash = clean.param_hash();

  Provenance provenance;
  provenance.attack_kind = "untargeted";
  provenance.trigger_hash = trigger.hash();
  provenance.clean_hash = clean_hash;
  provenance.seed = seed;
  provenance.config = cfg.to_json();

  std::vector<double> grad(trainable.param_count());
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (const auto& idx : epoch_batches(images.size(), cfg.batch_size, derive_seed(seed, 23, epoch))) {
      const ImageBatch batch = images.gather(idx);
      std::fill(grad.begin(), grad.end(), 0.0);
      StepLosses losses;
      losses.epoch = epoch;
      losses.step = step;
      losses.effectiveness = separation_loss(trainable, batch, trigger, grad, 1.0);
      losses.focus = scatter_loss(trainable, apply_trigger(batch, trigger), grad, cfg.lambda3);
      losses.utility = utility_loss(trainable, clean, batch, grad, cfg.lambda4);
      losses.total = losses.effectiveness + cfg.lambda3 * losses.focus + cfg.lambda4 * losses.utility;
      for (double v : {losses.effectiveness, losses.focus, losses.utility}) {
        if (!std::isfinite(v)) {
          const nlohmann::json diag{{"epoch", epoch},
                                    {"step", step},
                                    {"separation", losses.effectiveness},
                                    {"scatter", losses.focus},
                                    {"utility", losses.utility}};
          throw DivergenceError("non-finite untargeted loss at step " + std::to_string(step), diag.dump());
        }
      }
      sgd_step(trainable.mutable_params(), grad, cfg.lr);
      provenance.steps.push_back(losses);
      if (observer.on_step) observer.on_step(losses);
      ++step;
    }
  }
  if (clean.param_hash() != clean_hash) throw ContractError("clean encoder was modified during training");
  return BackdooredEncoder{trainable, std::move(provenance)};
}

}  // namespace badvision
