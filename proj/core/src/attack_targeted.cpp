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

#include "badvision/attack_targeted.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "badvision/common.hpp"
#include "badvision/optim.hpp"

namespace badvision {

std::string AblationFlags::tag() const {
  std::ostringstream out;
  out << "TO=" << trigger_optimization << ",RF=" << random_focus << ",TF=" << trigger_focus;
  return out.str();
}

AblationFlags AblationFlags::parse(const std::string& text) { return parse(text, AblationFlags{}); }

AblationFlags AblationFlags::parse(const std::string& text, AblationFlags base) {
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    item.erase(std::remove_if(item.begin(), item.end(), ::isspace), item.end());
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ConfigError("ablation flag must look like NAME=0|1: " + item);
    const std::string name = item.substr(0, eq);
    const std::string value = item.substr(eq + 1);
    if (value != "0" && value != "1") throw ConfigError("ablation flag value must be 0 or 1: " + item);
    const bool on = value == "1";
    if (name == "TO") {
      base.trigger_optimization = on;
    } else if (name == "TF") {
      base.trigger_focus = on;
    } else if (name == "RF") {
      base.random_focus = on;
    } else {
      throw ConfigError("unknown ablation flag: " + name);
    }
  }
  if (base.trigger_focus && base.random_focus) throw ConfigError("TF and RF cannot both be active");
  return base;
}

nlohmann::json AblationFlags::to_json() const {
  return {{"TO", trigger_optimization}, {"TF", trigger_focus}, {"RF", random_focus}};
}

void BackdoorConfig::validate() const {
  if (!(lambda1 >= 0.0)) throw ConfigError("backdoor.lambda1 must be >= 0");
  if (!(lambda2 >= 0.0)) throw ConfigError("backdoor.lambda2 must be >= 0");
  if (epochs < 1) throw ConfigError("backdoor.epochs must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("backdoor.lr must be > 0");
  if (batch_size < 2) throw ConfigError("backdoor.batch_size must be >= 2");
  if (!(epsilon2 > 0.0 && epsilon2 <= 1.0)) throw ConfigError("backdoor.epsilon2 must lie in (0, 1]");
  if (pgd_steps < 1) throw ConfigError("backdoor.pgd_steps must be >= 1");
  if (!(step_size() > 0.0)) throw ConfigError("backdoor.pgd_step_size must be > 0");
  if (flags.trigger_focus && flags.random_focus) throw ConfigError("TF and RF cannot both be active");
}

nlohmann::json BackdoorConfig::to_json() const {
  return {{"lambda1", lambda1},     {"lambda2", lambda2},     {"epochs", epochs},
          {"lr", lr},               {"batch_size", batch_size}, {"epsilon2", epsilon2},
          {"pgd_steps", pgd_steps}, {"pgd_step_size", step_size()}, {"flags", flags.to_json()}};
}

std::vector<StepLosses> Provenance::epoch_means() const {
  std::vector<StepLosses> means;
  std::vector<std::size_t> counts;
  for (const auto& s : steps) {
    if (means.empty() || means.back().epoch != s.epoch) {
      means.push_back({s.epoch, 0, 0.0, 0.0, 0.0, 0.0});
      counts.push_back(0);
    }
    auto& m = means.back();
    m.effectiveness += s.effectiveness;
    m.utility += s.utility;
    m.focus += s.focus;
    m.total += s.total;
    m.step = s.step;
    ++counts.back();
  }
  for (std::size_t i = 0; i < means.size(); ++i) {
    const double n = static_cast<double>(counts[i]);
    means[i].effectiveness /= n;
    means[i].utility /= n;
    means[i].focus /= n;
    means[i].total /= n;
  }
  return means;
}

nlohmann::json Provenance::to_json() const {
  return {{"attack_kind", attack_kind}, {"trigger_hash", trigger_hash}, {"clean_hash", clean_hash},
          {"seed", seed},               {"config", config},             {"steps", steps.size()}};
}

void write_loss_curves(const std::filesystem::path& path, const std::vector<StepLosses>& steps,
                       const std::string& first, const std::string& second, const std::string& third) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& s : steps) {
    nlohmann::json line{{"epoch", s.epoch}, {"step", s.step}, {first, s.effectiveness},
                        {second, s.utility}, {third, s.focus}, {"total", s.total}};
    out << line.dump() << '\n';
  }
}

double effectiveness_loss(const Encoder& trainable, const ImageBatch& triggered,
                          const Eigen::RowVectorXd& target_embedding, std::span<double> param_grad,
                          double weight) {
  const bool grad = !param_grad.empty();
  const Activation act = trainable.forward(triggered, grad);
  Eigen::MatrixXd d_features;
  const double sim = cosgrad::mean_cos_to(act.features, target_embedding, grad ? &d_features : nullptr);
  if (grad) trainable.backward(act, -weight * d_features, param_grad, {});
  return -sim;
}

namespace {

// -mean cos(f'(x), f0(x)) for any input batch.
double align_to_clean(const Encoder& trainable, const Encoder& clean, const ImageBatch& images,
                      std::span<double> param_grad, double weight) {
  const bool grad = !param_grad.empty();
  const Eigen::MatrixXd reference = embed(clean, images, false).rows;
  const Activation act = trainable.forward(images, grad);
  Eigen::MatrixXd d_features;
  const double sim = cosgrad::mean_rowwise_cos(act.features, reference, grad ? &d_features : nullptr, nullptr);
  if (grad) trainable.backward(act, -weight * d_features, param_grad, {});
  return -sim;
}

void require_finite(double value, const char* what, std::size_t epoch, std::size_t step,
                    const nlohmann::json& context) {
  if (std::isfinite(value)) return;
  nlohmann::json diag = context;
  diag["term"] = what;
  diag["epoch"] = epoch;
  diag["step"] = step;
  throw DivergenceError(std::string("non-finite ") + what + " loss at step " + std::to_string(step),
                        diag.dump());
}

}  // namespace

double utility_loss(const Encoder& trainable, const Encoder& clean, const ImageBatch& images,
                    std::span<double> param_grad, double weight) {
  return align_to_clean(trainable, clean, images, param_grad, weight);
}

double focus_loss(const Encoder& trainable, const Encoder& clean, const ImageBatch& noisy,
                  std::span<double> param_grad, double weight) {
  return align_to_clean(trainable, clean, noisy, param_grad, weight);
}

double concentration_loss(const Encoder& trainable, const ImageBatch& images, std::span<const double> noise,
                          std::span<const double> trigger, bool with_penalty, std::vector<double>* grad) {
  if (images.size() < 2) throw ContractError("concentration loss needs at least two images");
  const ImageBatch noisy = apply_trigger(images, noise);
  const Activation act = trainable.forward(noisy, grad != nullptr);
  Eigen::MatrixXd d_features;
  const double pairwise = cosgrad::pairwise_mean_cos(act.features, grad ? &d_features : nullptr);
  double loss = -pairwise;
  std::vector<double> d_penalty(grad && with_penalty ? noise.size() : 0);
  if (with_penalty) loss += cosgrad::cosine(noise, trigger, d_penalty);
  if (grad != nullptr) {
    std::vector<double> d_input(noisy.pixels().size());
    trainable.backward(act, -d_features, {}, d_input);
    *grad = trigger_gradient(images, noise, d_input);
    if (with_penalty) {
      for (std::size_t k = 0; k < grad->size(); ++k) (*grad)[k] += d_penalty[k];
    }
  }
  return loss;
}

Perturbation generate_invalid_noise(const Perturbation& previous, const Perturbation& trigger,
                                    const Encoder& trainable, const ImageBatch& images,
                                    const NoiseGenOptions& options, const PerturbationObserver& observer) {
  if (images.size() < 2) throw ContractError("invalid-noise generation needs at least two images");
  if (!(options.epsilon > 0.0 && options.epsilon <= 1.0)) {
    throw ContractError("invalid-noise budget must lie in (0, 1]");
  }
  if (previous.size() != trigger.size() || previous.size() != images.image_size()) {
    throw ContractError("noise, trigger and images must share a shape");
  }
  std::vector<double> noise(previous.values().begin(), previous.values().end());
  project_linf_inplace(noise, options.epsilon);
  std::vector<double> grad;
  for (std::size_t step = 0; step < options.steps; ++step) {
    concentration_loss(trainable, images, noise, trigger.values(), options.with_penalty, &grad);
    for (std::size_t k = 0; k < noise.size(); ++k) {
      const double g = grad[k];
      const double sign = g > 0.0 ? 1.0 : (g < 0.0 ? -1.0 : 0.0);
      noise[k] -= options.step_size * sign;
    }
    project_linf_inplace(noise, options.epsilon);
    if (observer) observer(step, noise);
  }
  return Perturbation(previous.channels(), previous.height(), previous.width(), options.epsilon,
                      PerturbationRole::kInvalidNoise, std::move(noise));
}

Perturbation make_patch_trigger(int channels, int height, int width, double l1) {
  const int side = std::clamp(static_cast<int>(std::lround(std::sqrt(std::max(l1, 0.0) / channels))), 1,
                              std::min(height, width));
  std::vector<double> values(static_cast<std::size_t>(channels) * height * width, 0.0);
  for (int c = 0; c < channels; ++c) {
    for (int y = height - side; y < height; ++y) {
      for (int x = width - side; x < width; ++x) {
        values[(static_cast<std::size_t>(c) * height + y) * width + x] = 1.0;
      }
    }
  }
  return Perturbation(channels, height, width, 1.0, PerturbationRole::kTrigger, std::move(values));
}

BackdooredEncoder train_backdoor(EncoderPair& pair, const ShadowDataset& shadow, const TargetSpec& target,
                                 const Perturbation& trigger, const BackdoorConfig& cfg, std::uint64_t seed,
                                 const TrainingObserver& observer) {
  cfg.validate();
  if (shadow.size() < 2) throw ContractError("train_backdoor needs at least two shadow images");
  const ImageBatch& images = shadow.images;
  if (trigger.size() != images.image_size()) throw ContractError("trigger does not match the image shape");
  const Encoder& clean = pair.clean();
  Encoder& trainable = pair.trainable();
  const std::string clean_hash = clean.param_hash();

  Provenance provenance;
  provenance.attack_kind = "targeted";
  provenance.trigger_hash = trigger.hash();
  provenance.clean_hash = clean_hash;
  provenance.seed = seed;
  provenance.config = cfg.to_json();

  const int c = images.channels();
  const int h = images.height();
  const int w = images.width();
  Perturbation noise = init_perturbation(c, h, w, cfg.epsilon2, derive_seed(seed, 10),
                                         PerturbationRole::kInvalidNoise);
  std::mt19937_64 random_focus_rng(derive_seed(seed, 11));
  const NoiseGenOptions noise_options{cfg.epsilon2, cfg.pgd_steps, cfg.step_size(), true};

  std::vector<double> grad(trainable.param_count());
  std::size_t step = 0;
  std::size_t noise_step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (const auto& idx : epoch_batches(images.size(), cfg.batch_size, derive_seed(seed, 12, epoch))) {
      const ImageBatch batch = images.gather(idx);
      std::fill(grad.begin(), grad.end(), 0.0);
      StepLosses losses;
      losses.epoch = epoch;
      losses.step = step;
      losses.effectiveness =
          effectiveness_loss(trainable, apply_trigger(batch, trigger), target.embedding, grad, 1.0);
      losses.utility = utility_loss(trainable, clean, batch, grad, cfg.lambda1);
      losses.total = losses.effectiveness + cfg.lambda1 * losses.utility;
      if (cfg.flags.focus_active()) {
        if (cfg.flags.trigger_focus) {
          noise = generate_invalid_noise(noise, trigger, trainable, batch, noise_options,
                                         [&](std::size_t, std::span<const double> v) {
                                           if (observer.on_noise) observer.on_noise(noise_step, v);
                                           ++noise_step;
                                         });
        } else {
          std::vector<double> fresh(noise.size());
          for (auto& v : fresh) v = cfg.epsilon2 * (2.0 * unit_from_bits(random_focus_rng()) - 1.0);
          noise = Perturbation(c, h, w, cfg.epsilon2, PerturbationRole::kInvalidNoise, std::move(fresh));
          if (observer.on_noise) observer.on_noise(noise_step++, noise.values());
        }
        losses.focus = focus_loss(trainable, clean, apply_trigger(batch, noise), grad, cfg.lambda2);
        losses.total += cfg.lambda2 * losses.focus;
      }
      const nlohmann::json context{{"effectiveness", losses.effectiveness},
                                   {"utility", losses.utility},
                                   {"focus", losses.focus}};
      require_finite(losses.effectiveness, "effectiveness", epoch, step, context);
      require_finite(losses.utility, "utility", epoch, step, context);
      require_finite(losses.focus, "focus", epoch, step, context);
      for (double g : grad) {
        if (!std::isfinite(g)) require_finite(g, "gradient", epoch, step, context);
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
