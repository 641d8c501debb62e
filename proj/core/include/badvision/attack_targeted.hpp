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

#ifndef BADVISION_ATTACK_TARGETED_HPP_
#define BADVISION_ATTACK_TARGETED_HPP_

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "badvision/data.hpp"
#include "badvision/encoders.hpp"
#include "badvision/perturbation.hpp"
#include "badvision/trigger.hpp"

namespace badvision {

// Design switches: TO = optimized trigger (otherwise a white patch with the
// same L1 norm), TF = PGD-optimized invalid noise with focus loss, RF =
// freshly sampled uniform noise with focus loss. TF and RF are exclusive.
struct AblationFlags {
  bool trigger_optimization = true;
  bool trigger_focus = true;
  bool random_focus = false;

  bool focus_active() const { return trigger_focus || random_focus; }
  // "TO=1,RF=0,TF=1"
  std::string tag() const;
  // Parses "TO=1,TF=0" style lists; unspecified flags keep their value.
  static AblationFlags parse(const std::string& text, AblationFlags base);
  static AblationFlags parse(const std::string& text);
  nlohmann::json to_json() const;
  friend bool operator==(const AblationFlags&, const AblationFlags&) = default;
};

struct BackdoorConfig {
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  std::size_t epochs = 10;
  double lr = 0.05;
  std::size_t batch_size = 4;
  double epsilon2 = 1.0;
  std::size_t pgd_steps = 5;
  std::optional<double> pgd_step_size;  // defaults to epsilon2 / 10
  AblationFlags flags;

  double step_size() const { return pgd_step_size.value_or(epsilon2 / 10.0); }
  void validate() const;
  nlohmann::json to_json() const;
};

// Loss components of one training step. `total` is exactly
// effectiveness + lambda1 * utility + lambda2 * focus (focus is 0 and
// excluded when neither TF nor RF is active).
struct StepLosses {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double effectiveness = 0.0;
  double utility = 0.0;
  double focus = 0.0;
  double total = 0.0;
};

struct Provenance {
  std::string attack_kind;  // "targeted" or "untargeted"
  std::string trigger_hash;
  std::string clean_hash;
  std::uint64_t seed = 0;
  nlohmann::json config;
  std::vector<StepLosses> steps;

  // Per-epoch means of each component.
  std::vector<StepLosses> epoch_means() const;
  nlohmann::json to_json() const;  // without the per-step curve
};

struct BackdooredEncoder {
  Encoder encoder;
  Provenance provenance;
};

// Line-delimited numeric loss records, one JSON object per step.
void write_loss_curves(const std::filesystem::path& path, const std::vector<StepLosses>& steps,
                       const std::string& first = "effectiveness", const std::string& second = "utility",
                       const std::string& third = "focus");

// --- losses ------------------------------------------------------------------
// Each returns the loss value. When `param_grad` is non-empty,
// weight * dL/dtheta' is added to it.

// -mean cos(f'(x + trigger), e_tar); `triggered` has already been stamped.
double effectiveness_loss(const Encoder& trainable, const ImageBatch& triggered,
                          const Eigen::RowVectorXd& target_embedding, std::span<double> param_grad = {},
                          double weight = 1.0);
// -mean cos(f'(x), f0(x)).
double utility_loss(const Encoder& trainable, const Encoder& clean, const ImageBatch& images,
                    std::span<double> param_grad = {}, double weight = 1.0);
// -mean cos(f'(x + noise), f0(x + noise)); `noisy` has already been stamped.
double focus_loss(const Encoder& trainable, const Encoder& clean, const ImageBatch& noisy,
                  std::span<double> param_grad = {}, double weight = 1.0);

// -pairwise_mean_cos(f'(x + noise)) + cos(noise, trigger). The penalty term
// is dropped when `with_penalty` is false. `grad` receives dL/dnoise.
double concentration_loss(const Encoder& trainable, const ImageBatch& images, std::span<const double> noise,
                          std::span<const double> trigger, bool with_penalty = true,
                          std::vector<double>* grad = nullptr);

struct NoiseGenOptions {
  double epsilon = 1.0;
  std::size_t steps = 5;
  double step_size = 0.1;
  bool with_penalty = true;
};

// Sign-gradient PGD descent on concentration_loss, warm-started from
// `previous`, each step projected into [-epsilon, epsilon]. Needs >= 2 images.
Perturbation generate_invalid_noise(const Perturbation& previous, const Perturbation& trigger,
                                    const Encoder& trainable, const ImageBatch& images,
                                    const NoiseGenOptions& options,
                                    const PerturbationObserver& observer = {});

// White square anchored at the bottom-right corner, value +1 on every
// channel, whose side k = clamp(round(sqrt(l1 / C)), 1, min(H, W)) gives an
// L1 norm as close as possible to `l1`.
Perturbation make_patch_trigger(int channels, int height, int width, double l1);

struct TrainingObserver {
  std::function<void(std::size_t step, std::span<const double> noise)> on_noise;
  std::function<void(const StepLosses&)> on_step;
};

// Trigger-focusing backdoor learning. Trains pair.trainable() in place with
// plain SGD on L = L_e + lambda1 * L_u + lambda2 * L_f and returns a copy with
// provenance. Throws DivergenceError if a loss becomes non-finite.
BackdooredEncoder train_backdoor(EncoderPair& pair, const ShadowDataset& shadow, const TargetSpec& target,
                                 const Perturbation& trigger, const BackdoorConfig& cfg, std::uint64_t seed,
                                 const TrainingObserver& observer = {});

}  // namespace badvision

#endif  // BADVISION_ATTACK_TARGETED_HPP_
