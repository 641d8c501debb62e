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

#ifndef BADVISION_METRICS_HPP_
#define BADVISION_METRICS_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "badvision/attack_targeted.hpp"
#include "badvision/data.hpp"
#include "badvision/detection.hpp"
#include "badvision/encoders.hpp"
#include "badvision/perturbation.hpp"

namespace badvision {

// Minimum gallery size accepted by the evaluation front-ends.
inline constexpr std::size_t kMinGallerySize = 50;
inline constexpr double kTieTolerance = 1e-9;

struct SimT {
  double value = 0.0;     // mean cos(f*(x + trigger), e_tar)
  double baseline = 0.0;  // mean cos(f0(x), e_tar), no trigger
  double uplift() const { return value - baseline; }
};

SimT sim_t(const Encoder& backdoored, const Encoder& clean, const ImageBatch& test, const Perturbation& trigger,
           const TargetSpec& target);

// mean cos(f*(x), f0(x))
double sim_b(const Encoder& backdoored, const Encoder& clean, const ImageBatch& test);

// Unit-normalized clean-encoder embeddings of non-target images.
FeatureMatrix build_gallery(const Encoder& clean, const ImageBatch& images);

// Shared success predicate. For each row i: with q = f*(inputs_i),
// success iff cos(q, e_tar) > max_g cos(q, gallery_g) and cos(q, e_tar) is
// not below cos(q, f0(references_i)). A tie with the own clean feature
// (within kTieTolerance) counts for the target, so the target image itself
// is accepted on an untouched pair. Returns the success mask.
// Throws ContractError for an empty gallery or mismatched batches.
std::vector<bool> retrieval_successes(const Encoder& backdoored, const Encoder& clean, const ImageBatch& inputs,
                                      const ImageBatch& references, const TargetSpec& target,
                                      const FeatureMatrix& gallery);

// Percentage of triggered test images the predicate accepts.
double asr_feature_proxy(const Encoder& backdoored, const Encoder& clean, const ImageBatch& test,
                         const Perturbation& trigger, const TargetSpec& target, const FeatureMatrix& gallery);

// Same predicate on untriggered inputs.
double far(const Encoder& backdoored, const Encoder& clean, const ImageBatch& clean_test, const TargetSpec& target,
           const FeatureMatrix& gallery);

// Hook for caption-based success: returns one caption per image, produced by
// a vision-language model built around `encoder`.
using CaptionerPlugin = std::function<std::vector<std::string>(const Encoder& encoder, const ImageBatch& images)>;

// Percentage of triggered images whose caption contains any keyword
// (case-insensitive substring match).
double asr_captioned(const CaptionerPlugin& captioner, const Encoder& backdoored, const ImageBatch& test,
                     const Perturbation& trigger, const std::vector<std::string>& keywords);

struct MetricReport {
  double sim_t = 0.0;
  double sim_t_baseline = 0.0;
  double sim_b = 0.0;
  double asr = 0.0;  // percent
  double far = 0.0;  // percent
  std::size_t n_samples = 0;
  std::string config_hash;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  static MetricReport from_json(const nlohmann::json& j);
};

MetricReport evaluate_attack(const Encoder& backdoored, const Encoder& clean, const ImageBatch& test,
                             const Perturbation& trigger, const TargetSpec& target, const FeatureMatrix& gallery,
                             const std::string& config_hash = {}, std::uint64_t seed = 0);

// Defender fine-tune: SGD on -mean cos(f(x), f0(x)) over clean data.
struct FinetuneDefenseConfig {
  std::size_t epochs = 3;
  double lr = 0.05;
  std::size_t batch_size = 4;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
};

struct FinetuneOutcome {
  MetricReport before;
  MetricReport after;
  Encoder defended;
  double retained_asr_fraction() const;  // after.asr / before.asr (1 when before.asr == 0)
};

// `clean_data` must not overlap the attack's shadow set; ids are compared
// and a ContractError is raised on overlap when `shadow_ids` is given.
FinetuneOutcome finetune_robustness(const BackdooredEncoder& backdoored, const Encoder& clean,
                                    const ShadowDataset& clean_data, const FinetuneDefenseConfig& cfg,
                                    const ImageBatch& test, const Perturbation& trigger, const TargetSpec& target,
                                    const FeatureMatrix& gallery, const std::vector<std::string>& shadow_ids = {});

struct AblationRow {
  AblationFlags flags;
  double sim_t = 0.0;
  double sim_b = 0.0;
  double asr = 0.0;
  double pl1 = 0.0;
  Verdict verdict = Verdict::kClean;
  std::string trigger_hash;
};

struct AblationInputs {
  const Encoder* clean = nullptr;
  const ShadowDataset* shadow = nullptr;
  const TargetSpec* target = nullptr;
  const Perturbation* optimized_trigger = nullptr;  // used when TO=1
  const ImageBatch* test = nullptr;
  const FeatureMatrix* gallery = nullptr;
  const ImageBatch* probe = nullptr;
};

// Every row starts from the same clean encoder, shadow set, target and seed.
// TO=0 swaps the optimized trigger for a patch of equal L1 norm.
std::vector<AblationRow> run_ablation(const AblationInputs& inputs, const std::vector<AblationFlags>& matrix,
                                      const BackdoorConfig& base, const InversionConfig& inversion,
                                      std::uint64_t seed);

// Header "flags,TO,RF,TF,sim_t,sim_b,asr,pl1,verdict" then one line per row.
std::string ablation_csv(const std::vector<AblationRow>& rows);

}  // namespace badvision

#endif  // BADVISION_METRICS_HPP_
