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

#include "badvision/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "badvision/common.hpp"
#include "badvision/optim.hpp"

namespace badvision {
namespace {

double mean_cos_rows(const FeatureMatrix& a, const FeatureMatrix& b) {
  return cosgrad::mean_rowwise_cos(a.rows, b.rows, nullptr, nullptr);
}

double percent(const std::vector<bool>& mask) {
  if (mask.empty()) return 0.0;
  const auto hits = std::count(mask.begin(), mask.end(), true);
  return 100.0 * static_cast<double>(hits) / static_cast<double>(mask.size());
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

}  // namespace

SimT sim_t(const Encoder& backdoored, const Encoder& clean, const ImageBatch& test, const Perturbation& trigger,
           const TargetSpec& target) {
  const FeatureMatrix triggered = embed(backdoored, apply_trigger(test, trigger), false);
  const FeatureMatrix plain = embed(clean, test, false);
  return {cosgrad::mean_cos_to(triggered.rows, target.embedding, nullptr),
          cosgrad::mean_cos_to(plain.rows, target.embedding, nullptr)};
}

double sim_b(const Encoder& backdoored, const Encoder& clean, const ImageBatch& test) {
  return mean_cos_rows(embed(backdoored, test, false), embed(clean, test, false));
}

FeatureMatrix build_gallery(const Encoder& clean, const ImageBatch& images) { return embed(clean, images, true); }

std::vector<bool> retrieval_successes(const Encoder& backdoored, const Encoder& clean, const ImageBatch& inputs,
                                      const ImageBatch& references, const TargetSpec& target,
                                      const FeatureMatrix& gallery) {
  if (gallery.size() == 0) throw ContractError("retrieval predicate needs a non-empty gallery");
  if (inputs.size() != references.size()) throw ContractError("inputs and references differ in size");
  if (gallery.dim() != backdoored.feature_dim()) throw ContractError("gallery dimension mismatch");
  const FeatureMatrix q = embed(backdoored, inputs, true);
  const FeatureMatrix own = embed(clean, references, true);
  const FeatureMatrix gal = gallery.normalized ? gallery : normalize_rows(gallery);
  const Eigen::RowVectorXd tar = target.embedding / std::max(target.embedding.norm(), kNormFloor);
  const Eigen::MatrixXd to_gallery = q.rows * gal.rows.transpose();
  std::vector<bool> mask(q.size());
  for (Eigen::Index i = 0; i < q.rows.rows(); ++i) {
    const double to_target = q.rows.row(i).dot(tar);
    const double to_own = q.rows.row(i).dot(own.rows.row(i));
    const double best_gallery = to_gallery.row(i).maxCoeff();
    mask[static_cast<std::size_t>(i)] = to_target >= to_own - kTieTolerance && to_target > best_gallery;
  }
  return mask;
}

double asr_feature_proxy(const Encoder& backdoored, const Encoder& clean, const ImageBatch& test,
                         const Perturbation& trigger, const TargetSpec& target, const FeatureMatrix& gallery) {
  return percent(retrieval_successes(backdoored, clean, apply_trigger(test, trigger), test, target, gallery));
}

double far(const Encoder& backdoored, const Encoder& clean, const ImageBatch& clean_test, const TargetSpec& target,
           const FeatureMatrix& gallery) {
  return percent(retrieval_successes(backdoored, clean, clean_test, clean_test, target, gallery));
}

double asr_captioned(const CaptionerPlugin& captioner, const Encoder& backdoored, const ImageBatch& test,
                     const Perturbation& trigger, const std::vector<std::string>& keywords) {
  if (!captioner) throw ContractError("asr_captioned: no captioner plugin");
  const std::vector<std::string> captions = captioner(backdoored, apply_trigger(test, trigger));
  if (captions.size() != test.size()) throw ContractError("captioner returned the wrong number of captions");
  std::vector<bool> mask;
  for (const auto& caption : captions) {
    const std::string text = lower(caption);
    mask.push_back(std::any_of(keywords.begin(), keywords.end(),
                               [&](const std::string& k) { return text.find(lower(k)) != std::string::npos; }));
  }
  return percent(mask);
}

nlohmann::json MetricReport::to_json() const {
  return {{"sim_t", sim_t},   {"sim_t_baseline", sim_t_baseline},
          {"sim_b", sim_b},   {"asr", asr},
          {"far", far},       {"n_samples", n_samples},
          {"config_hash", config_hash}, {"seed", seed}};
}

MetricReport MetricReport::from_json(const nlohmann::json& j) {
  MetricReport r;
  r.sim_t = j.at("sim_t").get<double>();
  r.sim_t_baseline = j.value("sim_t_baseline", 0.0);
  r.sim_b = j.at("sim_b").get<double>();
  r.asr = j.at("asr").get<double>();
  r.far = j.at("far").get<double>();
  r.n_samples = j.at("n_samples").get<std::size_t>();
  r.config_hash = j.value("config_hash", std::string{});
  r.seed = j.value("seed", std::uint64_t{0});
  return r;
}

MetricReport evaluate_attack(const Encoder& backdoored, const Encoder& clean, const ImageBatch& test,
                             const Perturbation& trigger, const TargetSpec& target, const FeatureMatrix& gallery,
                             const std::string& config_hash, std::uint64_t seed) {
  MetricReport r;
  const SimT st = sim_t(backdoored, clean, test, trigger, target);
  r.sim_t = st.value;
  r.sim_t_baseline = st.baseline;
  r.sim_b = sim_b(backdoored, clean, test);
  r.asr = asr_feature_proxy(backdoored, clean, test, trigger, target, gallery);
  r.far = far(backdoored, clean, test, target, gallery);
  r.n_samples = test.size();
  r.config_hash = config_hash;
  r.seed = seed;
  return r;
}

void FinetuneDefenseConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("defense.lr must be > 0");
  if (batch_size < 2) throw ConfigError("defense.batch_size must be >= 2");
}

nlohmann::json FinetuneDefenseConfig::to_json() const {
  return {{"epochs", epochs}, {"lr", lr}, {"batch_size", batch_size}, {"seed", seed}};
}

double FinetuneOutcome::retained_asr_fraction() const {
  if (before.asr <= 0.0) return 1.0;
  return after.asr / before.asr;
}

FinetuneOutcome finetune_robustness(const BackdooredEncoder& backdoored, const Encoder& clean,
                                    const ShadowDataset& clean_data, const FinetuneDefenseConfig& cfg,
                                    const ImageBatch& test, const Perturbation& trigger, const TargetSpec& target,
                                    const FeatureMatrix& gallery, const std::vector<std::string>& shadow_ids) {
  cfg.validate();
  if (!shadow_ids.empty()) {
    const std::set<std::string> seen(shadow_ids.begin(), shadow_ids.end());
    for (const auto& id : clean_data.images.ids()) {
      if (seen.count(id)) throw ContractError("defense data overlaps the shadow set: " + id);
    }
  }
  const std::string hash = backdoored.provenance.clean_hash;
  FinetuneOutcome out;
  out.before = evaluate_attack(backdoored.encoder, clean, test, trigger, target, gallery, hash, cfg.seed);
  out.defended = backdoored.encoder;
  std::vector<double> grad(out.defended.param_count());
  const ImageBatch& images = clean_data.images;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (const auto& idx : epoch_batches(images.size(), cfg.batch_size, derive_seed(cfg.seed, 41, epoch))) {
      std::fill(grad.begin(), grad.end(), 0.0);
      const double loss = utility_loss(out.defended, clean, images.gather(idx), grad, 1.0);
      if (!std::isfinite(loss)) throw DivergenceError("defense fine-tune loss is not finite", "{}");
      sgd_step(out.defended.mutable_params(), grad, cfg.lr);
    }
  }
  out.after = cfg.epochs == 0 ? out.before
                              : evaluate_attack(out.defended, clean, test, trigger, target, gallery, hash, cfg.seed);
  return out;
}

std::vector<AblationRow> run_ablation(const AblationInputs& in, const std::vector<AblationFlags>& matrix,
                                      const BackdoorConfig& base, const InversionConfig& inversion,
                                      std::uint64_t seed) {
  if (!in.clean || !in.shadow || !in.target || !in.optimized_trigger || !in.test || !in.gallery || !in.probe) {
    throw ContractError("run_ablation: missing input");
  }
  const Perturbation& optimized = *in.optimized_trigger;
  const Perturbation patch =
      make_patch_trigger(optimized.channels(), optimized.height(), optimized.width(), optimized.l1_norm());
  std::vector<AblationRow> rows;
  for (const AblationFlags& flags : matrix) {
    BackdoorConfig cfg = base;
    cfg.flags = flags;
    const Perturbation& trigger = flags.trigger_optimization ? optimized : patch;
    EncoderPair pair(*in.clean);
    const BackdooredEncoder result = train_backdoor(pair, *in.shadow, *in.target, trigger, cfg, seed);
    AblationRow row;
    row.flags = flags;
    const SimT st = sim_t(result.encoder, *in.clean, *in.test, trigger, *in.target);
    row.sim_t = st.value;
    row.sim_b = sim_b(result.encoder, *in.clean, *in.test);
    row.asr = asr_feature_proxy(result.encoder, *in.clean, *in.test, trigger, *in.target, *in.gallery);
    const InversionResult inv = invert_trigger(result.encoder, *in.probe, inversion);
    row.pl1 = inv.pl1;
    row.verdict = inv.verdict;
    row.trigger_hash = trigger.hash();
    rows.push_back(row);
  }
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  out << "flags,TO,RF,TF,sim_t,sim_b,asr,pl1,verdict\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%d,%d,%d,%.6f,%.6f,%.2f,%.6f,", r.flags.trigger_optimization ? 1 : 0,
                  r.flags.random_focus ? 1 : 0, r.flags.trigger_focus ? 1 : 0, r.sim_t, r.sim_b, r.asr, r.pl1);
    out << '"' << r.flags.tag() << "\"," << buf << to_string(r.verdict) << '\n';
  }
  return out.str();
}

}  // namespace badvision
