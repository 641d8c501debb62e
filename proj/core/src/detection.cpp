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

#include "badvision/detection.hpp"

#include <algorithm>
#include <cmath>

#include "badvision/common.hpp"
#include "badvision/optim.hpp"

namespace badvision {

std::string to_string(Verdict verdict) { return verdict == Verdict::kBackdoored ? "backdoored" : "clean"; }

double pl1_norm(std::span<const double> values) {
  if (values.empty()) return 0.0;
  double sum = 0.0;
  for (double v : values) sum += std::abs(v);
  return sum / static_cast<double>(values.size());
}

double pl1_norm(const Perturbation& p) { return pl1_norm(p.values()); }

Verdict judge(double pl1, double threshold) { return pl1 < threshold ? Verdict::kBackdoored : Verdict::kClean; }

void InversionConfig::validate() const {
  if (steps < 1) throw ConfigError("detection.steps must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("detection.lr must be > 0");
  if (!(gamma_init > 0.0 && gamma_min > 0.0 && gamma_max >= gamma_min)) {
    throw ConfigError("detection gamma bounds must be positive and ordered");
  }
  if (!(concentration_goal > -1.0 && concentration_goal <= 1.0)) {
    throw ConfigError("detection.concentration_goal must lie in (-1, 1]");
  }
  if (batch_size < 2) throw ConfigError("detection.batch_size must be >= 2");
  if (check_every < 1) throw ConfigError("detection.check_every must be >= 1");
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw ConfigError("detection.threshold must lie in [0, 1]");
}

nlohmann::json InversionConfig::to_json() const {
  return {{"steps", steps},
          {"lr", lr},
          {"gamma_init", gamma_init},
          {"gamma_min", gamma_min},
          {"gamma_max", gamma_max},
          {"concentration_goal", concentration_goal},
          {"batch_size", batch_size},
          {"check_every", check_every},
          {"threshold", threshold},
          {"seed", seed}};
}

nlohmann::json InversionResult::to_json() const {
  nlohmann::json trace_json = nlohmann::json::array();
  for (const auto& t : trace) {
    trace_json.push_back({{"step", t.step},
                          {"gamma", t.gamma},
                          {"concentration", t.concentration},
                          {"pl1", t.pl1},
                          {"goal_met", t.goal_met}});
  }
  return {{"l1_norm", l1_norm},
          {"pl1", pl1},
          {"achieved_concentration", achieved_concentration},
          {"converged", converged},
          {"verdict", to_string(verdict)},
          {"threshold", threshold},
          {"inverted_hash", inverted.hash()},
          {"trace", trace_json}};
}

double feature_concentration(const Encoder& encoder, const ImageBatch& probe, std::span<const double> d) {
  return pairwise_mean_cos(embed(encoder, apply_trigger(probe, d), false));
}

InversionResult invert_trigger(const Encoder& encoder, const ImageBatch& probe, const InversionConfig& cfg) {
  cfg.validate();
  if (probe.size() < 2) throw ContractError("trigger inversion needs at least two probe images");
  const std::size_t size = probe.image_size();
  const double inv_size = 1.0 / static_cast<double>(size);
  std::vector<double> d(size, 0.0);
  std::vector<double> grad(size);
  Adam adam(size);
  double gamma = cfg.gamma_init;

  std::vector<double> best;
  double best_pl1 = 2.0;
  double best_concentration = -2.0;
  std::vector<double> fallback = d;
  double fallback_concentration = -2.0;

  InversionResult result;
  const std::size_t batch = std::min(cfg.batch_size, probe.size());
  std::vector<std::vector<std::size_t>> batches;
  std::size_t cursor = 0;
  std::size_t epoch = 0;

  auto consider = [&](double conc, double pl1) {
    const bool met = conc >= cfg.concentration_goal;
    if (met && pl1 < best_pl1) {
      best = d;
      best_pl1 = pl1;
      best_concentration = conc;
    }
    if (conc > fallback_concentration) {
      fallback = d;
      fallback_concentration = conc;
    }
    return met;
  };
  auto check = [&](std::size_t step) {
    const double conc = feature_concentration(encoder, probe, d);
    const double pl1 = pl1_norm(d);
    const bool met = consider(conc, pl1);
    result.trace.push_back({step, gamma, conc, pl1, met});
    gamma = std::clamp(met ? gamma * 2.0 : gamma * 0.5, cfg.gamma_min, cfg.gamma_max);
  };

  // d = 0 already meeting the goal is the minimal-norm answer. It is not
  // traced, does not move gamma and never serves as the fallback.
  if (const double conc0 = feature_concentration(encoder, probe, d); conc0 >= cfg.concentration_goal) {
    best = d;
    best_pl1 = 0.0;
    best_concentration = conc0;
  }
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    if (cursor >= batches.size()) {
      batches = epoch_batches(probe.size(), batch, derive_seed(cfg.seed, 31, epoch++));
      cursor = 0;
    }
    const ImageBatch images = probe.gather(batches[cursor++]);
    const ImageBatch stamped = apply_trigger(images, d);
    const Activation act = encoder.forward(stamped, true);
    Eigen::MatrixXd d_features;
    cosgrad::pairwise_mean_cos(act.features, &d_features);
    std::vector<double> d_input(stamped.pixels().size());
    encoder.backward(act, -d_features, {}, d_input);
    grad = trigger_gradient(images, d, d_input);
    for (std::size_t k = 0; k < size; ++k) {
      const double sign = d[k] > 0.0 ? 1.0 : (d[k] < 0.0 ? -1.0 : 0.0);
      grad[k] += gamma * sign * inv_size;
    }
    adam.step(d, grad, cfg.lr);
    project_linf_inplace(d, 1.0);
    if ((step + 1) % cfg.check_every == 0 || step + 1 == cfg.steps) check(step + 1);
  }

  result.converged = !best.empty();
  const std::vector<double>& chosen = result.converged ? best : fallback;
  result.achieved_concentration = result.converged ? best_concentration : fallback_concentration;
  result.inverted = Perturbation(probe.channels(), probe.height(), probe.width(), 1.0,
                                 PerturbationRole::kInverted, chosen);
  result.l1_norm = result.inverted.l1_norm();
  result.pl1 = std::clamp(result.l1_norm * inv_size, 0.0, 1.0);
  result.threshold = cfg.threshold;
  result.verdict = judge(result.pl1, cfg.threshold);
  return result;
}

}  // namespace badvision
