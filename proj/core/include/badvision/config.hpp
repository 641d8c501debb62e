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

#ifndef BADVISION_CONFIG_HPP_
#define BADVISION_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "badvision/attack_targeted.hpp"
#include "badvision/attack_untargeted.hpp"
#include "badvision/data.hpp"
#include "badvision/detection.hpp"
#include "badvision/metrics.hpp"
#include "badvision/trigger.hpp"

namespace badvision {

struct DataConfig {
  std::filesystem::path shadow;
  std::size_t shadow_cap = 500;
  std::filesystem::path test;
  std::size_t test_cap = 200;
  std::filesystem::path gallery;
  std::size_t gallery_cap = 200;
  std::filesystem::path probe;
  std::size_t probe_cap = 200;
  std::filesystem::path finetune;
  std::size_t finetune_cap = 300;
  Resolution resolution;
  std::uint64_t order_seed = 0;
};

// Everything a command needs. Unset paths are empty. JSON layout:
//
//   {"encoder": {...descriptor...},
//    "data": {"shadow": "...", "shadow_cap": 500, "test": ..., "gallery": ...,
//             "probe": ..., "finetune": ..., "<split>_cap": ...,
//             "resolution": [H, W], "order_seed": 0},
//    "target": "...", "trigger_path": "...",
//    "trigger": {"epsilon1", "epochs", "lr", "batch_size"},
//    "backdoor": {"lambda1", "lambda2", "epochs", "lr", "batch_size",
//                 "epsilon2", "pgd_steps", "pgd_step_size", "flags"},
//    "untargeted": {"lambda3", "lambda4", "epsilon1", "epochs", "lr", "batch_size"},
//    "detection": {"steps", "lr", "gamma_init", "gamma_min", "gamma_max",
//                  "concentration_goal", "batch_size", "check_every", "threshold"},
//    "defense": {"epochs", "lr", "batch_size"},
//    "seed": 0, "output": "..."}
//
// Every key is optional; unknown keys are rejected.
struct ExperimentConfig {
  nlohmann::json encoder = nlohmann::json::object();
  DataConfig data;
  std::filesystem::path target;
  std::filesystem::path trigger_path;
  double epsilon1 = 8.0 / 255.0;
  TriggerOptConfig trigger;
  BackdoorConfig backdoor;
  UntargetedConfig untargeted;
  InversionConfig detection;
  FinetuneDefenseConfig defense;
  std::uint64_t seed = 0;
  std::filesystem::path output;

  // Relative paths are resolved against `base_dir`. Throws ConfigError
  // naming the offending field.
  static ExperimentConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  nlohmann::json to_json() const;

  // SHA-256 of the canonical JSON form.
  // SHA-256 of the canonical JSON minus the output location.
  std::string hash() const;

  // Range checks on every numeric field.
  void validate() const;
  // Throws ConfigError("<field>: ...") for each listed field ("target",
  // "data.shadow", "trigger_path", "encoder.path", ...) that is unset or
  // does not exist.
  void require_paths(const std::vector<std::string>& fields) const;
};

ExperimentConfig load_config(const std::filesystem::path& path);

// Sets `dotted.key` to `value` in `doc`. The value is parsed as JSON when it
// parses, else taken as a string.
void apply_override(nlohmann::json& doc, const std::string& dotted_key, const std::string& value);

// Output root: $BADVISION_HOME when set, else the working directory.
std::filesystem::path output_root();

}  // namespace badvision

#endif  // BADVISION_CONFIG_HPP_
