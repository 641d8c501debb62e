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

#ifndef BADVISION_PERTURBATION_HPP_
#define BADVISION_PERTURBATION_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace badvision {

enum class PerturbationRole { kTrigger, kInvalidNoise, kInverted };

std::string_view to_string(PerturbationRole role);
PerturbationRole role_from_string(std::string_view name);

// Slack allowed on the L-infinity budget to absorb float32 round-trips.
inline constexpr double kBudgetSlack = 1e-7;

// Universal additive pixel-space noise field of shape C x H x W.
// Invariant: max |value| <= epsilon + kBudgetSlack.
class Perturbation {
 public:
  Perturbation() = default;
  // Throws ContractError when the values violate the budget or the shape.
  Perturbation(int channels, int height, int width, double epsilon, PerturbationRole role,
               std::vector<double> values);

  static Perturbation zeros(int channels, int height, int width, double epsilon,
                            PerturbationRole role);

  int channels() const { return channels_; }
  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return values_.size(); }
  double epsilon() const { return epsilon_; }
  PerturbationRole role() const { return role_; }
  std::span<const double> values() const { return values_; }

  double max_abs() const;
  double l1_norm() const;
  // SHA-256 of the float32 serialization.
  std::string hash() const;

 private:
  int channels_ = 0;
  int height_ = 0;
  int width_ = 0;
  double epsilon_ = 0.0;
  PerturbationRole role_ = PerturbationRole::kTrigger;
  std::vector<double> values_;
};

// Uniform [0, 1) draw projected into [-epsilon, epsilon]. Deterministic under
// seed. epsilon must lie in [0, 1].
Perturbation init_perturbation(int channels, int height, int width, double epsilon,
                               std::uint64_t seed, PerturbationRole role = PerturbationRole::kTrigger);

// Elementwise clamp into [-epsilon, epsilon]. Idempotent.
Perturbation project_linf(const Perturbation& p);
void project_linf_inplace(std::span<double> values, double epsilon);

// Values rounded through float32, the on-disk precision.
std::vector<double> round_to_float32(std::span<const double> values);

// Trigger checkpoint: `<path>` holds raw little-endian float32 values in
// C,H,W order; `<path>.json` holds the metadata sidecar.
struct PerturbationFile {
  Perturbation perturbation;
  std::string encoder_hash;
  std::uint64_t seed = 0;
  // Serialized JSON array of per-epoch history records, may be "[]".
  std::string history_json = "[]";
};

void save_perturbation(const std::filesystem::path& path, const PerturbationFile& file);
PerturbationFile load_perturbation(const std::filesystem::path& path);

}  // namespace badvision

#endif  // BADVISION_PERTURBATION_HPP_
