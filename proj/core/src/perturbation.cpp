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

#include "badvision/perturbation.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "badvision/common.hpp"

namespace badvision {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

std::string_view to_string(PerturbationRole role) {
  switch (role) {
    case PerturbationRole::kTrigger:
      return "trigger";
    case PerturbationRole::kInvalidNoise:
      return "invalid-noise";
    case PerturbationRole::kInverted:
      return "inverted";
  }
  return "trigger";
}

PerturbationRole role_from_string(std::string_view name) {
  if (name == "trigger") return PerturbationRole::kTrigger;
  if (name == "invalid-noise") return PerturbationRole::kInvalidNoise;
  if (name == "inverted") return PerturbationRole::kInverted;
  throw ConfigError("unknown perturbation role: " + std::string(name));
}

Perturbation::Perturbation(int channels, int height, int width, double epsilon,
                           PerturbationRole role, std::vector<double> values)
    : channels_(channels),
      height_(height),
      width_(width),
      epsilon_(epsilon),
      role_(role),
      values_(std::move(values)) {
  if (channels <= 0 || height <= 0 || width <= 0) {
    throw ContractError("perturbation shape must be positive");
  }
  if (values_.size() != static_cast<std::size_t>(channels) * height * width) {
    throw ContractError("perturbation value count does not match its shape");
  }
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) {
    throw ContractError("perturbation budget must lie in [0, 1]");
  }
  for (double v : values_) {
    if (!std::isfinite(v) || std::abs(v) > epsilon + kBudgetSlack) {
      throw ContractError("perturbation value violates its L-inf budget");
    }
  }
}

Perturbation Perturbation::zeros(int channels, int height, int width, double epsilon,
                                 PerturbationRole role) {
  return Perturbation(channels, height, width, epsilon, role,
                      std::vector<double>(static_cast<std::size_t>(channels) * height * width, 0.0));
}

double Perturbation::max_abs() const {
  double m = 0.0;
  for (double v : values_) m = std::max(m, std::abs(v));
  return m;
}

double Perturbation::l1_norm() const {
  double s = 0.0;
  for (double v : values_) s += std::abs(v);
  return s;
}

std::string Perturbation::hash() const {
  std::vector<float> f(values_.begin(), values_.end());
  return sha256_hex(std::span<const float>(f));
}

Perturbation init_perturbation(int channels, int height, int width, double epsilon,
                               std::uint64_t seed, PerturbationRole role) {
  std::mt19937_64 rng(seed);
  std::vector<double> values(static_cast<std::size_t>(channels) * height * width);
  for (auto& v : values) v = unit_from_bits(rng());
  project_linf_inplace(values, epsilon);
  return Perturbation(channels, height, width, epsilon, role, std::move(values));
}

void project_linf_inplace(std::span<double> values, double epsilon) {
  for (auto& v : values) v = std::clamp(v, -epsilon, epsilon);
}

Perturbation project_linf(const Perturbation& p) {
  std::vector<double> values(p.values().begin(), p.values().end());
  project_linf_inplace(values, p.epsilon());
  return Perturbation(p.channels(), p.height(), p.width(), p.epsilon(), p.role(), std::move(values));
}

std::vector<double> round_to_float32(std::span<const double> values) {
  std::vector<double> out(values.size());
  std::transform(values.begin(), values.end(), out.begin(),
                 [](double v) { return static_cast<double>(static_cast<float>(v)); });
  return out;
}

void save_perturbation(const std::filesystem::path& path, const PerturbationFile& file) {
  const Perturbation& p = file.perturbation;
  std::vector<float> raw(p.values().begin(), p.values().end());
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(raw.data()),
              static_cast<std::streamsize>(raw.size() * sizeof(float)));
    if (!out) throw IoError("short write to " + path.string());
  }
  nlohmann::json meta;
  meta["format"] = "badvision-perturbation";
  meta["version"] = 1;
  meta["dtype"] = "float32-le";
  meta["shape"] = {p.channels(), p.height(), p.width()};
  meta["epsilon"] = p.epsilon();
  meta["role"] = to_string(p.role());
  meta["encoder_hash"] = file.encoder_hash;
  meta["seed"] = file.seed;
  meta["history"] = nlohmann::json::parse(file.history_json);
  meta["sha256"] = sha256_hex(std::span<const float>(raw));
  std::ofstream side(path.string() + ".json", std::ios::trunc);
  if (!side) throw IoError("cannot write sidecar for " + path.string());
  side << meta.dump(2) << '\n';
}

PerturbationFile load_perturbation(const std::filesystem::path& path) {
  std::ifstream side(path.string() + ".json");
  if (!side) throw IoError("missing perturbation sidecar " + path.string() + ".json");
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(side);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed perturbation sidecar: " + std::string(e.what()));
  }
  const auto shape = meta.at("shape").get<std::vector<int>>();
  if (shape.size() != 3) throw IoError("perturbation sidecar shape must have 3 entries");
  const std::size_t count = static_cast<std::size_t>(shape[0]) * shape[1] * shape[2];
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<float> raw(count);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(count * sizeof(float)));
  if (in.gcount() != static_cast<std::streamsize>(count * sizeof(float)) || in.peek() != EOF) {
    throw IoError("perturbation file size does not match its sidecar shape");
  }
  if (meta.contains("sha256") && meta["sha256"].get<std::string>() != sha256_hex(std::span<const float>(raw))) {
    throw IoError("perturbation checksum mismatch for " + path.string());
  }
  PerturbationFile file;
  file.perturbation = Perturbation(shape[0], shape[1], shape[2], meta.at("epsilon").get<double>(),
                                   role_from_string(meta.at("role").get<std::string>()),
                                   std::vector<double>(raw.begin(), raw.end()));
  file.encoder_hash = meta.value("encoder_hash", "");
  file.seed = meta.value("seed", std::uint64_t{0});
  file.history_json = meta.value("history", nlohmann::json::array()).dump();
  return file;
}

}  // namespace badvision
