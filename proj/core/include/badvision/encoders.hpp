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

#ifndef BADVISION_ENCODERS_HPP_
#define BADVISION_ENCODERS_HPP_

#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "badvision/data.hpp"
#include "badvision/encoder_model.hpp"

namespace badvision {

// Per-image embedding rows (N x D). Row i belongs to input image i.
struct FeatureMatrix {
  Eigen::MatrixXd rows;
  bool normalized = false;

  std::size_t size() const { return static_cast<std::size_t>(rows.rows()); }
  int dim() const { return static_cast<int>(rows.cols()); }
};

// Raw features plus the activations needed to backpropagate into them.
struct Activation {
  Eigen::MatrixXd features;
  std::unique_ptr<ForwardState> state;
  std::size_t batch = 0;
};

// Value-semantic handle around an EncoderModel. Copying deep-copies weights.
class Encoder {
 public:
  Encoder() = default;
  explicit Encoder(std::unique_ptr<EncoderModel> model, std::string name = {});
  Encoder(const Encoder& other);
  Encoder& operator=(const Encoder& other);
  Encoder(Encoder&&) noexcept = default;
  Encoder& operator=(Encoder&&) noexcept = default;

  const std::string& name() const { return name_; }
  std::string arch() const { return model_->arch(); }
  Resolution resolution() const { return {model_->height(), model_->width()}; }
  int channels() const { return model_->channels(); }
  int feature_dim() const { return model_->feature_dim(); }

  std::span<const double> params() const { return model_->params(); }
  std::span<double> mutable_params() { return model_->mutable_params(); }
  std::size_t param_count() const { return params().size(); }
  // SHA-256 over the raw parameter bytes.
  std::string param_hash() const;

  const EncoderModel& model() const { return *model_; }

  Activation forward(const ImageBatch& images, bool keep_state = true) const;
  // See EncoderModel::backward.
  void backward(const Activation& act, const Eigen::MatrixXd& d_features,
                std::span<double> param_grad, std::span<double> input_grad) const;

 private:
  std::unique_ptr<EncoderModel> model_;
  std::string name_;
};

// Frozen clean encoder plus a trainable copy of it.
class EncoderPair {
 public:
  explicit EncoderPair(Encoder clean);

  const Encoder& clean() const { return clean_; }
  Encoder& trainable() { return trainable_; }
  const Encoder& trainable() const { return trainable_; }
  int feature_dim() const { return clean_.feature_dim(); }
  Resolution resolution() const { return clean_.resolution(); }

 private:
  Encoder clean_;
  Encoder trainable_;
};

// Target image and its embedding under the clean encoder, computed once.
struct TargetSpec {
  ImageBatch image;
  Eigen::RowVectorXd embedding;  // raw, 1 x D

  static TargetSpec from_image(const Encoder& clean, ImageBatch image);
};

// --- registry --------------------------------------------------------------

using EncoderFactory = std::function<std::unique_ptr<EncoderModel>(const nlohmann::json& descriptor)>;

// Registers a plugin under `name`. Re-registering replaces the factory.
void register_encoder_plugin(const std::string& name, EncoderFactory factory);
std::vector<std::string> registered_encoder_plugins();

// Builds an encoder from a descriptor. `{"arch": "small-conv", ...}` creates a
// seeded toy encoder; `{"arch": "checkpoint", "path": ...}` loads a saved
// one. Throws ConfigError for unknown plugins and IoError on load failures.
Encoder make_encoder(const nlohmann::json& descriptor);
EncoderPair load_encoder(const nlohmann::json& descriptor);

// Checkpoint: `<path>` is the native weight file, `<path>.json` the sidecar
// {name, arch, dim, resolution, hash, architecture}. Native layout:
//   8 bytes  magic "BVENC001"
//   u32 LE   header length L
//   L bytes  UTF-8 JSON architecture
//   u64 LE   parameter count P
//   P * 8    float64 LE parameters
// `extra` is merged into the sidecar (provenance).
void save_encoder(const std::filesystem::path& path, const Encoder& encoder,
                  const nlohmann::json& extra = nlohmann::json::object());
Encoder load_encoder_checkpoint(const std::filesystem::path& path);

// --- embedding and similarity ----------------------------------------------

// Guard on vector norms for every cosine computation.
inline constexpr double kNormFloor = 1e-12;

FeatureMatrix embed(const Encoder& encoder, const ImageBatch& images, bool normalize);
// Rows divided by max(norm, kNormFloor).
FeatureMatrix normalize_rows(const FeatureMatrix& features);

double cosine_sim(std::span<const double> a, std::span<const double> b);
double cosine_sim(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b);

// Mean cosine over unordered pairs {i, j}, i != j. Throws ContractError if N < 2.
double pairwise_mean_cos(const FeatureMatrix& features);

// Differentiable forms used by the losses. Each returns the value and, when
// the gradient pointer is non-null, writes dvalue/dinput (same shape).
namespace cosgrad {

// (1/N) sum_i cos(F_i, t)
double mean_cos_to(const Eigen::MatrixXd& features, const Eigen::RowVectorXd& target,
                   Eigen::MatrixXd* d_features);
// (1/N) sum_i cos(A_i, B_i); either gradient pointer may be null.
double mean_rowwise_cos(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, Eigen::MatrixXd* d_a,
                        Eigen::MatrixXd* d_b);
// Unordered-pair mean cosine, O(N D).
double pairwise_mean_cos(const Eigen::MatrixXd& features, Eigen::MatrixXd* d_features);
// cos(a, b) and dcos/da.
double cosine(std::span<const double> a, std::span<const double> b, std::span<double> d_a);

}  // namespace cosgrad

}  // namespace badvision

#endif  // BADVISION_ENCODERS_HPP_
