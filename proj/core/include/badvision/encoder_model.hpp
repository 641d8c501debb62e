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

#ifndef BADVISION_ENCODER_MODEL_HPP_
#define BADVISION_ENCODER_MODEL_HPP_

#include <cstddef>
#include <memory>
#include <span>
#include <string>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace badvision {

// Opaque per-call activations kept for the backward pass.
struct ForwardState {
  virtual ~ForwardState() = default;
};

// Differentiable image -> feature map. Plugins implement this interface and
// register a factory with the encoder registry.
//
// Parameters are exposed as one flat vector so optimizers, hashing and
// finite-difference checks treat every model the same way.
class EncoderModel {
 public:
  virtual ~EncoderModel() = default;

  virtual std::unique_ptr<EncoderModel> clone() const = 0;

  // Registry key; also stored in checkpoints.
  virtual std::string arch() const = 0;
  // Everything needed to rebuild an identically-shaped model via the registry
  // (weights excluded).
  virtual nlohmann::json architecture() const = 0;

  virtual int channels() const = 0;
  virtual int height() const = 0;
  virtual int width() const = 0;
  virtual int feature_dim() const = 0;

  virtual std::span<const double> params() const = 0;
  virtual std::span<double> mutable_params() = 0;

  // `pixels` holds n images in NCHW order. Returns the n x D raw (unnormalized)
  // features. When `state` is non-null it receives what backward() needs.
  virtual Eigen::MatrixXd forward(std::span<const double> pixels, std::size_t n,
                                  std::unique_ptr<ForwardState>* state) const = 0;

  // Accumulates dL/dparams into `param_grad` (skipped if empty) and writes
  // dL/dpixels into `input_grad` (skipped if empty; overwritten, not summed).
  virtual void backward(const ForwardState& state, const Eigen::MatrixXd& d_features,
                        std::span<double> param_grad, std::span<double> input_grad) const = 0;
};

}  // namespace badvision

#endif  // BADVISION_ENCODER_MODEL_HPP_
