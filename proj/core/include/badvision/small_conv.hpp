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

#ifndef BADVISION_SMALL_CONV_HPP_
#define BADVISION_SMALL_CONV_HPP_

#include <cstdint>
#include <vector>

#include "badvision/encoder_model.hpp"

namespace badvision {

// Shape of the bundled toy encoder: a stack of 3x3 convolutions (padding 1,
// ReLU), global average pooling, and a linear projection to `dim`.
//
// With token_features the embedding is the projection followed by the final
// feature map flattened position-major (one C-vector per spatial "token").
struct SmallConvSpec {
  int resolution = 32;
  std::vector<int> channels{16, 32, 64};
  std::vector<int> strides{2, 2, 2};
  int dim = 64;
  bool token_features = false;

  nlohmann::json to_json() const;
  static SmallConvSpec from_json(const nlohmann::json& j);
};

class SmallConvEncoder final : public EncoderModel {
 public:
  // Parameters are He-initialised from `seed`.
  SmallConvEncoder(SmallConvSpec spec, std::uint64_t seed);

  std::unique_ptr<EncoderModel> clone() const override;
  std::string arch() const override { return "small-conv"; }
  nlohmann::json architecture() const override { return spec_.to_json(); }

  int channels() const override { return 3; }
  int height() const override { return spec_.resolution; }
  int width() const override { return spec_.resolution; }
  int feature_dim() const override;

  std::span<const double> params() const override { return params_; }
  std::span<double> mutable_params() override { return params_; }

  Eigen::MatrixXd forward(std::span<const double> pixels, std::size_t n,
                          std::unique_ptr<ForwardState>* state) const override;
  void backward(const ForwardState& state, const Eigen::MatrixXd& d_features,
                std::span<double> param_grad, std::span<double> input_grad) const override;

  const SmallConvSpec& spec() const { return spec_; }

 private:
  struct ConvLayer {
    int in_channels;
    int out_channels;
    int stride;
    int in_size;
    int out_size;
    std::size_t weight_offset;  // out x (9 * in), column-major
    std::size_t bias_offset;
  };

  SmallConvSpec spec_;
  std::vector<ConvLayer> layers_;
  std::size_t head_weight_offset_ = 0;  // dim x last_channels, column-major
  std::size_t head_bias_offset_ = 0;
  std::vector<double> params_;
};

}  // namespace badvision

#endif  // BADVISION_SMALL_CONV_HPP_
