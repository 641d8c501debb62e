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

#include "badvision/small_conv.hpp"

#include <cmath>
#include <random>

#include "badvision/common.hpp"

namespace badvision {
namespace {

using Eigen::MatrixXd;
using ConstMap = Eigen::Map<const MatrixXd>;
using Map = Eigen::Map<MatrixXd>;

struct SmallConvState final : ForwardState {
  std::size_t n = 0;
  std::vector<MatrixXd> cols;     // im2col input of each conv layer
  std::vector<MatrixXd> outputs;  // post-ReLU output of each conv layer
  MatrixXd pooled;                // last_channels x n
};

// Columns are indexed img * size * size + y * size + x; rows are channels.
MatrixXd im2col(const MatrixXd& act, std::size_t n, int in_size, int out_size, int stride) {
  const int channels = static_cast<int>(act.rows());
  const Eigen::Index in_area = static_cast<Eigen::Index>(in_size) * in_size;
  const Eigen::Index out_area = static_cast<Eigen::Index>(out_size) * out_size;
  MatrixXd cols = MatrixXd::Zero(9 * channels, static_cast<Eigen::Index>(n) * out_area);
  for (std::size_t img = 0; img < n; ++img) {
    for (int oy = 0; oy < out_size; ++oy) {
      for (int ox = 0; ox < out_size; ++ox) {
        const Eigen::Index col = static_cast<Eigen::Index>(img) * out_area + oy * out_size + ox;
        for (int ky = 0; ky < 3; ++ky) {
          const int iy = oy * stride - 1 + ky;
          if (iy < 0 || iy >= in_size) continue;
          for (int kx = 0; kx < 3; ++kx) {
            const int ix = ox * stride - 1 + kx;
            if (ix < 0 || ix >= in_size) continue;
            cols.block((ky * 3 + kx) * channels, col, channels, 1) =
                act.col(static_cast<Eigen::Index>(img) * in_area + iy * in_size + ix);
          }
        }
      }
    }
  }
  return cols;
}

MatrixXd col2im(const MatrixXd& cols, int channels, std::size_t n, int in_size, int out_size,
                int stride) {
  const Eigen::Index in_area = static_cast<Eigen::Index>(in_size) * in_size;
  const Eigen::Index out_area = static_cast<Eigen::Index>(out_size) * out_size;
  MatrixXd act = MatrixXd::Zero(channels, static_cast<Eigen::Index>(n) * in_area);
  for (std::size_t img = 0; img < n; ++img) {
    for (int oy = 0; oy < out_size; ++oy) {
      for (int ox = 0; ox < out_size; ++ox) {
        const Eigen::Index col = static_cast<Eigen::Index>(img) * out_area + oy * out_size + ox;
        for (int ky = 0; ky < 3; ++ky) {
          const int iy = oy * stride - 1 + ky;
          if (iy < 0 || iy >= in_size) continue;
          for (int kx = 0; kx < 3; ++kx) {
            const int ix = ox * stride - 1 + kx;
            if (ix < 0 || ix >= in_size) continue;
            act.col(static_cast<Eigen::Index>(img) * in_area + iy * in_size + ix) +=
                cols.block((ky * 3 + kx) * channels, col, channels, 1);
          }
        }
      }
    }
  }
  return act;
}

}  // namespace

nlohmann::json SmallConvSpec::to_json() const {
  return {{"arch", "small-conv"},         {"resolution", resolution},
          {"channels", channels},         {"strides", strides},
          {"dim", dim},                   {"features", token_features ? "tokens" : "pooled"}};
}

SmallConvSpec SmallConvSpec::from_json(const nlohmann::json& j) {
  SmallConvSpec spec;
  try {
    spec.resolution = j.value("resolution", spec.resolution);
    spec.channels = j.value("channels", spec.channels);
    spec.strides = j.value("strides", spec.strides);
    spec.dim = j.value("dim", spec.dim);
    const std::string features = j.value("features", std::string("pooled"));
    if (features != "pooled" && features != "tokens") {
      throw ConfigError("small-conv: features must be \"pooled\" or \"tokens\"");
    }
    spec.token_features = features == "tokens";
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("small-conv descriptor: ") + e.what());
  }
  if (spec.resolution < 4 || spec.dim < 1 || spec.channels.empty() ||
      spec.channels.size() != spec.strides.size()) {
    throw ConfigError("small-conv descriptor: invalid geometry");
  }
  for (std::size_t i = 0; i < spec.channels.size(); ++i) {
    if (spec.channels[i] < 1 || spec.strides[i] < 1 || spec.strides[i] > 2) {
      throw ConfigError("small-conv descriptor: channels must be >= 1 and strides 1 or 2");
    }
  }
  return spec;
}

SmallConvEncoder::SmallConvEncoder(SmallConvSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
  std::size_t offset = 0;
  int in_channels = 3;
  int size = spec_.resolution;
  for (std::size_t i = 0; i < spec_.channels.size(); ++i) {
    ConvLayer layer;
    layer.in_channels = in_channels;
    layer.out_channels = spec_.channels[i];
    layer.stride = spec_.strides[i];
    layer.in_size = size;
    layer.out_size = (size - 1) / layer.stride + 1;
    layer.weight_offset = offset;
    offset += static_cast<std::size_t>(layer.out_channels) * 9 * in_channels;
    layer.bias_offset = offset;
    offset += static_cast<std::size_t>(layer.out_channels);
    layers_.push_back(layer);
    in_channels = layer.out_channels;
    size = layer.out_size;
  }
  head_weight_offset_ = offset;
  offset += static_cast<std::size_t>(spec_.dim) * in_channels;
  head_bias_offset_ = offset;
  offset += static_cast<std::size_t>(spec_.dim);
  params_.assign(offset, 0.0);

  std::mt19937_64 rng(seed);
  for (const auto& layer : layers_) {
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / (9.0 * layer.in_channels)));
    for (std::size_t k = layer.weight_offset; k < layer.bias_offset; ++k) params_[k] = dist(rng);
  }
  std::normal_distribution<double> head(0.0, std::sqrt(1.0 / in_channels));
  for (std::size_t k = head_weight_offset_; k < head_bias_offset_; ++k) params_[k] = head(rng);
}

std::unique_ptr<EncoderModel> SmallConvEncoder::clone() const {
  return std::make_unique<SmallConvEncoder>(*this);
}

int SmallConvEncoder::feature_dim() const {
  if (!spec_.token_features) return spec_.dim;
  const auto& last = layers_.back();
  return spec_.dim + last.out_channels * last.out_size * last.out_size;
}

Eigen::MatrixXd SmallConvEncoder::forward(std::span<const double> pixels, std::size_t n,
                                          std::unique_ptr<ForwardState>* state) const {
  const Eigen::Index area0 = static_cast<Eigen::Index>(spec_.resolution) * spec_.resolution;
  if (n == 0 || pixels.size() != static_cast<std::size_t>(3 * area0) * n) {
    throw ContractError("input does not match the encoder resolution");
  }
  auto st = std::make_unique<SmallConvState>();
  st->n = n;

  MatrixXd act(3, static_cast<Eigen::Index>(n) * area0);
  for (std::size_t img = 0; img < n; ++img) {
    for (int c = 0; c < 3; ++c) {
      for (Eigen::Index p = 0; p < area0; ++p) {
        act(c, static_cast<Eigen::Index>(img) * area0 + p) = pixels[(img * 3 + c) * area0 + p];
      }
    }
  }

  for (const auto& layer : layers_) {
    MatrixXd cols = im2col(act, n, layer.in_size, layer.out_size, layer.stride);
    ConstMap weight(params_.data() + layer.weight_offset, layer.out_channels, 9 * layer.in_channels);
    Eigen::Map<const Eigen::VectorXd> bias(params_.data() + layer.bias_offset, layer.out_channels);
    MatrixXd out = weight * cols;
    out.colwise() += bias;
    out = out.cwiseMax(0.0);
    st->cols.push_back(std::move(cols));
    act = out;
    st->outputs.push_back(std::move(out));
  }

  const auto& last = layers_.back();
  const Eigen::Index area = static_cast<Eigen::Index>(last.out_size) * last.out_size;
  MatrixXd pooled(last.out_channels, static_cast<Eigen::Index>(n));
  for (std::size_t img = 0; img < n; ++img) {
    pooled.col(static_cast<Eigen::Index>(img)) =
        act.middleCols(static_cast<Eigen::Index>(img) * area, area).rowwise().mean();
  }
  ConstMap head(params_.data() + head_weight_offset_, spec_.dim, last.out_channels);
  Eigen::Map<const Eigen::VectorXd> head_bias(params_.data() + head_bias_offset_, spec_.dim);
  MatrixXd projected = head * pooled;
  projected.colwise() += head_bias;

  MatrixXd features(static_cast<Eigen::Index>(n), feature_dim());
  features.leftCols(spec_.dim) = projected.transpose();
  if (spec_.token_features) {
    for (std::size_t img = 0; img < n; ++img) {
      const MatrixXd block = act.middleCols(static_cast<Eigen::Index>(img) * area, area);
      features.row(static_cast<Eigen::Index>(img)).tail(area * last.out_channels) =
          Eigen::Map<const Eigen::RowVectorXd>(block.data(), block.size());
    }
  }
  st->pooled = std::move(pooled);
  if (state != nullptr) *state = std::move(st);
  return features;
}

void SmallConvEncoder::backward(const ForwardState& state, const Eigen::MatrixXd& d_features,
                                std::span<double> param_grad, std::span<double> input_grad) const {
  const auto* st = dynamic_cast<const SmallConvState*>(&state);
  if (st == nullptr) throw ContractError("forward state was not produced by this encoder");
  const std::size_t n = st->n;
  if (d_features.rows() != static_cast<Eigen::Index>(n) || d_features.cols() != feature_dim()) {
    throw ContractError("feature gradient shape mismatch");
  }
  const bool want_params = !param_grad.empty();
  if (want_params && param_grad.size() != params_.size()) {
    throw ContractError("parameter gradient buffer has the wrong size");
  }

  const auto& last = layers_.back();
  const Eigen::Index area = static_cast<Eigen::Index>(last.out_size) * last.out_size;
  const MatrixXd d_projected = d_features.leftCols(spec_.dim).transpose();  // dim x n
  ConstMap head(params_.data() + head_weight_offset_, spec_.dim, last.out_channels);
  if (want_params) {
    Map(param_grad.data() + head_weight_offset_, spec_.dim, last.out_channels) +=
        d_projected * st->pooled.transpose();
    Eigen::Map<Eigen::VectorXd>(param_grad.data() + head_bias_offset_, spec_.dim) +=
        d_projected.rowwise().sum();
  }
  const MatrixXd d_pooled = head.transpose() * d_projected;

  MatrixXd d_act(last.out_channels, static_cast<Eigen::Index>(n) * area);
  for (std::size_t img = 0; img < n; ++img) {
    d_act.middleCols(static_cast<Eigen::Index>(img) * area, area) =
        (d_pooled.col(static_cast<Eigen::Index>(img)) / static_cast<double>(area)).replicate(1, area);
    if (spec_.token_features) {
      const Eigen::RowVectorXd tokens =
          d_features.row(static_cast<Eigen::Index>(img)).tail(area * last.out_channels);
      d_act.middleCols(static_cast<Eigen::Index>(img) * area, area) +=
          Eigen::Map<const MatrixXd>(tokens.data(), last.out_channels, area);
    }
  }

  for (std::size_t li = layers_.size(); li-- > 0;) {
    const auto& layer = layers_[li];
    const MatrixXd d_z = d_act.cwiseProduct((st->outputs[li].array() > 0.0).cast<double>().matrix());
    if (want_params) {
      Map(param_grad.data() + layer.weight_offset, layer.out_channels, 9 * layer.in_channels) +=
          d_z * st->cols[li].transpose();
      Eigen::Map<Eigen::VectorXd>(param_grad.data() + layer.bias_offset, layer.out_channels) +=
          d_z.rowwise().sum();
    }
    if (li == 0 && input_grad.empty()) break;
    ConstMap weight(params_.data() + layer.weight_offset, layer.out_channels, 9 * layer.in_channels);
    const MatrixXd d_cols = weight.transpose() * d_z;
    d_act = col2im(d_cols, layer.in_channels, n, layer.in_size, layer.out_size, layer.stride);
  }

  if (!input_grad.empty()) {
    const Eigen::Index area0 = static_cast<Eigen::Index>(spec_.resolution) * spec_.resolution;
    if (input_grad.size() != static_cast<std::size_t>(3 * area0) * n) {
      throw ContractError("input gradient buffer has the wrong size");
    }
    for (std::size_t img = 0; img < n; ++img) {
      for (int c = 0; c < 3; ++c) {
        for (Eigen::Index p = 0; p < area0; ++p) {
          input_grad[(img * 3 + c) * area0 + p] = d_act(c, static_cast<Eigen::Index>(img) * area0 + p);
        }
      }
    }
  }
}

}  // namespace badvision
