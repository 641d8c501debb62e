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

#ifndef BADVISION_PRETRAIN_HPP_
#define BADVISION_PRETRAIN_HPP_

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "badvision/data.hpp"
#include "badvision/encoders.hpp"

// Contrastive (two-view NT-Xent) pretraining for the toy encoder, so the
// attack starts from a representation with spread-out features.
namespace badvision {

struct PretrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  double lr = 1e-3;
  double temperature = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
};

// Rows [0, B) and [B, 2B) are two views of the same B images; row i's
// positive is row (i + B) mod 2B. Returns the mean loss over the 2B anchors
// and, when `d_features` is non-null, its gradient w.r.t. the raw rows.
double nt_xent_loss(const Eigen::MatrixXd& features, double temperature, Eigen::MatrixXd* d_features);

// Random resized crop (area 40-100%), horizontal flip, brightness,
// contrast and per-channel gain jitter. Pure function of (images, seed).
ImageBatch augment(const ImageBatch& images, std::uint64_t seed);

// Adam on nt_xent_loss. Returns per-epoch mean losses.
std::vector<double> pretrain_contrastive(Encoder& encoder, const ImageBatch& data, const PretrainConfig& cfg,
                                         const std::function<void(std::size_t, double)>& on_epoch = {});

}  // namespace badvision

#endif  // BADVISION_PRETRAIN_HPP_
