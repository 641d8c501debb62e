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

#include "badvision/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "badvision/common.hpp"
#include "badvision/optim.hpp"

namespace badvision {

void PretrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("pretrain.epochs must be >= 1");
  if (batch_size < 2) throw ConfigError("pretrain.batch_size must be >= 2");
  if (!(lr > 0.0)) throw ConfigError("pretrain.lr must be > 0");
  if (!(temperature > 0.0)) throw ConfigError("pretrain.temperature must be > 0");
}

double nt_xent_loss(const Eigen::MatrixXd& features, double temperature, Eigen::MatrixXd* d_features) {
  const Eigen::Index n = features.rows();
  if (n < 2 || n % 2 != 0) throw ContractError("nt_xent_loss needs an even number (>= 2) of rows");
  const Eigen::Index half = n / 2;
  Eigen::VectorXd norms = features.rowwise().norm().cwiseMax(kNormFloor);
  Eigen::MatrixXd z = norms.cwiseInverse().asDiagonal() * features;
  Eigen::MatrixXd logits = (z * z.transpose()) / temperature;

  Eigen::MatrixXd d_logits = Eigen::MatrixXd::Zero(n, n);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index pos = (i + half) % n;
    double row_max = -std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < n; ++k) {
      if (k != i) row_max = std::max(row_max, logits(i, k));
    }
    double denom = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
      if (k != i) denom += std::exp(logits(i, k) - row_max);
    }
    loss += -logits(i, pos) + row_max + std::log(denom);
    for (Eigen::Index k = 0; k < n; ++k) {
      if (k != i) d_logits(i, k) = std::exp(logits(i, k) - row_max) / denom;
    }
    d_logits(i, pos) -= 1.0;
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  loss *= inv_n;
  if (d_features != nullptr) {
    d_logits *= inv_n / temperature;
    const Eigen::MatrixXd dz = (d_logits + d_logits.transpose()) * z;
    Eigen::MatrixXd dx(n, features.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
      dx.row(i) = (dz.row(i) - dz.row(i).dot(z.row(i)) * z.row(i)) / norms(i);
    }
    *d_features = std::move(dx);
  }
  return loss;
}

ImageBatch augment(const ImageBatch& images, std::uint64_t seed) {
  const int c = images.channels();
  const int h = images.height();
  const int w = images.width();
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  std::vector<double> out(images.pixels().size());
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t n = 0; n < images.size(); ++n) {
    std::mt19937_64 rng(derive_seed(seed, 201, n));
    const double area = 0.4 + 0.6 * u(rng);
    const double aspect = std::exp(std::log(3.0 / 4.0) + u(rng) * std::log(16.0 / 9.0));
    const double ch = std::min<double>(h, std::sqrt(area / aspect) * h);
    const double cw = std::min<double>(w, std::sqrt(area * aspect) * w);
    const double y0 = u(rng) * (h - ch);
    const double x0 = u(rng) * (w - cw);
    const bool flip = u(rng) < 0.5;
    const double brightness = (u(rng) - 0.5) * 0.4;
    const double contrast = 0.7 + 0.6 * u(rng);
    double gain[3];
    for (double& g : gain) g = 0.8 + 0.4 * u(rng);
    const auto src = images.image(n);
    double* dst = out.data() + n * images.image_size();
    for (int ch_i = 0; ch_i < c; ++ch_i) {
      const double* s = src.data() + ch_i * plane;
      double mean = 0.0;
      for (std::size_t k = 0; k < plane; ++k) mean += s[k];
      mean /= static_cast<double>(plane);
      for (int y = 0; y < h; ++y) {
        const double sy = std::clamp(y0 + (y + 0.5) * ch / h - 0.5, 0.0, h - 1.0);
        const int iy = std::min(static_cast<int>(sy), h - 2);
        const double fy = sy - iy;
        for (int x = 0; x < w; ++x) {
          const int xx = flip ? w - 1 - x : x;
          const double sx = std::clamp(x0 + (xx + 0.5) * cw / w - 0.5, 0.0, w - 1.0);
          const int ix = std::min(static_cast<int>(sx), w - 2);
          const double fx = sx - ix;
          const double v = (1 - fy) * ((1 - fx) * s[iy * w + ix] + fx * s[iy * w + ix + 1]) +
                           fy * ((1 - fx) * s[(iy + 1) * w + ix] + fx * s[(iy + 1) * w + ix + 1]);
          const double j = ((v - mean) * contrast + mean + brightness) * gain[ch_i % 3];
          dst[ch_i * plane + y * w + x] = std::clamp(j, 0.0, 1.0);
        }
      }
    }
  }
  return ImageBatch(c, h, w, std::move(out), images.ids());
}

std::vector<double> pretrain_contrastive(Encoder& encoder, const ImageBatch& data, const PretrainConfig& cfg,
                                         const std::function<void(std::size_t, double)>& on_epoch) {
  cfg.validate();
  if (data.size() < 2) throw ContractError("pretrain_contrastive needs at least two images");
  Adam adam(encoder.param_count());
  std::vector<double> grad(encoder.param_count());
  std::vector<double> losses;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& idx : epoch_batches(data.size(), cfg.batch_size, derive_seed(cfg.seed, 202, epoch))) {
      const ImageBatch batch = data.gather(idx);
      const ImageBatch a = augment(batch, derive_seed(cfg.seed, 203, 2 * step));
      const ImageBatch b = augment(batch, derive_seed(cfg.seed, 203, 2 * step + 1));
      std::vector<double> both(a.pixels().begin(), a.pixels().end());
      both.insert(both.end(), b.pixels().begin(), b.pixels().end());
      std::vector<std::string> ids = a.ids();
      ids.insert(ids.end(), b.ids().begin(), b.ids().end());
      const ImageBatch views(a.channels(), a.height(), a.width(), std::move(both), std::move(ids));
      const Activation act = encoder.forward(views, true);
      Eigen::MatrixXd d_features;
      const double loss = nt_xent_loss(act.features, cfg.temperature, &d_features);
      if (!std::isfinite(loss)) throw DivergenceError("pretraining loss is not finite", "{}");
      std::fill(grad.begin(), grad.end(), 0.0);
      encoder.backward(act, d_features, grad, {});
      adam.step(encoder.mutable_params(), grad, cfg.lr);
      sum += loss;
      ++count;
      ++step;
    }
    losses.push_back(sum / static_cast<double>(count));
    if (on_epoch) on_epoch(epoch, losses.back());
  }
  return losses;
}

}  // namespace badvision
