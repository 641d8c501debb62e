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

#ifndef BADVISION_DATA_HPP_
#define BADVISION_DATA_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "badvision/image_io.hpp"
#include "badvision/perturbation.hpp"

namespace badvision {

// Encoder input geometry. Images are always RGB.
struct Resolution {
  int height = 32;
  int width = 32;
  friend bool operator==(const Resolution&, const Resolution&) = default;
};

inline constexpr int kImageChannels = 3;

// Batch of N images, N x C x H x W, contiguous, every value in [0, 1].
// Immutable after construction.
class ImageBatch {
 public:
  ImageBatch() = default;
  // Throws ContractError if N < 1, the buffer size disagrees with the shape,
  // or any value is outside [0, 1].
  ImageBatch(int channels, int height, int width, std::vector<double> pixels,
             std::vector<std::string> ids);

  std::size_t size() const { return ids_.size(); }
  int channels() const { return channels_; }
  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t image_size() const { return static_cast<std::size_t>(channels_) * height_ * width_; }

  std::span<const double> pixels() const { return pixels_; }
  std::span<const double> image(std::size_t i) const;
  const std::vector<std::string>& ids() const { return ids_; }

  // Images at `indices`, in that order.
  ImageBatch gather(std::span<const std::size_t> indices) const;
  // Images [begin, end).
  ImageBatch slice(std::size_t begin, std::size_t end) const;

 private:
  int channels_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::vector<double> pixels_;
  std::vector<std::string> ids_;
};

// Decode, resize and crop one encoded image.
//
// Resize policy: the image is scaled by s = max(H/h, W/w) so the crop window
// fits, to (max(H, round(h*s)), max(W, round(w*s))), using bilinear
// interpolation with half-pixel centres (src = (dst + 0.5) / s' - 0.5,
// clamped to the valid range, s' the per-axis ratio). The centre H x W window
// is then cropped at offset floor((rh - H) / 2), floor((rw - W) / 2). Output
// is RGB, CHW order, value / 255. Throws InputError on decode failure.
ImageBatch preprocess(std::span<const std::uint8_t> encoded, Resolution resolution,
                      std::string id = "image");
ImageBatch preprocess(const RgbImage& image, Resolution resolution, std::string id);

// clamp(images + p, 0, 1), broadcast over the batch. Throws ContractError on
// shape mismatch.
ImageBatch apply_trigger(const ImageBatch& images, const Perturbation& p);
ImageBatch apply_trigger(const ImageBatch& images, std::span<const double> p);

// Chain rule through apply_trigger: given dL/d(output) for every image,
// returns dL/dp summed over the batch. The clamp passes gradient where
// 0 <= x + p <= 1 (inclusive, matching common autodiff conventions).
std::vector<double> trigger_gradient(const ImageBatch& images, std::span<const double> p,
                                     std::span<const double> output_grad);

// Attacker-held image collection in delivery order.
struct ShadowDataset {
  std::filesystem::path source;
  std::size_t cap = 0;
  std::uint64_t seed = 0;
  ImageBatch images;
  std::vector<std::string> checksums;  // SHA-256 of each source file

  std::size_t size() const { return images.size(); }
};

// Scans `source` (non-recursively) for image files, orders them by a seeded
// permutation of the sorted relative paths, and decodes them in that order,
// skipping undecodable files, until `cap` images are collected. Ids are the
// relative paths. Throws InputError when `source` is unreadable and
// EmptyDatasetError when nothing decodes.
ShadowDataset load_shadow_dataset(const std::filesystem::path& source, std::size_t cap,
                                  std::uint64_t seed, Resolution resolution);

// Line-delimited manifest, one JSON object per image:
// {"id": ..., "path": <relative path>, "sha256": ...}
void write_manifest(const ShadowDataset& dataset, const std::filesystem::path& path);

// Shuffled minibatch index lists covering [0, n) once. The last batch may be
// short; batches of a single image are merged into the previous one so
// pairwise objectives always see at least two rows (when n >= 2).
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size,
                                                    std::uint64_t seed);

}  // namespace badvision

#endif  // BADVISION_DATA_HPP_
