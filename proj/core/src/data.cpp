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

#include "badvision/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "badvision/common.hpp"

namespace badvision {

ImageBatch::ImageBatch(int channels, int height, int width, std::vector<double> pixels,
                       std::vector<std::string> ids)
    : channels_(channels),
      height_(height),
      width_(width),
      pixels_(std::move(pixels)),
      ids_(std::move(ids)) {
  if (ids_.empty()) throw ContractError("image batch must hold at least one image");
  if (channels <= 0 || height <= 0 || width <= 0) throw ContractError("image shape must be positive");
  if (pixels_.size() != ids_.size() * image_size()) {
    throw ContractError("image buffer size does not match N x C x H x W");
  }
  for (double v : pixels_) {
    if (!(v >= 0.0 && v <= 1.0)) throw ContractError("pixel value outside [0, 1]");
  }
}

std::span<const double> ImageBatch::image(std::size_t i) const {
  if (i >= size()) throw ContractError("image index out of range");
  return std::span<const double>(pixels_).subspan(i * image_size(), image_size());
}

ImageBatch ImageBatch::gather(std::span<const std::size_t> indices) const {
  std::vector<double> pixels;
  pixels.reserve(indices.size() * image_size());
  std::vector<std::string> ids;
  ids.reserve(indices.size());
  for (std::size_t i : indices) {
    auto img = image(i);
    pixels.insert(pixels.end(), img.begin(), img.end());
    ids.push_back(ids_[i]);
  }
  return ImageBatch(channels_, height_, width_, std::move(pixels), std::move(ids));
}

ImageBatch ImageBatch::slice(std::size_t begin, std::size_t end) const {
  if (begin >= end || end > size()) throw ContractError("invalid image slice");
  std::vector<std::size_t> idx(end - begin);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = begin + i;
  return gather(idx);
}

ImageBatch preprocess(const RgbImage& image, Resolution resolution, std::string id) {
  const int h = image.height;
  const int w = image.width;
  const int out_h = resolution.height;
  const int out_w = resolution.width;
  if (h <= 0 || w <= 0 || image.rgb.size() != static_cast<std::size_t>(h) * w * 3) {
    throw InputError("decoded image has an invalid raster");
  }
  if (out_h <= 0 || out_w <= 0) throw ContractError("resolution must be positive");

  const double scale = std::max(static_cast<double>(out_h) / h, static_cast<double>(out_w) / w);
  const int rh = std::max(out_h, static_cast<int>(std::lround(h * scale)));
  const int rw = std::max(out_w, static_cast<int>(std::lround(w * scale)));
  const int off_y = (rh - out_h) / 2;
  const int off_x = (rw - out_w) / 2;
  const double ry = static_cast<double>(h) / rh;
  const double rx = static_cast<double>(w) / rw;

  std::vector<double> pixels(static_cast<std::size_t>(kImageChannels) * out_h * out_w);
  for (int y = 0; y < out_h; ++y) {
    const double sy = std::clamp((y + off_y + 0.5) * ry - 0.5, 0.0, static_cast<double>(h - 1));
    const int y0 = static_cast<int>(std::floor(sy));
    const int y1 = std::min(y0 + 1, h - 1);
    const double wy = sy - y0;
    for (int x = 0; x < out_w; ++x) {
      const double sx = std::clamp((x + off_x + 0.5) * rx - 0.5, 0.0, static_cast<double>(w - 1));
      const int x0 = static_cast<int>(std::floor(sx));
      const int x1 = std::min(x0 + 1, w - 1);
      const double wx = sx - x0;
      for (int c = 0; c < kImageChannels; ++c) {
        auto at = [&](int yy, int xx) {
          return static_cast<double>(image.rgb[(static_cast<std::size_t>(yy) * w + xx) * 3 + c]);
        };
        const double top = at(y0, x0) + (at(y0, x1) - at(y0, x0)) * wx;
        const double bottom = at(y1, x0) + (at(y1, x1) - at(y1, x0)) * wx;
        const double value = top + (bottom - top) * wy;
        pixels[(static_cast<std::size_t>(c) * out_h + y) * out_w + x] = std::clamp(value / 255.0, 0.0, 1.0);
      }
    }
  }
  return ImageBatch(kImageChannels, out_h, out_w, std::move(pixels), {std::move(id)});
}

ImageBatch preprocess(std::span<const std::uint8_t> encoded, Resolution resolution, std::string id) {
  return preprocess(decode_image(encoded), resolution, std::move(id));
}

ImageBatch apply_trigger(const ImageBatch& images, std::span<const double> p) {
  if (p.size() != images.image_size()) {
    throw ContractError("perturbation shape does not match the image shape");
  }
  std::vector<double> out(images.pixels().begin(), images.pixels().end());
  const std::size_t stride = images.image_size();
  for (std::size_t n = 0; n < images.size(); ++n) {
    double* img = out.data() + n * stride;
    for (std::size_t k = 0; k < stride; ++k) img[k] = std::clamp(img[k] + p[k], 0.0, 1.0);
  }
  return ImageBatch(images.channels(), images.height(), images.width(), std::move(out), images.ids());
}

ImageBatch apply_trigger(const ImageBatch& images, const Perturbation& p) {
  if (p.channels() != images.channels() || p.height() != images.height() ||
      p.width() != images.width()) {
    throw ContractError("perturbation shape does not match the image shape");
  }
  return apply_trigger(images, p.values());
}

std::vector<double> trigger_gradient(const ImageBatch& images, std::span<const double> p,
                                     std::span<const double> output_grad) {
  const std::size_t stride = images.image_size();
  if (p.size() != stride || output_grad.size() != images.pixels().size()) {
    throw ContractError("gradient shape does not match the batch");
  }
  std::vector<double> grad(stride, 0.0);
  const auto pixels = images.pixels();
  for (std::size_t n = 0; n < images.size(); ++n) {
    for (std::size_t k = 0; k < stride; ++k) {
      const double v = pixels[n * stride + k] + p[k];
      if (v >= 0.0 && v <= 1.0) grad[k] += output_grad[n * stride + k];
    }
  }
  return grad;
}

ShadowDataset load_shadow_dataset(const std::filesystem::path& source, std::size_t cap,
                                  std::uint64_t seed, Resolution resolution) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(source, ec)) {
    throw InputError("dataset source is not a readable directory: " + source.string());
  }
  std::vector<std::string> candidates;
  for (fs::directory_iterator it(source, ec), end; !ec && it != end; it.increment(ec)) {
    if (it->is_regular_file(ec) && has_image_extension(it->path())) {
      candidates.push_back(it->path().filename().string());
    }
  }
  if (ec) throw InputError("cannot list " + source.string() + ": " + ec.message());
  std::sort(candidates.begin(), candidates.end());

  ShadowDataset dataset;
  dataset.source = source;
  dataset.cap = cap;
  dataset.seed = seed;
  std::vector<double> pixels;
  std::vector<std::string> ids;
  for (std::size_t index : seeded_permutation(candidates.size(), seed)) {
    if (ids.size() >= cap) break;
    const std::string& name = candidates[index];
    std::vector<std::uint8_t> bytes;
    ImageBatch image;
    try {
      bytes = read_file_bytes(source / name);
      image = preprocess(bytes, resolution, name);
    } catch (const InputError&) {
      continue;
    }
    pixels.insert(pixels.end(), image.pixels().begin(), image.pixels().end());
    ids.push_back(name);
    dataset.checksums.push_back(sha256_hex(std::span<const std::uint8_t>(bytes)));
  }
  if (ids.empty()) {
    throw EmptyDatasetError("no decodable images in " + source.string());
  }
  dataset.images = ImageBatch(kImageChannels, resolution.height, resolution.width, std::move(pixels),
                              std::move(ids));
  return dataset;
}

void write_manifest(const ShadowDataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest " + path.string());
  const auto& ids = dataset.images.ids();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    nlohmann::json line{{"id", ids[i]}, {"path", ids[i]}, {"sha256", dataset.checksums[i]}};
    out << line.dump() << '\n';
  }
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size,
                                                    std::uint64_t seed) {
  if (batch_size == 0) throw ContractError("batch size must be positive");
  const auto order = seeded_permutation(n, seed);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < n; i += batch_size) {
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + batch_size)));
  }
  if (batches.size() > 1 && batches.back().size() == 1) {
    batches[batches.size() - 2].push_back(batches.back().front());
    batches.pop_back();
  }
  return batches;
}

}  // namespace badvision
