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

#include "badvision/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "badvision/common.hpp"

namespace badvision {
namespace {

struct Color {
  double r, g, b;
};

Color random_color(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return {u(rng), u(rng), u(rng)};
}

void put(RgbImage& img, int x, int y, const Color& c) {
  auto to_byte = [](double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); };
  const std::size_t at = (static_cast<std::size_t>(y) * img.width + x) * 3;
  img.rgb[at] = to_byte(c.r);
  img.rgb[at + 1] = to_byte(c.g);
  img.rgb[at + 2] = to_byte(c.b);
}

Color mix(const Color& a, const Color& b, double t) {
  return {a.r + (b.r - a.r) * t, a.g + (b.g - a.g) * t, a.b + (b.b - a.b) * t};
}

}  // namespace

RgbImage synthetic_scene(std::uint64_t seed, std::size_t index, int width, int height) {
  if (width < 4 || height < 4) throw ContractError("synthetic_scene: image too small");
  std::mt19937_64 rng(derive_seed(seed, 101, index));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  RgbImage img{width, height, std::vector<std::uint8_t>(static_cast<std::size_t>(width) * height * 3)};
  std::vector<Color> canvas(static_cast<std::size_t>(width) * height);

  const Color c0 = random_color(rng);
  const Color c1 = random_color(rng);
  const int background = static_cast<int>(u(rng) * 4.0);
  const double angle = u(rng) * std::numbers::pi;
  const double freq = 1.0 + u(rng) * 5.0;
  const double ca = std::cos(angle);
  const double sa = std::sin(angle);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double nx = static_cast<double>(x) / width;
      const double ny = static_cast<double>(y) / height;
      const double t = nx * ca + ny * sa;
      double w = 0.0;
      switch (background) {
        case 0: w = 0.0; break;
        case 1: w = std::clamp(t, 0.0, 1.0); break;
        case 2: w = 0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * freq * t); break;
        default: w = ((static_cast<int>(nx * freq * 2) + static_cast<int>(ny * freq * 2)) % 2) ? 1.0 : 0.0; break;
      }
      canvas[static_cast<std::size_t>(y) * width + x] = mix(c0, c1, w);
    }
  }

  const int shapes = 1 + static_cast<int>(u(rng) * 3.0);
  for (int s = 0; s < shapes; ++s) {
    const Color c = random_color(rng);
    const int kind = static_cast<int>(u(rng) * 3.0);
    const double cx = u(rng) * width;
    const double cy = u(rng) * height;
    const double radius = (0.1 + 0.25 * u(rng)) * std::min(width, height);
    const double aspect = 0.5 + u(rng);
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        const double dx = (x + 0.5 - cx) / radius;
        const double dy = (y + 0.5 - cy) / (radius * aspect);
        bool inside = false;
        if (kind == 0) inside = dx * dx + dy * dy <= 1.0;
        else if (kind == 1) inside = std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0;
        else inside = dy <= 1.0 && dy >= -1.0 && std::abs(dx) <= (dy + 1.0) * 0.5;
        if (inside) canvas[static_cast<std::size_t>(y) * width + x] = c;
      }
    }
  }

  std::normal_distribution<double> noise(0.0, 0.02);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      Color c = canvas[static_cast<std::size_t>(y) * width + x];
      const double n = noise(rng);
      put(img, x, y, {c.r + n, c.g + n, c.b + n});
    }
  }
  return img;
}

RgbImage synthetic_target(int width, int height) {
  if (width < 4 || height < 4) throw ContractError("synthetic_target: image too small");
  RgbImage img{width, height, std::vector<std::uint8_t>(static_cast<std::size_t>(width) * height * 3)};
  const Color ring_a{0.95, 0.85, 0.1};
  const Color ring_b{0.6, 0.05, 0.55};
  const double cx = width / 2.0;
  const double cy = height / 2.0;
  const double scale = std::min(width, height) / 2.0;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double r = std::hypot(x + 0.5 - cx, y + 0.5 - cy) / scale;
      Color c;
      if (r < 0.9) {
        c = (static_cast<int>(r * 6.0) % 2) ? ring_b : ring_a;
      } else {
        c = x < width / 2 ? Color{0.05, 0.6, 0.9} : Color{0.1, 0.1, 0.1};
      }
      put(img, x, y, c);
    }
  }
  return img;
}

std::vector<std::filesystem::path> write_synthetic_folder(const std::filesystem::path& dir, std::size_t count,
                                                          std::uint64_t seed, int width, int height,
                                                          const std::string& prefix) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  std::vector<std::filesystem::path> written;
  written.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    char name[64];
    std::snprintf(name, sizeof(name), "%s_%05zu.png", prefix.c_str(), i);
    const auto path = dir / name;
    write_png(path, synthetic_scene(seed, i, width, height));
    written.push_back(path);
  }
  return written;
}

const std::vector<ToySplit>& toy_splits() {
  static const std::vector<ToySplit> splits{{"pretrain", 2000}, {"shadow", 500}, {"test", 200},
                                            {"gallery", 200},   {"probe", 200},  {"finetune", 300}};
  return splits;
}

void write_toy_dataset(const std::filesystem::path& root, std::uint64_t seed) {
  const auto& splits = toy_splits();
  for (std::size_t i = 0; i < splits.size(); ++i) {
    write_synthetic_folder(root / splits[i].name, splits[i].count, derive_seed(seed, 100, i + 1), kToyImageWidth,
                           kToyImageHeight, splits[i].name);
  }
  write_png(root / "target.png", synthetic_target(kToyImageWidth, kToyImageHeight));
}

}  // namespace badvision
