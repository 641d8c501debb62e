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

#ifndef BADVISION_TESTS_SUPPORT_HPP_
#define BADVISION_TESTS_SUPPORT_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "badvision/badvision.hpp"

namespace bvtest {

// Committed pretrained toy encoder.
std::filesystem::path fixture_encoder_path();
badvision::Encoder fixture_encoder();

// Full toy dataset (every split plus target.png), generated once per build
// tree and reused.
std::filesystem::path toy_data_dir();
// One split of the toy dataset at 32x32, in the loader's seed-0 order.
badvision::ShadowDataset toy_split(const std::string& name, std::size_t cap);
badvision::ImageBatch toy_target_image();

// In-memory batch of procedural scenes at 32x32.
badvision::ImageBatch scene_batch(std::size_t n, std::uint64_t seed);

// Fresh empty directory under the system temp dir.
std::filesystem::path scratch_dir(const std::string& tag);

// Seeded small-conv encoder (untrained).
badvision::Encoder random_encoder(std::uint64_t seed = 7);

// Central difference (f(x+h) - f(x-h)) / 2h at one coordinate of `values`.
template <typename F>
double central_difference(std::vector<double>& values, std::size_t k, double h, F&& f) {
  const double saved = values[k];
  values[k] = saved + h;
  const double plus = f();
  values[k] = saved - h;
  const double minus = f();
  values[k] = saved;
  return (plus - minus) / (2.0 * h);
}

// Parameter-free encoder whose features are the pixels minus 0.5, so tests
// can place feature vectors exactly.
badvision::Encoder centering_encoder(int height, int width);

bool relative_close(double a, double b, double rel, double abs_floor = 1e-9);

}  // namespace bvtest

#endif  // BADVISION_TESTS_SUPPORT_HPP_
