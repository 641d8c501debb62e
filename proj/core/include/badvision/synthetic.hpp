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

#ifndef BADVISION_SYNTHETIC_HPP_
#define BADVISION_SYNTHETIC_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "badvision/image_io.hpp"

// Procedural scenes for the desk-scale fixture: a textured background with
// a few flat-coloured shapes. Pure function of (seed, index).
namespace badvision {

RgbImage synthetic_scene(std::uint64_t seed, std::size_t index, int width, int height);

// Fixed, visually distinct target picture (concentric rings on a split
// background). Never produced by synthetic_scene.
RgbImage synthetic_target(int width, int height);

// Writes `count` scenes as <prefix>_NNNNN.png into `dir` (created if needed)
// and returns the written paths.
std::vector<std::filesystem::path> write_synthetic_folder(const std::filesystem::path& dir, std::size_t count,
                                                          std::uint64_t seed, int width, int height,
                                                          const std::string& prefix = "img");

struct ToySplit {
  std::string name;
  std::size_t count;
};

// pretrain 2000, shadow 500, test 200, gallery 200, probe 200, finetune 300.
const std::vector<ToySplit>& toy_splits();
inline constexpr int kToyImageWidth = 40;
inline constexpr int kToyImageHeight = 36;

// Writes every toy split as a sub-folder of `root` plus root/target.png.
// Split i uses generator seed derive_seed(seed, 100, i + 1).
void write_toy_dataset(const std::filesystem::path& root, std::uint64_t seed);

}  // namespace badvision

#endif  // BADVISION_SYNTHETIC_HPP_
