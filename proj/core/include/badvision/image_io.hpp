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

#ifndef BADVISION_IMAGE_IO_HPP_
#define BADVISION_IMAGE_IO_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace badvision {

// 8-bit interleaved RGB raster, row-major, 3 bytes per pixel.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;
};

// Decodes PNG, JPEG, or binary/ASCII PPM/PGM (P2, P3, P5, P6). Grayscale is
// replicated across channels and alpha is dropped. Throws InputError.
RgbImage decode_image(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

// Throws IoError.
void write_png(const std::filesystem::path& path, const RgbImage& image);

// File extensions (lower-case, with dot) accepted by folder ingestion.
bool has_image_extension(const std::filesystem::path& path);

}  // namespace badvision

#endif  // BADVISION_IMAGE_IO_HPP_
