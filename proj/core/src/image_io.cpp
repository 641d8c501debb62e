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

#include "badvision/image_io.hpp"

#include <jpeglib.h>
#include <png.h>

#include <algorithm>
#include <cctype>
#include <csetjmp>
#include <cstring>
#include <fstream>
#include <string>

#include "badvision/common.hpp"

namespace badvision {
namespace {

bool starts_with(std::span<const std::uint8_t> bytes, std::initializer_list<std::uint8_t> magic) {
  if (bytes.size() < magic.size()) return false;
  return std::equal(magic.begin(), magic.end(), bytes.begin());
}

RgbImage decode_png(std::span<const std::uint8_t> bytes) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw InputError(std::string("png decode failed: ") + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  RgbImage out;
  out.width = static_cast<int>(image.width);
  out.height = static_cast<int>(image.height);
  out.rgb.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, out.rgb.data(), 0, nullptr)) {
    std::string message = image.message;
    png_image_free(&image);
    throw InputError("png decode failed: " + message);
  }
  return out;
}

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr info) {
  auto* manager = reinterpret_cast<JpegErrorManager*>(info->err);
  (*info->err->format_message)(info, manager->message);
  std::longjmp(manager->jump, 1);
}

RgbImage decode_jpeg(std::span<const std::uint8_t> bytes) {
  jpeg_decompress_struct info;
  JpegErrorManager error;
  info.err = jpeg_std_error(&error.base);
  error.base.error_exit = jpeg_error_exit;
  RgbImage out;
  // No C++ objects with non-trivial destructors may be created between
  // setjmp and the last libjpeg call; `out` is constructed above.
  if (setjmp(error.jump)) {
    jpeg_destroy_decompress(&info);
    throw InputError(std::string("jpeg decode failed: ") + error.message);
  }
  jpeg_create_decompress(&info);
  jpeg_mem_src(&info, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&info, TRUE);
  info.out_color_space = JCS_RGB;
  jpeg_start_decompress(&info);
  out.width = static_cast<int>(info.output_width);
  out.height = static_cast<int>(info.output_height);
  out.rgb.resize(static_cast<std::size_t>(out.width) * out.height * 3);
  while (info.output_scanline < info.output_height) {
    JSAMPROW row = out.rgb.data() + static_cast<std::size_t>(info.output_scanline) * out.width * 3;
    jpeg_read_scanlines(&info, &row, 1);
  }
  jpeg_finish_decompress(&info);
  jpeg_destroy_decompress(&info);
  return out;
}

// Minimal netpbm reader: P2/P5 (gray) and P3/P6 (rgb), maxval <= 255.
class PnmReader {
 public:
  explicit PnmReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  RgbImage read() {
    const char kind = static_cast<char>(bytes_[1]);
    pos_ = 2;
    RgbImage out;
    out.width = next_int();
    out.height = next_int();
    const int maxval = next_int();
    if (out.width <= 0 || out.height <= 0 || maxval <= 0 || maxval > 255) {
      throw InputError("pnm: unsupported header");
    }
    const bool gray = kind == '2' || kind == '5';
    const bool ascii = kind == '2' || kind == '3';
    const std::size_t pixels = static_cast<std::size_t>(out.width) * out.height;
    const std::size_t samples = pixels * (gray ? 1 : 3);
    std::vector<int> values(samples);
    if (ascii) {
      for (auto& v : values) v = next_int();
    } else {
      ++pos_;  // single whitespace after maxval
      if (pos_ + samples > bytes_.size()) throw InputError("pnm: truncated raster");
      for (std::size_t i = 0; i < samples; ++i) values[i] = bytes_[pos_ + i];
    }
    out.rgb.resize(pixels * 3);
    for (std::size_t p = 0; p < pixels; ++p) {
      for (int c = 0; c < 3; ++c) {
        const int v = gray ? values[p] : values[p * 3 + c];
        out.rgb[p * 3 + c] = static_cast<std::uint8_t>(maxval == 255 ? v : (v * 255 + maxval / 2) / maxval);
      }
    }
    return out;
  }

 private:
  int next_int() {
    while (pos_ < bytes_.size()) {
      if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
    if (pos_ >= bytes_.size() || !std::isdigit(bytes_[pos_])) throw InputError("pnm: malformed header");
    int value = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > (1 << 20)) throw InputError("pnm: value out of range");
      ++pos_;
    }
    return value;
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

RgbImage decode_image(std::span<const std::uint8_t> bytes) {
  if (starts_with(bytes, {0x89, 'P', 'N', 'G'})) return decode_png(bytes);
  if (starts_with(bytes, {0xFF, 0xD8, 0xFF})) return decode_jpeg(bytes);
  if (bytes.size() > 2 && bytes[0] == 'P' && std::strchr("2356", bytes[1]) != nullptr) {
    return PnmReader(bytes).read();
  }
  throw InputError("unrecognized image format");
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_png(const std::filesystem::path& path, const RgbImage& image) {
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width);
  png.height = static_cast<png_uint_32>(image.height);
  png.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&png, path.c_str(), 0, image.rgb.data(), 0, nullptr)) {
    throw IoError("png write failed for " + path.string() + ": " + png.message);
  }
}

bool has_image_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".ppm" || ext == ".pgm" ||
         ext == ".pnm";
}

}  // namespace badvision
