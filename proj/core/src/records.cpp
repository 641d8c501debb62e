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

#include "badvision/records.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <Eigen/Core>
#include <fstream>
#include <string>

#include "badvision/common.hpp"
#include "badvision/image_io.hpp"

namespace badvision {

namespace fs = std::filesystem;

nlohmann::json toolchain_versions() {
  nlohmann::json v;
  v["badvision"] = "0.1.0";
#if defined(__clang__)
  v["compiler"] = "clang " + std::string(__clang_version__);
#elif defined(__GNUC__)
  v["compiler"] = "gcc " + std::to_string(__GNUC__) + "." + std::to_string(__GNUC_MINOR__) + "." +
                  std::to_string(__GNUC_PATCHLEVEL__);
#else
  v["compiler"] = "unknown";
#endif
  v["cxx_standard"] = static_cast<long>(__cplusplus);
  v["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
               std::to_string(EIGEN_MINOR_VERSION);
  v["nlohmann_json"] = std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                       std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                       std::to_string(NLOHMANN_JSON_VERSION_PATCH);
  return v;
}

nlohmann::json ExperimentRecord::to_json() const {
  nlohmann::json arts = nlohmann::json::object();
  for (const auto& [name, ref] : artifacts) arts[name] = {{"path", ref.path}, {"sha256", ref.sha256}};
  return {{"command", command},
          {"status", status},
          {"config", config},
          {"config_hash", config_hash},
          {"artifacts", arts},
          {"metrics", metrics},
          {"extra", extra},
          {"wall_clock_seconds", wall_clock_seconds},
          {"versions", toolchain_versions()}};
}

ArtifactRef artifact(const fs::path& dir, const std::string& relative) {
  const auto bytes = read_file_bytes(dir / relative);
  return {relative, sha256_hex(std::span<const std::uint8_t>(bytes))};
}

void write_json(const fs::path& path, const nlohmann::json& doc) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << doc.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

fs::path write_record(const fs::path& dir, const ExperimentRecord& record) {
  const fs::path path = dir / (record.command + ".record.json");
  std::error_code ec;
  if (fs::exists(path, ec)) throw IoError("record already exists (records are immutable): " + path.string());
  write_json(path, record.to_json());
  return path;
}

DirectoryLock::DirectoryLock(const fs::path& dir) : path_(dir / ".lock") {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) throw IoError("output directory is locked by another command: " + path_.string());
  const std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] const auto n = ::write(fd, pid.data(), pid.size());
  ::close(fd);
}

DirectoryLock::~DirectoryLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

}  // namespace badvision
