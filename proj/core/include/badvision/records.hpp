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

#ifndef BADVISION_RECORDS_HPP_
#define BADVISION_RECORDS_HPP_

#include <filesystem>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

namespace badvision {

// Library, compiler and dependency versions baked in at build time.
nlohmann::json toolchain_versions();

struct ArtifactRef {
  std::string path;  // relative to the record's directory
  std::string sha256;
};

// One command invocation. Written once as `<dir>/<command>.record.json`;
// write_record refuses to replace an existing record.
struct ExperimentRecord {
  std::string command;
  nlohmann::json config;
  std::string config_hash;
  std::map<std::string, ArtifactRef> artifacts;
  nlohmann::json metrics = nlohmann::json::object();
  nlohmann::json extra = nlohmann::json::object();
  double wall_clock_seconds = 0.0;
  std::string status = "ok";

  nlohmann::json to_json() const;
};

// Hashes the file at dir / relative and returns its reference.
ArtifactRef artifact(const std::filesystem::path& dir, const std::string& relative);

std::filesystem::path write_record(const std::filesystem::path& dir, const ExperimentRecord& record);
nlohmann::json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const nlohmann::json& doc);

// Exclusive claim on an output directory via `<dir>/.lock`, created with
// O_EXCL and removed on destruction. Throws IoError when already held.
class DirectoryLock {
 public:
  explicit DirectoryLock(const std::filesystem::path& dir);
  ~DirectoryLock();
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

 private:
  std::filesystem::path path_;
};

}  // namespace badvision

#endif  // BADVISION_RECORDS_HPP_
