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

#include <gtest/gtest.h>

#include <fstream>

#include "badvision/common.hpp"
#include "badvision/config.hpp"
#include "badvision/records.hpp"
#include "test_support.hpp"

using namespace badvision;
namespace fs = std::filesystem;

namespace {

std::string error_of(const nlohmann::json& j) {
  try {
    ExperimentConfig::from_json(j).validate();
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(Config, DefaultSettings) {
  const ExperimentConfig cfg = ExperimentConfig::from_json(nlohmann::json::object());
  EXPECT_DOUBLE_EQ(cfg.epsilon1, 8.0 / 255.0);
  EXPECT_EQ(cfg.backdoor.epsilon2, 1.0);
  EXPECT_EQ(cfg.backdoor.lambda1, 1.0);
  EXPECT_EQ(cfg.backdoor.lambda2, 1.0);
  EXPECT_EQ(cfg.backdoor.batch_size, 4u);
  EXPECT_EQ(cfg.trigger.initial_lr, 1e-3);
  EXPECT_EQ(cfg.detection.threshold, 0.1);
  EXPECT_NO_THROW(cfg.validate());
}

TEST(Config, FieldLevelErrors) {
  EXPECT_NE(error_of({{"backdoor", {{"lambda1", "big"}}}}).find("backdoor.lambda1"), std::string::npos);
  EXPECT_NE(error_of({{"data", {{"shadow_cap", -3}}}}).find("data.shadow_cap"), std::string::npos);
  EXPECT_NE(error_of({{"trigger", {{"epsilon1", 2.0}}}}).find("trigger.epsilon1"), std::string::npos);
  EXPECT_NE(error_of({{"bogus", 1}}).find("bogus"), std::string::npos);
  EXPECT_NE(error_of({{"detection", {{"stepz", 1}}}}).find("detection.stepz"), std::string::npos);
  EXPECT_NE(error_of({{"backdoor", {{"flags", "TF=1,RF=1"}}}}).find("backdoor.flags"), std::string::npos);
  EXPECT_NE(error_of({{"data", {{"resolution", {32}}}}}).find("data.resolution"), std::string::npos);
}

TEST(Config, RelativePathsResolveAgainstBase) {
  const ExperimentConfig cfg = ExperimentConfig::from_json(
      {{"target", "t.png"}, {"data", {{"shadow", "/abs/shadow"}}}, {"encoder", {{"arch", "checkpoint"}, {"path", "e.bvenc"}}}},
      "/base/dir");
  EXPECT_EQ(cfg.target, fs::path("/base/dir/t.png"));
  EXPECT_EQ(cfg.data.shadow, fs::path("/abs/shadow"));
  EXPECT_EQ(cfg.encoder.at("path"), "/base/dir/e.bvenc");
}

TEST(Config, RequirePathsNamesTheField) {
  const fs::path dir = bvtest::scratch_dir("cfg");
  std::ofstream(dir / "t.png") << "x";
  ExperimentConfig cfg = ExperimentConfig::from_json({{"target", "t.png"}}, dir);
  EXPECT_NO_THROW(cfg.require_paths({"target"}));
  try {
    cfg.require_paths({"data.shadow"});
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(std::string(e.what()), "data.shadow: required but not set");
  }
  cfg.target = dir / "gone.png";
  try {
    cfg.require_paths({"target"});
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(std::string(e.what()).rfind("target: path does not exist", 0), 0u);
  }
}

TEST(Config, JsonRoundTripAndHash) {
  const ExperimentConfig a = ExperimentConfig::from_json({{"seed", 4}, {"backdoor", {{"epochs", 3}}}});
  const ExperimentConfig b = ExperimentConfig::from_json(a.to_json());
  EXPECT_EQ(a.to_json(), b.to_json());
  EXPECT_EQ(a.hash(), b.hash());
  const ExperimentConfig c = ExperimentConfig::from_json({{"seed", 5}, {"backdoor", {{"epochs", 3}}}});
  EXPECT_NE(a.hash(), c.hash());
  ExperimentConfig moved = a;
  moved.output = "elsewhere";
  EXPECT_EQ(moved.hash(), a.hash());
  EXPECT_EQ(a.detection.seed, 4u);
  EXPECT_EQ(a.backdoor.epochs, 3u);
}

TEST(Config, Overrides) {
  nlohmann::json doc = {{"backdoor", {{"lambda1", 1.0}}}};
  apply_override(doc, "backdoor.lambda1", "2.5");
  apply_override(doc, "backdoor.flags", "TO=1,TF=0");
  apply_override(doc, "data.shadow_cap", "10");
  EXPECT_EQ(doc["backdoor"]["lambda1"], 2.5);
  EXPECT_EQ(doc["backdoor"]["flags"], "TO=1,TF=0");
  EXPECT_EQ(doc["data"]["shadow_cap"], 10);
  EXPECT_THROW(apply_override(doc, "", "1"), ConfigError);
  EXPECT_THROW(apply_override(doc, "a..b", "1"), ConfigError);
}

TEST(Config, LoadFileErrors) {
  const fs::path dir = bvtest::scratch_dir("cfgfile");
  EXPECT_THROW(load_config(dir / "missing.json"), ConfigError);
  std::ofstream(dir / "bad.json") << "{ nope";
  EXPECT_THROW(load_config(dir / "bad.json"), ConfigError);
  std::ofstream(dir / "ok.json") << R"({"seed": 3, "target": "x.png"})";
  const ExperimentConfig cfg = load_config(dir / "ok.json");
  EXPECT_EQ(cfg.seed, 3u);
  EXPECT_EQ(cfg.target, dir / "x.png");
}

TEST(Config, OutputRootFollowsEnvironment) {
  ::setenv("BADVISION_HOME", "/tmp/bv-home", 1);
  EXPECT_EQ(output_root(), fs::path("/tmp/bv-home"));
  ::unsetenv("BADVISION_HOME");
  EXPECT_EQ(output_root(), fs::current_path());
}

TEST(Records, WriteOnceWithArtifacts) {
  const fs::path dir = bvtest::scratch_dir("rec");
  std::ofstream(dir / "a.bin") << "abc";
  ExperimentRecord rec;
  rec.command = "evaluate";
  rec.config = {{"seed", 1}};
  rec.config_hash = "h";
  rec.artifacts["a"] = artifact(dir, "a.bin");
  rec.metrics = {{"asr", 100.0}};
  EXPECT_EQ(rec.artifacts["a"].sha256, sha256_hex(std::string_view("abc")));
  const fs::path path = write_record(dir, rec);
  EXPECT_EQ(path, dir / "evaluate.record.json");
  const auto j = read_json(path);
  EXPECT_EQ(j.at("command"), "evaluate");
  EXPECT_EQ(j.at("artifacts").at("a").at("path"), "a.bin");
  EXPECT_EQ(j.at("status"), "ok");
  EXPECT_TRUE(j.contains("versions"));
  EXPECT_THROW(write_record(dir, rec), IoError);
}

TEST(Records, DirectoryLockIsExclusive) {
  const fs::path dir = bvtest::scratch_dir("lock");
  {
    DirectoryLock lock(dir);
    EXPECT_TRUE(fs::exists(dir / ".lock"));
    EXPECT_THROW(DirectoryLock second(dir), IoError);
  }
  EXPECT_FALSE(fs::exists(dir / ".lock"));
  EXPECT_NO_THROW(DirectoryLock again(dir));
}

TEST(Records, ToolchainVersions) {
  const auto v = toolchain_versions();
  EXPECT_TRUE(v.contains("compiler"));
  EXPECT_TRUE(v.contains("eigen"));
}
