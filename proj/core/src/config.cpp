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

#include "badvision/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

#include "badvision/common.hpp"

namespace badvision {
namespace {

namespace fs = std::filesystem;

// Reads one JSON object, tracking the field path for error messages and
// rejecting keys nobody asked for.
class Section {
 public:
  Section(const nlohmann::json& j, std::string prefix) : j_(j), prefix_(std::move(prefix)) {
    if (!j_.is_object()) throw ConfigError(label() + "expected an object");
  }

  std::string field(const std::string& key) const { return prefix_.empty() ? key : prefix_ + "." + key; }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key) && !j_.at(key).is_null();
  }

  void number(const std::string& key, double& out) {
    if (!has(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_number()) throw ConfigError(field(key) + ": expected a number");
    out = v.get<double>();
  }

  template <typename Int>
  void integer(const std::string& key, Int& out) {
    if (!has(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
      throw ConfigError(field(key) + ": expected a non-negative integer");
    }
    out = static_cast<Int>(v.get<std::uint64_t>());
  }

  void text(const std::string& key, std::string& out) {
    if (!has(key)) return;
    if (!j_.at(key).is_string()) throw ConfigError(field(key) + ": expected a string");
    out = j_.at(key).get<std::string>();
  }

  void path(const std::string& key, fs::path& out, const fs::path& base) {
    std::string s;
    text(key, s);
    if (s.empty()) return;
    fs::path p(s);
    out = (p.is_relative() && !base.empty()) ? (base / p).lexically_normal() : p;
  }

  Section child(const std::string& key) {
    seen_.insert(key);
    return Section(j_.contains(key) ? j_.at(key) : empty_object(), field(key));
  }

  const nlohmann::json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  void finish() const {
    for (const auto& [key, _] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError(field(key) + ": unknown key");
    }
  }

 private:
  std::string label() const { return prefix_.empty() ? "config: " : prefix_ + ": "; }
  static const nlohmann::json& empty_object() {
    static const nlohmann::json obj = nlohmann::json::object();
    return obj;
  }

  const nlohmann::json& j_;
  std::string prefix_;
  std::set<std::string> seen_;
};

std::string path_string(const fs::path& p) { return p.empty() ? std::string{} : p.string(); }

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j, const fs::path& base_dir) {
  ExperimentConfig c;
  Section root(j, "");

  if (root.has("encoder")) {
    const auto& enc = root.raw("encoder");
    if (!enc.is_object()) throw ConfigError("encoder: expected an object");
    c.encoder = enc;
    if (c.encoder.contains("path") && c.encoder["path"].is_string()) {
      fs::path p(c.encoder["path"].get<std::string>());
      if (p.is_relative() && !base_dir.empty()) c.encoder["path"] = (base_dir / p).lexically_normal().string();
    }
  }

  {
    Section d = root.child("data");
    d.path("shadow", c.data.shadow, base_dir);
    d.integer("shadow_cap", c.data.shadow_cap);
    d.path("test", c.data.test, base_dir);
    d.integer("test_cap", c.data.test_cap);
    d.path("gallery", c.data.gallery, base_dir);
    d.integer("gallery_cap", c.data.gallery_cap);
    d.path("probe", c.data.probe, base_dir);
    d.integer("probe_cap", c.data.probe_cap);
    d.path("finetune", c.data.finetune, base_dir);
    d.integer("finetune_cap", c.data.finetune_cap);
    d.integer("order_seed", c.data.order_seed);
    if (d.has("resolution")) {
      const auto& r = d.raw("resolution");
      if (!r.is_array() || r.size() != 2 || !r[0].is_number_integer() || !r[1].is_number_integer()) {
        throw ConfigError("data.resolution: expected [height, width]");
      }
      c.data.resolution = {r[0].get<int>(), r[1].get<int>()};
    }
    d.finish();
  }

  root.path("target", c.target, base_dir);
  root.path("trigger_path", c.trigger_path, base_dir);

  {
    Section t = root.child("trigger");
    t.number("epsilon1", c.epsilon1);
    t.integer("epochs", c.trigger.epochs);
    t.number("lr", c.trigger.initial_lr);
    t.integer("batch_size", c.trigger.batch_size);
    t.finish();
  }
  {
    Section b = root.child("backdoor");
    b.number("lambda1", c.backdoor.lambda1);
    b.number("lambda2", c.backdoor.lambda2);
    b.integer("epochs", c.backdoor.epochs);
    b.number("lr", c.backdoor.lr);
    b.integer("batch_size", c.backdoor.batch_size);
    b.number("epsilon2", c.backdoor.epsilon2);
    b.integer("pgd_steps", c.backdoor.pgd_steps);
    if (b.has("pgd_step_size")) {
      double alpha = 0.0;
      b.number("pgd_step_size", alpha);
      c.backdoor.pgd_step_size = alpha;
    }
    std::string flags;
    b.text("flags", flags);
    if (!flags.empty()) {
      try {
        c.backdoor.flags = AblationFlags::parse(flags);
      } catch (const Error& e) {
        throw ConfigError("backdoor.flags: " + std::string(e.what()));
      }
    }
    b.finish();
  }
  {
    Section u = root.child("untargeted");
    u.number("lambda3", c.untargeted.lambda3);
    u.number("lambda4", c.untargeted.lambda4);
    u.number("epsilon1", c.untargeted.epsilon1);
    u.integer("epochs", c.untargeted.epochs);
    u.number("lr", c.untargeted.lr);
    u.integer("batch_size", c.untargeted.batch_size);
    u.finish();
  }
  c.untargeted.trigger = c.trigger;
  {
    Section d = root.child("detection");
    d.integer("steps", c.detection.steps);
    d.number("lr", c.detection.lr);
    d.number("gamma_init", c.detection.gamma_init);
    d.number("gamma_min", c.detection.gamma_min);
    d.number("gamma_max", c.detection.gamma_max);
    d.number("concentration_goal", c.detection.concentration_goal);
    d.integer("batch_size", c.detection.batch_size);
    d.integer("check_every", c.detection.check_every);
    d.number("threshold", c.detection.threshold);
    d.finish();
  }
  {
    Section f = root.child("defense");
    f.integer("epochs", c.defense.epochs);
    f.number("lr", c.defense.lr);
    f.integer("batch_size", c.defense.batch_size);
    f.finish();
  }
  root.integer("seed", c.seed);
  root.path("output", c.output, {});
  root.finish();

  c.detection.seed = c.seed;
  c.defense.seed = c.seed;
  c.validate();
  return c;
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json j;
  j["encoder"] = encoder;
  j["data"] = {{"shadow", path_string(data.shadow)},     {"shadow_cap", data.shadow_cap},
               {"test", path_string(data.test)},         {"test_cap", data.test_cap},
               {"gallery", path_string(data.gallery)},   {"gallery_cap", data.gallery_cap},
               {"probe", path_string(data.probe)},       {"probe_cap", data.probe_cap},
               {"finetune", path_string(data.finetune)}, {"finetune_cap", data.finetune_cap},
               {"resolution", {data.resolution.height, data.resolution.width}},
               {"order_seed", data.order_seed}};
  j["target"] = path_string(target);
  j["trigger_path"] = path_string(trigger_path);
  j["trigger"] = {{"epsilon1", epsilon1},
                  {"epochs", trigger.epochs},
                  {"lr", trigger.initial_lr},
                  {"batch_size", trigger.batch_size}};
  j["backdoor"] = {{"lambda1", backdoor.lambda1},     {"lambda2", backdoor.lambda2},
                   {"epochs", backdoor.epochs},       {"lr", backdoor.lr},
                   {"batch_size", backdoor.batch_size}, {"epsilon2", backdoor.epsilon2},
                   {"pgd_steps", backdoor.pgd_steps}, {"pgd_step_size", backdoor.step_size()},
                   {"flags", backdoor.flags.tag()}};
  j["untargeted"] = {{"lambda3", untargeted.lambda3}, {"lambda4", untargeted.lambda4},
                     {"epsilon1", untargeted.epsilon1}, {"epochs", untargeted.epochs},
                     {"lr", untargeted.lr},           {"batch_size", untargeted.batch_size}};
  nlohmann::json det = detection.to_json();
  det.erase("seed");
  j["detection"] = det;
  j["defense"] = {{"epochs", defense.epochs}, {"lr", defense.lr}, {"batch_size", defense.batch_size}};
  j["seed"] = seed;
  j["output"] = path_string(output);
  return j;
}

std::string ExperimentConfig::hash() const {
  nlohmann::json j = to_json();
  j.erase("output");
  return sha256_hex(j.dump());
}

void ExperimentConfig::validate() const {
  if (data.resolution.height < 4 || data.resolution.width < 4) throw ConfigError("data.resolution: must be >= 4");
  for (const auto& [name, cap] : {std::pair{"data.shadow_cap", data.shadow_cap}, {"data.test_cap", data.test_cap},
                                  {"data.gallery_cap", data.gallery_cap}, {"data.probe_cap", data.probe_cap}}) {
    if (cap < 1) throw ConfigError(std::string(name) + ": must be >= 1");
  }
  if (!(epsilon1 > 0.0 && epsilon1 <= 1.0)) throw ConfigError("trigger.epsilon1: must lie in (0, 1]");
  try {
    trigger.validate();
  } catch (const ConfigError& e) {
    throw ConfigError("trigger: " + std::string(e.what()));
  }
  backdoor.validate();
  untargeted.validate();
  detection.validate();
  defense.validate();
}

void ExperimentConfig::require_paths(const std::vector<std::string>& fields) const {
  for (const auto& f : fields) {
    fs::path p;
    if (f == "target") p = target;
    else if (f == "trigger_path") p = trigger_path;
    else if (f == "data.shadow") p = data.shadow;
    else if (f == "data.test") p = data.test;
    else if (f == "data.gallery") p = data.gallery;
    else if (f == "data.probe") p = data.probe;
    else if (f == "data.finetune") p = data.finetune;
    else if (f == "encoder.path") p = encoder.value("path", std::string{});
    else throw ContractError("require_paths: unknown field " + f);
    if (p.empty()) throw ConfigError(f + ": required but not set");
    std::error_code ec;
    if (!fs::exists(p, ec)) throw ConfigError(f + ": path does not exist: " + p.string());
  }
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return ExperimentConfig::from_json(j, path.parent_path());
}

void apply_override(nlohmann::json& doc, const std::string& dotted_key, const std::string& value) {
  if (dotted_key.empty()) throw ConfigError("override: empty key");
  nlohmann::json parsed;
  try {
    parsed = nlohmann::json::parse(value);
  } catch (const nlohmann::json::parse_error&) {
    parsed = value;
  }
  nlohmann::json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = dotted_key.find('.', start);
    const std::string key = dotted_key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError("override: malformed key " + dotted_key);
    if (!node->is_object()) *node = nlohmann::json::object();
    if (dot == std::string::npos) {
      (*node)[key] = parsed;
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

fs::path output_root() {
  const char* home = std::getenv("BADVISION_HOME");
  if (home != nullptr && *home != '\0') return fs::path(home);
  return fs::current_path();
}

}  // namespace badvision
