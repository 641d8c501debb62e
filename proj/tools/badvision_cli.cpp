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

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "badvision/badvision.hpp"

namespace fs = std::filesystem;
using namespace badvision;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kConfigFailure = 2, kInputFailure = 3, kDiverged = 4 };

struct CommonOptions {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string output;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("-c,--config", o.config, "Experiment config (JSON)");
  cmd->add_option("--set", o.overrides, "Override a config field, e.g. --set backdoor.lr=0.01")->take_all();
  cmd->add_option("--seed", o.seed, "Master seed");
  cmd->add_option("-o,--output", o.output, "Output directory (relative to $BADVISION_HOME)");
}

ExperimentConfig resolve_config(const CommonOptions& o) {
  nlohmann::json doc = nlohmann::json::object();
  fs::path base;
  if (!o.config.empty()) {
    doc = read_json(o.config);
    base = fs::absolute(o.config).parent_path();
  }
  for (const auto& kv : o.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    apply_override(doc, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (o.seed) doc["seed"] = *o.seed;
  if (!o.output.empty()) doc["output"] = o.output;
  if (base.empty()) base = fs::current_path();
  return ExperimentConfig::from_json(doc, base);
}

fs::path output_dir(const ExperimentConfig& cfg) {
  if (cfg.output.empty()) throw ConfigError("output: required but not set");
  return cfg.output.is_absolute() ? cfg.output : output_root() / cfg.output;
}

// One command run: owns the lock, the clock and the record.
class Run {
 public:
  Run(std::string command, const ExperimentConfig& cfg)
      : cfg_(cfg), dir_(output_dir(cfg)), lock_(dir_), start_(std::chrono::steady_clock::now()) {
    record_.command = std::move(command);
    if (fs::exists(dir_ / (record_.command + ".record.json"))) {
      throw IoError(dir_.string() + " already holds a " + record_.command + " record; choose a fresh output directory");
    }
    record_.config = cfg.to_json();
    record_.config_hash = cfg.hash();
    const fs::path copy = dir_ / (record_.command + ".config.json");
    write_json(copy, record_.config);
    add_artifact("config", record_.command + ".config.json");
  }

  const fs::path& dir() const { return dir_; }
  ExperimentRecord& record() { return record_; }
  void add_artifact(const std::string& name, const std::string& relative) {
    record_.artifacts[name] = artifact(dir_, relative);
  }

  void finish(const std::string& status = "ok") {
    record_.status = status;
    record_.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    const fs::path path = write_record(dir_, record_);
    std::printf("record: %s\n", path.string().c_str());
  }

 private:
  const ExperimentConfig& cfg_;
  fs::path dir_;
  DirectoryLock lock_;
  std::chrono::steady_clock::time_point start_;
  ExperimentRecord record_;
};

Encoder load_clean(const ExperimentConfig& cfg) {
  if (cfg.encoder.empty()) throw ConfigError("encoder: required but not set");
  if (cfg.encoder.value("arch", std::string{}) == "checkpoint") cfg.require_paths({"encoder.path"});
  Encoder enc = make_encoder(cfg.encoder);
  if (!(enc.resolution() == cfg.data.resolution)) {
    throw ConfigError("data.resolution: does not match the encoder input resolution");
  }
  return enc;
}

ShadowDataset load_split(const ExperimentConfig& cfg, const std::string& field, const fs::path& path,
                         std::size_t cap) {
  cfg.require_paths({field});
  return load_shadow_dataset(path, cap, cfg.data.order_seed, cfg.data.resolution);
}

TargetSpec load_target(const ExperimentConfig& cfg, const Encoder& clean) {
  cfg.require_paths({"target"});
  ImageBatch image = preprocess(read_file_bytes(cfg.target), cfg.data.resolution, cfg.target.filename().string());
  return TargetSpec::from_image(clean, std::move(image));
}

Perturbation load_trigger(const fs::path& path) {
  Perturbation p = load_perturbation(path).perturbation;
  if (p.role() != PerturbationRole::kTrigger) throw InputError(path.string() + " is not a trigger checkpoint");
  return p;
}

void print_report(const MetricReport& m) {
  std::printf("sim_t    %.6f  (clean baseline %.6f, uplift %.6f)\n", m.sim_t, m.sim_t_baseline,
              m.sim_t - m.sim_t_baseline);
  std::printf("sim_b    %.6f\n", m.sim_b);
  std::printf("asr      %.2f%%\n", m.asr);
  std::printf("far      %.2f%%\n", m.far);
  std::printf("samples  %zu\n", m.n_samples);
}

bool has_eval_data(const ExperimentConfig& cfg) { return !cfg.data.test.empty() && !cfg.data.gallery.empty(); }

FeatureMatrix load_gallery(const ExperimentConfig& cfg, const Encoder& clean) {
  const ShadowDataset g = load_split(cfg, "data.gallery", cfg.data.gallery, cfg.data.gallery_cap);
  if (g.size() < kMinGallerySize) {
    throw ConfigError("data.gallery: needs at least " + std::to_string(kMinGallerySize) + " images, found " +
                      std::to_string(g.size()));
  }
  return build_gallery(clean, g.images);
}

// --- verbs -------------------------------------------------------------------

int cmd_optimize_trigger(const CommonOptions& o) {
  const ExperimentConfig cfg = resolve_config(o);
  cfg.require_paths({"data.shadow", "target"});
  const Encoder clean = load_clean(cfg);
  const ShadowDataset shadow = load_split(cfg, "data.shadow", cfg.data.shadow, cfg.data.shadow_cap);
  const TargetSpec target = load_target(cfg, clean);

  Run run("optimize-trigger", cfg);
  const TriggerResult result = optimize_trigger(clean, shadow, target, cfg.epsilon1, cfg.trigger, cfg.seed);
  save_perturbation(run.dir() / "trigger.bin", {result.trigger, clean.param_hash(), cfg.seed,
                                                to_json(result.history).dump()});
  write_manifest(shadow, run.dir() / "shadow_manifest.jsonl");
  run.add_artifact("trigger", "trigger.bin");
  run.add_artifact("trigger_sidecar", "trigger.bin.json");
  run.add_artifact("shadow_manifest", "shadow_manifest.jsonl");
  run.record().metrics = {{"baseline_similarity", -result.baseline_loss},
                          {"final_similarity", -result.final_loss},
                          {"max_abs", result.trigger.max_abs()},
                          {"l1_norm", result.trigger.l1_norm()},
                          {"history", to_json(result.history)}};
  std::printf("trigger  %s\n", (run.dir() / "trigger.bin").string().c_str());
  std::printf("max|trigger| %.8f (budget %.8f)\n", result.trigger.max_abs(), cfg.epsilon1);
  std::printf("mean similarity to target: %.6f -> %.6f\n", -result.baseline_loss, -result.final_loss);
  run.finish();
  return kOk;
}

int attack_untargeted(const ExperimentConfig& cfg) {
  cfg.require_paths({"data.shadow"});
  const Encoder clean = load_clean(cfg);
  const ShadowDataset shadow = load_split(cfg, "data.shadow", cfg.data.shadow, cfg.data.shadow_cap);
  Run run("attack", cfg);
  const TriggerResult stage1 =
      optimize_untargeted_trigger(clean, shadow, cfg.untargeted.epsilon1, cfg.untargeted.trigger, cfg.seed);
  save_perturbation(run.dir() / "trigger.bin",
                    {stage1.trigger, clean.param_hash(), cfg.seed, to_json(stage1.history).dump()});
  run.add_artifact("trigger", "trigger.bin");
  EncoderPair pair(clean);
  try {
    const BackdooredEncoder bd = train_untargeted(pair, shadow, stage1.trigger, cfg.untargeted, cfg.seed);
    save_encoder(run.dir() / "encoder.bvenc", bd.encoder, {{"provenance", bd.provenance.to_json()}});
    write_loss_curves(run.dir() / "loss_curves.jsonl", bd.provenance.steps, "separation", "utility", "scatter");
    run.add_artifact("encoder", "encoder.bvenc");
    run.add_artifact("loss_curves", "loss_curves.jsonl");
    nlohmann::json m{{"attack", "untargeted"}, {"trigger_similarity", stage1.final_loss}};
    if (!cfg.data.test.empty()) {
      const ShadowDataset test = load_split(cfg, "data.test", cfg.data.test, cfg.data.test_cap);
      m["separation"] = separation_loss(bd.encoder, test.images, stage1.trigger);
      m["sim_b"] = sim_b(bd.encoder, clean, test.images);
      m["n_samples"] = test.size();
      std::printf("separation %.6f\nsim_b      %.6f\n", m["separation"].get<double>(), m["sim_b"].get<double>());
    }
    run.record().metrics = m;
    run.finish();
  } catch (const DivergenceError& e) {
    run.record().extra = {{"error", e.what()}, {"diagnostic", nlohmann::json::parse(e.diagnostic())}};
    run.finish("diverged");
    throw;
  }
  return kOk;
}

int cmd_attack(const CommonOptions& o, bool untargeted, const std::string& ablate) {
  ExperimentConfig cfg = resolve_config(o);
  if (!ablate.empty()) cfg.backdoor.flags = AblationFlags::parse(ablate, cfg.backdoor.flags);
  cfg.validate();
  if (untargeted) return attack_untargeted(cfg);

  cfg.require_paths({"data.shadow", "target", "trigger_path"});
  const Encoder clean = load_clean(cfg);
  const ShadowDataset shadow = load_split(cfg, "data.shadow", cfg.data.shadow, cfg.data.shadow_cap);
  const TargetSpec target = load_target(cfg, clean);
  const Perturbation optimized = load_trigger(cfg.trigger_path);
  const Perturbation trigger =
      cfg.backdoor.flags.trigger_optimization
          ? optimized
          : make_patch_trigger(optimized.channels(), optimized.height(), optimized.width(), optimized.l1_norm());

  Run run("attack", cfg);
  run.record().extra["flags"] = cfg.backdoor.flags.tag();
  if (!cfg.backdoor.flags.trigger_optimization) {
    save_perturbation(run.dir() / "trigger.bin", {trigger, clean.param_hash(), cfg.seed, "[]"});
    run.add_artifact("trigger", "trigger.bin");
  }
  EncoderPair pair(clean);
  try {
    const BackdooredEncoder bd = train_backdoor(pair, shadow, target, trigger, cfg.backdoor, cfg.seed);
    save_encoder(run.dir() / "encoder.bvenc", bd.encoder, {{"provenance", bd.provenance.to_json()}});
    write_loss_curves(run.dir() / "loss_curves.jsonl", bd.provenance.steps);
    run.add_artifact("encoder", "encoder.bvenc");
    run.add_artifact("loss_curves", "loss_curves.jsonl");
    nlohmann::json m{{"attack", "targeted"}, {"flags", cfg.backdoor.flags.tag()}};
    if (has_eval_data(cfg)) {
      const ShadowDataset test = load_split(cfg, "data.test", cfg.data.test, cfg.data.test_cap);
      const MetricReport report = evaluate_attack(bd.encoder, clean, test.images, trigger, target,
                                                  load_gallery(cfg, clean), cfg.hash(), cfg.seed);
      print_report(report);
      m["report"] = report.to_json();
      m["sim_t_uplift"] = report.sim_t - report.sim_t_baseline;
    }
    run.record().metrics = m;
    std::printf("flags    %s\n", cfg.backdoor.flags.tag().c_str());
    run.finish();
  } catch (const DivergenceError& e) {
    run.record().extra["error"] = e.what();
    run.record().extra["diagnostic"] = nlohmann::json::parse(e.diagnostic());
    run.finish("diverged");
    throw;
  }
  return kOk;
}

int cmd_detect(const CommonOptions& o, const std::string& encoder_path, std::optional<double> threshold) {
  ExperimentConfig cfg = resolve_config(o);
  if (threshold) cfg.detection.threshold = *threshold;
  cfg.validate();
  const Encoder encoder = encoder_path.empty() ? load_clean(cfg) : load_encoder_checkpoint(encoder_path);
  const ShadowDataset probe = load_split(cfg, "data.probe", cfg.data.probe, cfg.data.probe_cap);
  Run run("detect", cfg);
  const InversionResult res = invert_trigger(encoder, probe.images, cfg.detection);
  save_perturbation(run.dir() / "inverted.bin", {res.inverted, encoder.param_hash(), cfg.seed, "[]"});
  write_json(run.dir() / "inversion.json", res.to_json());
  run.add_artifact("inverted_trigger", "inverted.bin");
  run.add_artifact("inversion_report", "inversion.json");
  run.record().metrics = {{"l1_norm", res.l1_norm},
                          {"pl1", res.pl1},
                          {"achieved_concentration", res.achieved_concentration},
                          {"converged", res.converged},
                          {"verdict", to_string(res.verdict)},
                          {"threshold", res.threshold}};
  run.record().extra["encoder_hash"] = encoder.param_hash();
  std::printf("L1       %.6f\n", res.l1_norm);
  std::printf("PL1      %.6f\n", res.pl1);
  std::printf("verdict  %s (threshold %.4f)\n", to_string(res.verdict).c_str(), res.threshold);
  run.finish();
  return kOk;
}

int cmd_evaluate(const CommonOptions& o, const std::string& backdoored_path) {
  const ExperimentConfig cfg = resolve_config(o);
  cfg.require_paths({"target", "trigger_path", "data.test", "data.gallery"});
  const Encoder clean = load_clean(cfg);
  const Encoder backdoored = backdoored_path.empty() ? clean : load_encoder_checkpoint(backdoored_path);
  const Perturbation trigger = load_trigger(cfg.trigger_path);
  const TargetSpec target = load_target(cfg, clean);
  const ShadowDataset test = load_split(cfg, "data.test", cfg.data.test, cfg.data.test_cap);
  const FeatureMatrix gallery = load_gallery(cfg, clean);
  Run run("evaluate", cfg);
  const MetricReport report =
      evaluate_attack(backdoored, clean, test.images, trigger, target, gallery, cfg.hash(), cfg.seed);
  write_json(run.dir() / "metrics.json", report.to_json());
  run.add_artifact("metrics", "metrics.json");
  run.record().metrics = report.to_json();
  run.record().extra["backdoored_hash"] = backdoored.param_hash();
  print_report(report);
  run.finish();
  return kOk;
}

int cmd_export_features(const CommonOptions& o, const std::string& encoder_path, const std::string& images_dir,
                        const std::string& trigger_path) {
  const ExperimentConfig cfg = resolve_config(o);
  const Encoder encoder = encoder_path.empty() ? load_clean(cfg) : load_encoder_checkpoint(encoder_path);
  const fs::path source = images_dir.empty() ? cfg.data.test : fs::path(images_dir);
  if (source.empty()) throw ConfigError("data.test: required when --images is not given");
  const ShadowDataset data = load_shadow_dataset(source, cfg.data.test_cap, cfg.data.order_seed, cfg.data.resolution);
  std::optional<Perturbation> trigger;
  if (!trigger_path.empty()) trigger = load_perturbation(trigger_path).perturbation;

  Run run("export-features", cfg);
  const ImageBatch inputs = trigger ? apply_trigger(data.images, *trigger) : data.images;
  const FeatureMatrix f = embed(encoder, inputs, false);
  std::vector<float> flat;
  flat.reserve(static_cast<std::size_t>(f.rows.size()));
  for (Eigen::Index i = 0; i < f.rows.rows(); ++i) {
    for (Eigen::Index j = 0; j < f.rows.cols(); ++j) flat.push_back(static_cast<float>(f.rows(i, j)));
  }
  {
    std::ofstream out(run.dir() / "features.f32", std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(flat.data()), static_cast<std::streamsize>(flat.size() * sizeof(float)));
    if (!out) throw IoError("cannot write features.f32");
  }
  write_json(run.dir() / "features.json", {{"format", "badvision-features"},
                                           {"version", 1},
                                           {"dtype", "float32-le"},
                                           {"rows", f.rows.rows()},
                                           {"cols", f.rows.cols()},
                                           {"ids", data.images.ids()},
                                           {"encoder_hash", encoder.param_hash()},
                                           {"trigger_hash", trigger ? trigger->hash() : std::string{}},
                                           {"sha256", sha256_hex(std::span<const float>(flat))}});
  run.add_artifact("features", "features.f32");
  run.add_artifact("features_manifest", "features.json");
  run.record().metrics = {{"rows", f.rows.rows()}, {"cols", f.rows.cols()}, {"triggered", trigger.has_value()}};
  std::printf("features %ld x %ld -> %s\n", static_cast<long>(f.rows.rows()), static_cast<long>(f.rows.cols()),
              (run.dir() / "features.f32").string().c_str());
  run.finish();
  return kOk;
}

std::vector<AblationFlags> default_matrix() {
  return {AblationFlags::parse("TO=0,RF=0,TF=0"), AblationFlags::parse("TO=0,RF=0,TF=1"),
          AblationFlags::parse("TO=1,RF=0,TF=0"), AblationFlags::parse("TO=1,RF=1,TF=0"),
          AblationFlags::parse("TO=1,RF=0,TF=1")};
}

int cmd_ablate(const CommonOptions& o, const std::vector<std::string>& rows) {
  const ExperimentConfig cfg = resolve_config(o);
  cfg.require_paths({"data.shadow", "data.test", "data.gallery", "data.probe", "target"});
  const Encoder clean = load_clean(cfg);
  const ShadowDataset shadow = load_split(cfg, "data.shadow", cfg.data.shadow, cfg.data.shadow_cap);
  const ShadowDataset test = load_split(cfg, "data.test", cfg.data.test, cfg.data.test_cap);
  const ShadowDataset probe = load_split(cfg, "data.probe", cfg.data.probe, cfg.data.probe_cap);
  const FeatureMatrix gallery = load_gallery(cfg, clean);
  const TargetSpec target = load_target(cfg, clean);
  std::vector<AblationFlags> matrix;
  for (const auto& r : rows) matrix.push_back(AblationFlags::parse(r));
  if (matrix.empty()) matrix = default_matrix();

  Run run("ablate", cfg);
  Perturbation trigger;
  if (!cfg.trigger_path.empty()) {
    cfg.require_paths({"trigger_path"});
    trigger = load_trigger(cfg.trigger_path);
  } else {
    trigger = optimize_trigger(clean, shadow, target, cfg.epsilon1, cfg.trigger, cfg.seed).trigger;
    save_perturbation(run.dir() / "trigger.bin", {trigger, clean.param_hash(), cfg.seed, "[]"});
    run.add_artifact("trigger", "trigger.bin");
  }
  const AblationInputs inputs{&clean, &shadow, &target, &trigger, &test.images, &gallery, &probe.images};
  const std::vector<AblationRow> table = run_ablation(inputs, matrix, cfg.backdoor, cfg.detection, cfg.seed);
  const InversionResult clean_inv = invert_trigger(clean, probe.images, cfg.detection);
  const SimT clean_sim = sim_t(clean, clean, test.images, Perturbation::zeros(trigger.channels(), trigger.height(),
                                                                              trigger.width(), trigger.epsilon(),
                                                                              PerturbationRole::kTrigger),
                               target);
  std::string csv = ablation_csv(table);
  char clean_row[128];
  std::snprintf(clean_row, sizeof(clean_row), "\"clean\",,,,%.6f,,,%.6f,%s\n", clean_sim.baseline, clean_inv.pl1,
                to_string(clean_inv.verdict).c_str());
  csv += clean_row;
  {
    std::ofstream out(run.dir() / "ablation.csv", std::ios::trunc);
    out << csv;
  }
  run.add_artifact("table", "ablation.csv");
  nlohmann::json m = nlohmann::json::array();
  for (const auto& r : table) {
    m.push_back({{"flags", r.flags.tag()}, {"sim_t", r.sim_t}, {"sim_b", r.sim_b}, {"asr", r.asr}, {"pl1", r.pl1},
                 {"verdict", to_string(r.verdict)}});
  }
  run.record().metrics = {{"rows", m}, {"clean_pl1", clean_inv.pl1}, {"clean_sim_t", clean_sim.baseline}};
  std::fputs(csv.c_str(), stdout);
  run.finish();
  return kOk;
}

int cmd_defend(const CommonOptions& o, const std::string& backdoored_path) {
  const ExperimentConfig cfg = resolve_config(o);
  cfg.require_paths({"data.finetune", "data.test", "data.gallery", "target", "trigger_path"});
  if (backdoored_path.empty()) throw ConfigError("--backdoored: required");
  const Encoder clean = load_clean(cfg);
  BackdooredEncoder bd{load_encoder_checkpoint(backdoored_path), {}};
  bd.provenance.clean_hash = clean.param_hash();
  const ShadowDataset clean_data = load_split(cfg, "data.finetune", cfg.data.finetune, cfg.data.finetune_cap);
  const ShadowDataset test = load_split(cfg, "data.test", cfg.data.test, cfg.data.test_cap);
  const Perturbation trigger = load_trigger(cfg.trigger_path);
  const TargetSpec target = load_target(cfg, clean);
  const FeatureMatrix gallery = load_gallery(cfg, clean);
  std::vector<std::string> shadow_ids;
  if (!cfg.data.shadow.empty() && fs::exists(cfg.data.shadow)) {
    shadow_ids = load_split(cfg, "data.shadow", cfg.data.shadow, cfg.data.shadow_cap).images.ids();
  }
  Run run("defend", cfg);
  const FinetuneOutcome out =
      finetune_robustness(bd, clean, clean_data, cfg.defense, test.images, trigger, target, gallery, shadow_ids);
  save_encoder(run.dir() / "defended.bvenc", out.defended, {{"defense", cfg.defense.to_json()}});
  run.add_artifact("defended_encoder", "defended.bvenc");
  run.record().metrics = {{"before", out.before.to_json()},
                          {"after", out.after.to_json()},
                          {"retained_asr_fraction", out.retained_asr_fraction()}};
  std::printf("before:\n");
  print_report(out.before);
  std::printf("after %zu epoch(s):\n", cfg.defense.epochs);
  print_report(out.after);
  std::printf("retained asr %.2f%%\n", 100.0 * out.retained_asr_fraction());
  run.finish();
  return kOk;
}

int cmd_make_synthetic(const std::string& dir, std::uint64_t seed) {
  write_toy_dataset(dir, seed);
  for (const auto& s : toy_splits()) std::printf("%-9s %zu images\n", s.name.c_str(), s.count);
  std::printf("target    %s\n", (fs::path(dir) / "target.png").string().c_str());
  return kOk;
}

int cmd_pretrain(const std::string& images, const std::string& out_path, std::size_t epochs, std::uint64_t seed,
                 std::size_t cap) {
  const ShadowDataset data = load_shadow_dataset(images, cap, 0, Resolution{});
  Encoder enc = make_encoder({{"arch", "small-conv"}, {"seed", seed}});
  PretrainConfig cfg;
  cfg.epochs = epochs;
  cfg.seed = seed;
  const auto losses = pretrain_contrastive(enc, data.images, cfg, [](std::size_t e, double loss) {
    std::printf("epoch %3zu  nt-xent %.5f\n", e, loss);
    std::fflush(stdout);
  });
  save_encoder(out_path, enc, {{"pretrain", {{"epochs", epochs}, {"seed", seed}, {"images", data.size()},
                                             {"final_loss", losses.back()}}}});
  std::printf("encoder  %s  (%s)\n", out_path.c_str(), enc.param_hash().c_str());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Backdoor attacks on self-supervised vision encoders: trigger optimization, trigger-focus "
               "backdoor learning, trigger-inversion detection and metrics"};
  app.require_subcommand(1);

  CommonOptions o;
  bool untargeted = false;
  std::string ablate;
  std::string encoder_path;
  std::string images_dir;
  std::string trigger_path;
  std::optional<double> threshold;
  std::vector<std::string> rows;
  std::string synth_dir;
  std::uint64_t synth_seed = 0;
  std::string pre_images;
  std::string pre_out;
  std::size_t pre_epochs = 30;
  std::size_t pre_cap = 2000;

  auto* opt = app.add_subcommand("optimize-trigger", "Optimize a universal trigger toward the target image");
  add_common(opt, o);
  auto* atk = app.add_subcommand("attack", "Backdoor a copy of the clean encoder");
  add_common(atk, o);
  atk->add_flag("--untargeted", untargeted, "Untargeted variant (trigger optimized in-run)");
  atk->add_option("--ablate", ablate, "Design switches, e.g. TO=1,TF=0");
  auto* det = app.add_subcommand("detect", "Feature-concentration trigger inversion");
  add_common(det, o);
  det->add_option("--encoder", encoder_path, "Encoder checkpoint to inspect (default: config encoder)");
  det->add_option("--threshold", threshold, "PL1 threshold below which the encoder is judged backdoored");
  auto* ev = app.add_subcommand("evaluate", "Sim-T, Sim-B, ASR and FAR of a backdoored encoder");
  add_common(ev, o);
  ev->add_option("--backdoored", encoder_path, "Backdoored encoder checkpoint (default: the clean encoder)");
  auto* exf = app.add_subcommand("export-features", "Dump raw embeddings for external plotting");
  add_common(exf, o);
  exf->add_option("--encoder", encoder_path, "Encoder checkpoint (default: config encoder)");
  exf->add_option("--images", images_dir, "Image folder (default: data.test)");
  exf->add_option("--trigger", trigger_path, "Perturbation applied before encoding");
  auto* abl = app.add_subcommand("ablate", "Run the TO/RF/TF design matrix");
  add_common(abl, o);
  abl->add_option("--row", rows, "Flag vector for one row (repeatable); default is the five-row matrix");
  auto* def = app.add_subcommand("defend", "Clean fine-tuning defense, before/after metrics");
  add_common(def, o);
  def->add_option("--backdoored", encoder_path, "Backdoored encoder checkpoint")->required();
  auto* syn = app.add_subcommand("make-synthetic", "Write the procedural toy image folders");
  syn->add_option("dir", synth_dir, "Destination directory")->required();
  syn->add_option("--seed", synth_seed, "Generator seed");
  auto* pre = app.add_subcommand("pretrain-toy", "Contrastively pretrain the toy encoder");
  pre->add_option("images", pre_images, "Image folder")->required();
  pre->add_option("-o,--out", pre_out, "Checkpoint path")->required();
  pre->add_option("--epochs", pre_epochs, "Epochs");
  pre->add_option("--seed", synth_seed, "Seed");
  pre->add_option("--cap", pre_cap, "Maximum number of images");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*opt) return cmd_optimize_trigger(o);
    if (*atk) return cmd_attack(o, untargeted, ablate);
    if (*det) return cmd_detect(o, encoder_path, threshold);
    if (*ev) return cmd_evaluate(o, encoder_path);
    if (*exf) return cmd_export_features(o, encoder_path, images_dir, trigger_path);
    if (*abl) return cmd_ablate(o, rows);
    if (*def) return cmd_defend(o, encoder_path);
    if (*syn) return cmd_make_synthetic(synth_dir, synth_seed);
    if (*pre) return cmd_pretrain(pre_images, pre_out, pre_epochs, synth_seed, pre_cap);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfigFailure;
  } catch (const DivergenceError& e) {
    std::fprintf(stderr, "diverged: %s\n%s\n", e.what(), e.diagnostic().c_str());
    return kDiverged;
  } catch (const InputError& e) {
    std::fprintf(stderr, "input error: %s\n", e.what());
    return kInputFailure;
  } catch (const IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return kInputFailure;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kFailure;
  }
  return kFailure;
}
