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

// Acceptance run on the toy fixture. Prints one PASS/FAIL line per criterion
// and exits nonzero if any criterion fails.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "badvision/badvision.hpp"
#include "test_support.hpp"

using namespace badvision;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

// Shared state of the toy targeted run, built once and reused by AC3-AC5, AC7.
struct ToyRun {
  Encoder clean;
  TargetSpec target;
  ShadowDataset shadow;
  ImageBatch test;
  ImageBatch probe;
  ShadowDataset finetune;
  FeatureMatrix gallery;
  TriggerResult trigger;
  std::optional<BackdooredEncoder> with_tf;
  std::optional<BackdooredEncoder> without_tf;
  double worst_trigger = 0.0;
  double worst_noise = 0.0;
  std::size_t trigger_steps = 0;
  std::size_t noise_steps = 0;
  double seconds = 0.0;
};

ToyRun& toy() {
  static ToyRun* run = [] {
    auto* r = new ToyRun;
    r->clean = bvtest::fixture_encoder();
    r->target = TargetSpec::from_image(r->clean, bvtest::toy_target_image());
    r->shadow = bvtest::toy_split("shadow", 500);
    r->test = bvtest::toy_split("test", 200).images;
    r->probe = bvtest::toy_split("probe", 200).images;
    r->finetune = bvtest::toy_split("finetune", 300);
    r->gallery = build_gallery(r->clean, bvtest::toy_split("gallery", 200).images);
    return r;
  }();
  return *run;
}

// Trigger optimization plus TF backdoor learning with every projection
// instrumented.
void run_targeted(ToyRun& r) {
  if (r.with_tf) return;
  const auto t0 = Clock::now();
  const double eps1 = 8.0 / 255.0;
  r.trigger = optimize_trigger(r.clean, r.shadow, r.target, eps1, TriggerOptConfig{}, 0,
                               [&](std::size_t, std::span<const double> v) {
                                 r.worst_trigger = std::max(r.worst_trigger, max_abs(v));
                                 ++r.trigger_steps;
                               });
  TrainingObserver obs;
  obs.on_noise = [&](std::size_t, std::span<const double> v) {
    r.worst_noise = std::max(r.worst_noise, max_abs(v));
    ++r.noise_steps;
  };
  EncoderPair pair(r.clean);
  r.with_tf = train_backdoor(pair, r.shadow, r.target, r.trigger.trigger, BackdoorConfig{}, 0, obs);
  r.seconds = seconds_since(t0);
}

Outcome ac1_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> pick_n(2, 16);
  std::uniform_int_distribution<int> pick_d(1, 32);
  std::normal_distribution<double> g;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = pick_n(rng);
    const int d = pick_d(rng);
    Eigen::MatrixXd m(n, d);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < d; ++j) m(i, j) = g(rng);
    }
    double sum = 0.0;
    int pairs = 0;
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        double dot = 0.0, ni = 0.0, nj = 0.0;
        for (int k = 0; k < d; ++k) {
          dot += m(i, k) * m(j, k);
          ni += m(i, k) * m(i, k);
          nj += m(j, k) * m(j, k);
        }
        sum += dot / (std::sqrt(ni) * std::sqrt(nj));
        ++pairs;
      }
    }
    worst = std::max(worst, std::abs(pairwise_mean_cos(FeatureMatrix{m, false}) - sum / pairs));
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-6 && secs < 10.0,
          fmt("100 matrices, max |diff| %.3g (tol 1e-6), %.2f s (limit 10 s)", worst, secs)};
}

Outcome ac2_gradients() {
  const auto t0 = Clock::now();
  const ToyRun& r = toy();
  const ImageBatch batch = r.shadow.images.slice(0, 4);
  std::mt19937_64 rng(77);
  int checked = 0;
  int failed = 0;
  double worst = 0.0;
  auto record = [&](double analytic, double numeric) {
    const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-7});
    worst = std::max(worst, rel);
    ++checked;
    if (rel > 1e-3) ++failed;
  };

  // Trigger loss w.r.t. the trigger pixels.
  const Perturbation start = init_perturbation(3, 32, 32, 8.0 / 255.0, 5);
  std::vector<double> delta(start.values().begin(), start.values().end());
  std::vector<double> grad;
  trigger_loss(r.clean, batch, delta, r.target.embedding, &grad);
  std::uniform_int_distribution<std::size_t> pick_px(0, delta.size() - 1);
  for (int done = 0; done < 10;) {
    const std::size_t k = pick_px(rng);
    bool kink = false;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const double x = batch.image(i)[k] + delta[k];
      kink = kink || std::abs(x) < 1e-4 || std::abs(x - 1.0) < 1e-4;
    }
    if (kink) continue;
    const double numeric = bvtest::central_difference(
        delta, k, 1e-6, [&] { return trigger_loss(r.clean, batch, delta, r.target.embedding); });
    record(grad[k], numeric);
    ++done;
  }

  // Effectiveness loss w.r.t. encoder parameters, on a nudged copy.
  Encoder moved = r.clean;
  std::normal_distribution<double> g(0.0, 0.01);
  for (double& p : moved.mutable_params()) p += g(rng);
  const ImageBatch stamped = apply_trigger(batch, start);
  std::vector<double> pgrad(moved.param_count(), 0.0);
  effectiveness_loss(moved, stamped, r.target.embedding, pgrad);
  std::uniform_int_distribution<std::size_t> pick_p(0, moved.param_count() - 1);
  for (int done = 0; done < 10; ++done) {
    const std::size_t k = pick_p(rng);
    const double saved = moved.params()[k];
    moved.mutable_params()[k] = saved + 1e-5;
    const double plus = effectiveness_loss(moved, stamped, r.target.embedding);
    moved.mutable_params()[k] = saved - 1e-5;
    const double minus = effectiveness_loss(moved, stamped, r.target.embedding);
    moved.mutable_params()[k] = saved;
    record(pgrad[k], (plus - minus) / 2e-5);
  }
  const double secs = seconds_since(t0);
  return {failed == 0 && secs < 120.0,
          fmt("%d coordinates (10 trigger, 10 parameter), worst rel err %.3g (tol 1e-3), %.2f s (limit 120 s)",
              checked, worst, secs)};
}

Outcome ac3_bounds() {
  ToyRun& r = toy();
  run_targeted(r);
  const double eps1 = 8.0 / 255.0;
  const double eps2 = BackdoorConfig{}.epsilon2;
  // Untargeted stage one, instrumented as well.
  double worst_untargeted = 0.0;
  std::size_t untargeted_steps = 0;
  optimize_untargeted_trigger(r.clean, r.shadow, eps1, TriggerOptConfig{}, 0,
                              [&](std::size_t, std::span<const double> v) {
                                worst_untargeted = std::max(worst_untargeted, max_abs(v));
                                ++untargeted_steps;
                              });
  const bool ok = r.worst_trigger <= eps1 + 1e-7 && worst_untargeted <= eps1 + 1e-7 &&
                  r.worst_noise <= eps2 + 1e-7 && r.trigger_steps > 0 && r.noise_steps > 0;
  return {ok, fmt("max|trigger| %.9f over %zu steps, max|untargeted trigger| %.9f over %zu steps (bound %.9f); "
                  "max|noise| %.9f over %zu PGD steps (bound %.1f)",
                  r.worst_trigger, r.trigger_steps, worst_untargeted, untargeted_steps, eps1 + 1e-7,
                  r.worst_noise, r.noise_steps, eps2)};
}

Outcome ac4_targeted() {
  ToyRun& r = toy();
  run_targeted(r);
  const MetricReport m = evaluate_attack(r.with_tf->encoder, r.clean, r.test, r.trigger.trigger, r.target, r.gallery);
  const double uplift = m.sim_t - m.sim_t_baseline;
  const bool ok = uplift >= 0.3 && m.sim_b >= 0.90 && m.asr >= 90.0 && m.far <= 5.0 && r.seconds <= 1800.0;
  return {ok, fmt("Sim-T %.4f (baseline %.4f, uplift %.4f >= 0.3), Sim-B %.4f >= 0.90, ASR %.1f%% >= 90, "
                  "FAR %.1f%% <= 5, %zu test images, %.0f s (limit 1800 s)",
                  m.sim_t, m.sim_t_baseline, uplift, m.sim_b, m.asr, m.far, m.n_samples, r.seconds)};
}

Outcome ac5_stealth() {
  ToyRun& r = toy();
  run_targeted(r);
  BackdoorConfig no_tf;
  no_tf.flags = AblationFlags::parse("TO=1,TF=0");
  EncoderPair pair(r.clean);
  r.without_tf = train_backdoor(pair, r.shadow, r.target, r.trigger.trigger, no_tf, 0);
  const InversionConfig inv;
  const double pl1_tf = invert_trigger(r.with_tf->encoder, r.probe, inv).pl1;
  const double pl1_plain = invert_trigger(r.without_tf->encoder, r.probe, inv).pl1;
  const InversionResult clean_inv = invert_trigger(r.clean, r.probe, inv);
  const bool ok = pl1_tf > pl1_plain && clean_inv.pl1 >= pl1_plain && clean_inv.verdict == Verdict::kClean;
  return {ok, fmt("PL1 with TF %.6f > without TF %.6f; clean %.6f >= without TF (clean verdict: %s); "
                  "probe %zu images, %zu steps, seed %llu",
                  pl1_tf, pl1_plain, clean_inv.pl1, to_string(clean_inv.verdict).c_str(), r.probe.size(), inv.steps,
                  static_cast<unsigned long long>(inv.seed))};
}

Outcome ac6_untargeted() {
  const ToyRun& r = toy();
  const auto t0 = Clock::now();
  UntargetedConfig cfg;
  cfg.lambda4 = 5.0;
  const TriggerResult stage1 = optimize_untargeted_trigger(r.clean, r.shadow, cfg.epsilon1, cfg.trigger, 0);
  EncoderPair pair(r.clean);
  double worst_identity = 0.0;
  std::size_t steps = 0;
  TrainingObserver obs;
  obs.on_step = [&](const StepLosses& s) {
    worst_identity = std::max(
        worst_identity, std::abs(s.total - (s.effectiveness + cfg.lambda3 * s.focus + cfg.lambda4 * s.utility)));
    ++steps;
  };
  const BackdooredEncoder bd = train_untargeted(pair, r.shadow, stage1.trigger, cfg, 0, obs);
  const double separation = separation_loss(bd.encoder, r.test, stage1.trigger);
  const double simb = sim_b(bd.encoder, r.clean, r.test);
  const bool ok = separation <= 0.3 && simb >= 0.90 && worst_identity <= 1e-6 && steps > 0;
  return {ok, fmt("held-out cos(f'(x+trigger), f'(x)) %.4f <= 0.3, Sim-B %.4f >= 0.90, decomposition error %.3g "
                  "over %zu steps (tol 1e-6); lambda3 %.1f lambda4 %.1f, %.0f s",
                  separation, simb, worst_identity, steps, cfg.lambda3, cfg.lambda4, seconds_since(t0))};
}

Outcome ac7_finetune() {
  ToyRun& r = toy();
  run_targeted(r);
  FinetuneDefenseConfig cfg;
  cfg.epochs = 3;
  const FinetuneOutcome out = finetune_robustness(*r.with_tf, r.clean, r.finetune, cfg, r.test, r.trigger.trigger,
                                                  r.target, r.gallery, r.shadow.images.ids());
  const double retained = out.retained_asr_fraction();
  return {out.before.asr > 0.0 && retained >= 0.70,
          fmt("ASR %.1f%% -> %.1f%% after %zu epochs on %zu clean images, retained %.1f%% >= 70%%; "
              "Sim-T %.4f -> %.4f",
              out.before.asr, out.after.asr, cfg.epochs, r.finetune.size(), 100.0 * retained, out.before.sim_t,
              out.after.sim_t)};
}

// --- AC8: CLI determinism ------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args, const fs::path& work) {
  const std::string cmd = "cd '" + work.string() + "' && BADVISION_HOME='" + work.string() + "' '" +
                          std::string(BADVISION_CLI) + "' " + args + " >> cli.log 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// Largest difference between numeric leaves of two JSON documents; NaN when
// the structure or a non-numeric leaf differs.
double json_numeric_diff(const nlohmann::json& a, const nlohmann::json& b) {
  if (a.is_number() && b.is_number()) return std::abs(a.get<double>() - b.get<double>());
  if (a.type() != b.type() || a.size() != b.size()) return std::nan("");
  if (a.is_object()) {
    double worst = 0.0;
    for (auto it = a.begin(); it != a.end(); ++it) {
      if (!b.contains(it.key())) return std::nan("");
      const double d = json_numeric_diff(it.value(), b.at(it.key()));
      if (std::isnan(d)) return d;
      worst = std::max(worst, d);
    }
    return worst;
  }
  if (a.is_array()) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double d = json_numeric_diff(a[i], b[i]);
      if (std::isnan(d)) return d;
      worst = std::max(worst, d);
    }
    return worst;
  }
  return a == b ? 0.0 : std::nan("");
}

Outcome ac8_determinism() {
  const fs::path work = bvtest::scratch_dir("acceptance_cli");
  const fs::path data = bvtest::toy_data_dir();
  nlohmann::json cfg = {{"encoder", {{"arch", "checkpoint"}, {"path", bvtest::fixture_encoder_path().string()}}},
                        {"data",
                         {{"shadow", (data / "shadow").string()},
                          {"test", (data / "test").string()},
                          {"gallery", (data / "gallery").string()},
                          {"probe", (data / "probe").string()},
                          {"finetune", (data / "finetune").string()}}},
                        {"target", (data / "target.png").string()},
                        {"trigger_path", (work / "trigger_a/trigger.bin").string()},
                        {"seed", 0}};
  write_json(work / "config.json", cfg);

  const std::vector<std::pair<std::string, std::string>> commands{
      {"optimize-trigger", "optimize-trigger -c config.json"},
      {"attack", "attack -c config.json"},
      {"detect", "detect -c config.json --encoder " + (work / "attack_a/encoder.bvenc").string()},
      {"evaluate", "evaluate -c config.json --backdoored " + (work / "attack_a/encoder.bvenc").string()},
      {"export-features", "export-features -c config.json --trigger " + (work / "trigger_a/trigger.bin").string()},
  };
  std::vector<std::string> notes;
  bool ok = true;
  double worst = 0.0;
  for (const auto& [verb, args] : commands) {
    const std::string stem = verb == "optimize-trigger" ? "trigger" : verb;
    for (const char* suffix : {"_a", "_b"}) {
      const int code = run_cli(args + " -o " + stem + suffix, work);
      if (code != 0) {
        ok = false;
        notes.push_back(verb + std::string(suffix) + " exit " + std::to_string(code));
      }
    }
    const fs::path rec_a = work / (stem + "_a") / (verb + ".record.json");
    const fs::path rec_b = work / (stem + "_b") / (verb + ".record.json");
    if (!fs::exists(rec_a) || !fs::exists(rec_b)) {
      ok = false;
      notes.push_back(verb + ": record missing");
      continue;
    }
    const double d = json_numeric_diff(read_json(rec_a).at("metrics"), read_json(rec_b).at("metrics"));
    if (!(d <= 1e-5)) {
      ok = false;
      notes.push_back(verb + ": metrics differ");
    }
    if (!std::isnan(d)) worst = std::max(worst, d);
  }
  const bool same_trigger =
      fs::exists(work / "trigger_a/trigger.bin") &&
      slurp(work / "trigger_a/trigger.bin") == slurp(work / "trigger_b/trigger.bin");
  ok = ok && same_trigger;
  std::string detail = fmt("5 commands run twice, max metric diff %.3g (tol 1e-5), trigger checkpoint %s", worst,
                           same_trigger ? "byte-identical" : "DIFFERS");
  for (const auto& n : notes) detail += "; " + n;
  if (ok) fs::remove_all(work);
  return {ok, detail};
}

Outcome ac9_degenerate() {
  const ToyRun& r = toy();
  std::vector<std::string> failures;
  const ImageBatch batch = r.test.slice(0, 20);
  const ImageBatch same = apply_trigger(batch, Perturbation::zeros(3, 32, 32, 0.0, PerturbationRole::kTrigger));
  if (!std::equal(same.pixels().begin(), same.pixels().end(), batch.pixels().begin())) {
    failures.push_back("zero trigger changed pixels");
  }
  EncoderPair pair(r.clean);
  const double u = utility_loss(pair.trainable(), pair.clean(), batch);
  if (u != -1.0) failures.push_back(fmt("utility %.17g != -1", u));
  const double pl1_zero = pl1_norm(Perturbation::zeros(3, 32, 32, 1.0, PerturbationRole::kInverted));
  const double pl1_full =
      pl1_norm(Perturbation(3, 32, 32, 1.0, PerturbationRole::kInverted, std::vector<double>(3 * 32 * 32, 1.0)));
  if (pl1_zero != 0.0) failures.push_back("PL1(0) != 0");
  if (pl1_full != 1.0) failures.push_back("PL1(1) != 1");
  if (judge(0.1) != Verdict::kClean) failures.push_back("judge(0.1) not clean");
  if (judge(std::nextafter(0.1, 0.0)) != Verdict::kBackdoored) failures.push_back("judge just below 0.1 not backdoored");
  std::string detail = "zero-trigger identity, utility of identical pair = -1 exactly, PL1 0/1 exact, strict 0.1 boundary";
  for (const auto& f : failures) detail += "; " + f;
  return {failures.empty(), detail};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"AC1 oracle equivalence", ac1_oracle},    {"AC2 gradient correctness", ac2_gradients},
      {"AC3 bound compliance", ac3_bounds},      {"AC4 targeted attack efficacy", ac4_targeted},
      {"AC5 stealth direction", ac5_stealth},    {"AC6 untargeted attack", ac6_untargeted},
      {"AC7 fine-tuning robustness", ac7_finetune}, {"AC8 determinism", ac8_determinism},
      {"AC9 degenerate cases", ac9_degenerate},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failed;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
