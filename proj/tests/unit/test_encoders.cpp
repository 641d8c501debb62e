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

#include <cmath>
#include <fstream>
#include <random>

#include "badvision/common.hpp"
#include "badvision/encoders.hpp"
#include "badvision/small_conv.hpp"
#include "test_support.hpp"

using namespace badvision;
namespace fs = std::filesystem;

namespace {

// O(N^2) reference over unordered pairs.
double pair_loop(const Eigen::MatrixXd& f) {
  double sum = 0.0;
  int count = 0;
  for (Eigen::Index i = 0; i < f.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < f.rows(); ++j) {
      sum += f.row(i).dot(f.row(j)) / (f.row(i).norm() * f.row(j).norm());
      ++count;
    }
  }
  return sum / count;
}

Eigen::MatrixXd random_matrix(int n, int d, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Eigen::MatrixXd m(n, d);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) m(i, j) = g(rng);
  }
  return m;
}

}  // namespace

TEST(Cosine, Basics) {
  const std::vector<double> v{0.3, -1.2, 2.0};
  const std::vector<double> neg{-0.3, 1.2, -2.0};
  EXPECT_NEAR(cosine_sim(v, v), 1.0, 1e-15);
  EXPECT_NEAR(cosine_sim(v, neg), -1.0, 1e-15);
  EXPECT_EQ(cosine_sim(std::vector<double>{1, 0}, std::vector<double>{0, 1}), 0.0);
  // Zero vectors are guarded rather than NaN.
  EXPECT_EQ(cosine_sim(std::vector<double>{0, 0}, std::vector<double>{1, 0}), 0.0);
}

TEST(PairwiseMeanCos, HandExamples) {
  Eigen::MatrixXd same(3, 2);
  same << 0.6, 0.8, 0.6, 0.8, 0.6, 0.8;
  EXPECT_NEAR(pairwise_mean_cos(FeatureMatrix{same, true}), 1.0, 1e-12);
  Eigen::MatrixXd three(3, 2);
  three << 1, 0, 0, 1, -1, 0;
  EXPECT_NEAR(pairwise_mean_cos(FeatureMatrix{three, false}), -1.0 / 3.0, 1e-15);
  EXPECT_THROW(pairwise_mean_cos(FeatureMatrix{Eigen::MatrixXd::Ones(1, 4), false}), ContractError);
}

TEST(PairwiseMeanCos, MatchesPairLoop) {
  std::mt19937_64 rng(8);
  const Eigen::MatrixXd m = random_matrix(8, 16, rng);
  EXPECT_NEAR(pairwise_mean_cos(FeatureMatrix{m, false}), pair_loop(m), 1e-6);
}

TEST(CosGrad, MatchesFiniteDifferences) {
  std::mt19937_64 rng(3);
  const Eigen::MatrixXd a = random_matrix(5, 6, rng);
  const Eigen::MatrixXd b = random_matrix(5, 6, rng);
  const Eigen::RowVectorXd t = random_matrix(1, 6, rng);
  auto check = [&](auto value, const Eigen::MatrixXd& analytic, Eigen::MatrixXd x) {
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      for (Eigen::Index j = 0; j < x.cols(); ++j) {
        const double h = 1e-6;
        Eigen::MatrixXd p = x, m = x;
        p(i, j) += h;
        m(i, j) -= h;
        EXPECT_NEAR(analytic(i, j), (value(p) - value(m)) / (2 * h), 1e-7);
      }
    }
  };
  Eigen::MatrixXd g;
  cosgrad::pairwise_mean_cos(a, &g);
  check([](const Eigen::MatrixXd& x) { return cosgrad::pairwise_mean_cos(x, nullptr); }, g, a);
  cosgrad::mean_cos_to(a, t, &g);
  check([&](const Eigen::MatrixXd& x) { return cosgrad::mean_cos_to(x, t, nullptr); }, g, a);
  Eigen::MatrixXd ga, gb;
  cosgrad::mean_rowwise_cos(a, b, &ga, &gb);
  check([&](const Eigen::MatrixXd& x) { return cosgrad::mean_rowwise_cos(x, b, nullptr, nullptr); }, ga, a);
  check([&](const Eigen::MatrixXd& x) { return cosgrad::mean_rowwise_cos(a, x, nullptr, nullptr); }, gb, b);
}

TEST(Registry, ToyDescriptor) {
  const EncoderPair pair = load_encoder({{"arch", "small-conv"}, {"dim", 64}, {"seed", 7}});
  EXPECT_EQ(pair.feature_dim(), 64);
  EXPECT_EQ(pair.resolution(), (Resolution{32, 32}));
  EXPECT_EQ(pair.clean().param_hash(), pair.trainable().param_hash());
}

TEST(Registry, SameDescriptorSameEmbedding) {
  const ImageBatch img = bvtest::scene_batch(1, 4);
  const Encoder a = bvtest::random_encoder(7);
  const Encoder b = bvtest::random_encoder(7);
  const Encoder c = bvtest::random_encoder(8);
  EXPECT_EQ(embed(a, img, false).rows, embed(b, img, false).rows);
  EXPECT_NE(a.param_hash(), c.param_hash());
}

TEST(Registry, UnknownPluginAndBadDescriptors) {
  EXPECT_THROW(make_encoder({{"arch", "no-such-encoder"}}), ConfigError);
  EXPECT_THROW(make_encoder({{"seed", 1}}), ConfigError);
  EXPECT_THROW(make_encoder({{"arch", "checkpoint"}}), ConfigError);
  EXPECT_THROW(make_encoder({{"arch", "small-conv"}, {"channels", nlohmann::json::array()}}), ConfigError);
  EXPECT_THROW(make_encoder({{"arch", "checkpoint"}, {"path", "/nonexistent.bvenc"}}), IoError);
}

TEST(Registry, CustomPlugin) {
  register_encoder_plugin("tiny-test", [](const nlohmann::json& d) {
    SmallConvSpec spec;
    spec.resolution = 8;
    spec.channels = {4};
    spec.strides = {2};
    spec.dim = d.value("dim", 5);
    return std::make_unique<SmallConvEncoder>(spec, 1);
  });
  const auto names = registered_encoder_plugins();
  EXPECT_NE(std::find(names.begin(), names.end(), "tiny-test"), names.end());
  EXPECT_EQ(make_encoder({{"arch", "tiny-test"}, {"dim", 3}}).feature_dim(), 3);
}

TEST(Checkpoint, RoundTripAndSidecar) {
  const fs::path dir = bvtest::scratch_dir("ckpt");
  const Encoder enc = bvtest::random_encoder(11);
  save_encoder(dir / "e.bvenc", enc, {{"note", "x"}});
  const Encoder back = load_encoder_checkpoint(dir / "e.bvenc");
  EXPECT_EQ(back.param_hash(), enc.param_hash());
  EXPECT_EQ(back.arch(), "small-conv");
  std::ifstream side(dir / "e.bvenc.json");
  const auto meta = nlohmann::json::parse(side);
  EXPECT_EQ(meta.at("dim"), back.feature_dim());
  EXPECT_EQ(meta.at("hash"), enc.param_hash());
  EXPECT_EQ(meta.at("note"), "x");

  // Native layout: magic, u32 header length, header, u64 count, doubles.
  std::ifstream raw(dir / "e.bvenc", std::ios::binary);
  char magic[8];
  raw.read(magic, 8);
  EXPECT_EQ(std::string(magic, 8), "BVENC001");
  std::uint32_t header_len = 0;
  raw.read(reinterpret_cast<char*>(&header_len), 4);
  std::string header(header_len, '\0');
  raw.read(header.data(), header_len);
  EXPECT_EQ(nlohmann::json::parse(header).at("arch"), "small-conv");
  std::uint64_t count = 0;
  raw.read(reinterpret_cast<char*>(&count), 8);
  EXPECT_EQ(count, enc.param_count());
  EXPECT_EQ(fs::file_size(dir / "e.bvenc"), 8 + 4 + header_len + 8 + count * 8);
}

TEST(Checkpoint, FixtureDimMatchesSidecar) {
  // Inspect the sidecar independently of the loader.
  std::ifstream side(bvtest::fixture_encoder_path().string() + ".json");
  const auto meta = nlohmann::json::parse(side);
  const EncoderPair pair = load_encoder({{"arch", "checkpoint"}, {"path", bvtest::fixture_encoder_path().string()}});
  EXPECT_EQ(pair.feature_dim(), meta.at("dim").get<int>());
  EXPECT_EQ(pair.clean().param_hash(), meta.at("hash").get<std::string>());
}

TEST(Checkpoint, RejectsTruncatedFile) {
  const fs::path dir = bvtest::scratch_dir("trunc");
  save_encoder(dir / "e.bvenc", bvtest::random_encoder(1));
  fs::resize_file(dir / "e.bvenc", fs::file_size(dir / "e.bvenc") - 16);
  EXPECT_THROW(load_encoder_checkpoint(dir / "e.bvenc"), IoError);
}

TEST(EncoderCopy, IsDeep) {
  Encoder a = bvtest::random_encoder(2);
  Encoder b = a;
  b.mutable_params()[0] += 1.0;
  EXPECT_NE(a.param_hash(), b.param_hash());
  EncoderPair pair(a);
  pair.trainable().mutable_params()[3] -= 0.5;
  EXPECT_EQ(pair.clean().param_hash(), a.param_hash());
}

TEST(Embed, DuplicatedRowsAndNormalization) {
  const ImageBatch one = bvtest::scene_batch(1, 2);
  const std::vector<std::size_t> idx{0, 0, 0};
  const Encoder enc = bvtest::fixture_encoder();
  const FeatureMatrix f = embed(enc, one.gather(idx), true);
  EXPECT_TRUE(f.normalized);
  EXPECT_EQ(f.rows.row(0), f.rows.row(2));
  for (Eigen::Index i = 0; i < f.rows.rows(); ++i) EXPECT_NEAR(f.rows.row(i).norm(), 1.0, 1e-6);
}

TEST(Embed, BatchingEquivalence) {
  const ImageBatch five = bvtest::scene_batch(5, 6);
  const Encoder enc = bvtest::fixture_encoder();
  const FeatureMatrix all = embed(enc, five, false);
  for (std::size_t i = 0; i < 5; ++i) {
    const FeatureMatrix single = embed(enc, five.slice(i, i + 1), false);
    EXPECT_LT((single.rows.row(0) - all.rows.row(static_cast<Eigen::Index>(i))).cwiseAbs().maxCoeff(), 1e-5);
  }
}

TEST(Embed, ShapeMismatchIsContractError) {
  const Encoder enc = bvtest::random_encoder();
  const ImageBatch small(3, 8, 8, std::vector<double>(192, 0.5), {"s"});
  EXPECT_THROW(embed(enc, small, false), ContractError);
}

namespace {

void check_backward(const Encoder& enc, const ImageBatch& images) {
  std::mt19937_64 rng(21);
  const Activation act = enc.forward(images, true);
  const Eigen::MatrixXd w = random_matrix(static_cast<int>(act.features.rows()), static_cast<int>(act.features.cols()), rng);
  std::vector<double> pgrad(enc.param_count(), 0.0);
  std::vector<double> igrad(images.pixels().size());
  enc.backward(act, w, pgrad, igrad);

  Encoder probe = enc;
  auto loss_params = [&]() { return (probe.forward(images, false).features.array() * w.array()).sum(); };
  std::uniform_int_distribution<std::size_t> pick_p(0, enc.param_count() - 1);
  for (int k = 0; k < 10; ++k) {
    const std::size_t idx = pick_p(rng);
    std::vector<double> params(probe.params().begin(), probe.params().end());
    const double h = 1e-5;
    const double saved = params[idx];
    probe.mutable_params()[idx] = saved + h;
    const double plus = loss_params();
    probe.mutable_params()[idx] = saved - h;
    const double minus = loss_params();
    probe.mutable_params()[idx] = saved;
    EXPECT_TRUE(bvtest::relative_close(pgrad[idx], (plus - minus) / (2 * h), 1e-3, 1e-6))
        << "param " << idx << " analytic " << pgrad[idx] << " numeric " << (plus - minus) / (2 * h);
  }

  std::vector<double> px(images.pixels().begin(), images.pixels().end());
  auto loss_pixels = [&]() {
    const ImageBatch b(images.channels(), images.height(), images.width(), px, images.ids());
    return (enc.forward(b, false).features.array() * w.array()).sum();
  };
  std::uniform_int_distribution<std::size_t> pick_x(0, px.size() - 1);
  for (int k = 0; k < 10; ++k) {
    std::size_t idx = pick_x(rng);
    while (px[idx] < 1e-3 || px[idx] > 1.0 - 1e-3) idx = pick_x(rng);
    const double numeric = bvtest::central_difference(px, idx, 1e-6, loss_pixels);
    EXPECT_TRUE(bvtest::relative_close(igrad[idx], numeric, 1e-3, 1e-6))
        << "pixel " << idx << " analytic " << igrad[idx] << " numeric " << numeric;
  }
}

}  // namespace

TEST(SmallConv, BackwardMatchesFiniteDifferences) {
  check_backward(bvtest::fixture_encoder(), bvtest::scene_batch(3, 30));
}

TEST(SmallConv, TokenFeaturesBackward) {
  const Encoder enc = make_encoder({{"arch", "small-conv"},
                                    {"resolution", 16},
                                    {"channels", {4, 8}},
                                    {"strides", {2, 2}},
                                    {"dim", 6},
                                    {"features", "tokens"},
                                    {"seed", 5}});
  EXPECT_EQ(enc.feature_dim(), 6 + 4 * 4 * 8);
  std::vector<double> px(2 * 3 * 16 * 16);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  for (auto& v : px) v = u(rng);
  check_backward(enc, ImageBatch(3, 16, 16, px, {"a", "b"}));
}

TEST(SmallConv, ParamCount) {
  // 3->16, 16->32, 32->64 conv3x3 with bias, then 64->64 linear.
  const std::size_t expected = (27 * 16 + 16) + (144 * 32 + 32) + (288 * 64 + 64) + (64 * 64 + 64);
  EXPECT_EQ(bvtest::random_encoder().param_count(), expected);
}

TEST(TargetSpecTest, EmbeddingIsCleanFeature) {
  const Encoder enc = bvtest::fixture_encoder();
  const ImageBatch img = bvtest::scene_batch(1, 9);
  const TargetSpec t = TargetSpec::from_image(enc, img);
  EXPECT_EQ(t.embedding, embed(enc, img, false).rows.row(0));
  EXPECT_THROW(TargetSpec::from_image(enc, bvtest::scene_batch(2, 9)), ContractError);
}
