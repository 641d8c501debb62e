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

#include "badvision/encoders.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <mutex>

#include "badvision/common.hpp"
#include "badvision/small_conv.hpp"

namespace badvision {
namespace {

constexpr char kCheckpointMagic[8] = {'B', 'V', 'E', 'N', 'C', '0', '0', '1'};

struct Registry {
  std::mutex mutex;
  std::map<std::string, EncoderFactory> factories;
};

Registry& registry() {
  static Registry* instance = [] {
    auto* r = new Registry;
    r->factories["small-conv"] = [](const nlohmann::json& d) -> std::unique_ptr<EncoderModel> {
      return std::make_unique<SmallConvEncoder>(SmallConvSpec::from_json(d),
                                                d.value("seed", std::uint64_t{0}));
    };
    return r;
  }();
  return *instance;
}

EncoderFactory find_factory(const std::string& arch) {
  auto& r = registry();
  std::lock_guard lock(r.mutex);
  auto it = r.factories.find(arch);
  if (it == r.factories.end()) throw ConfigError("unknown encoder plugin: " + arch);
  return it->second;
}

template <typename T>
void write_pod(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const std::filesystem::path& path) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw IoError("truncated encoder checkpoint " + path.string());
  return value;
}

double row_norm(const Eigen::RowVectorXd& v) { return std::max(v.norm(), kNormFloor); }

// Bitwise-identical nonzero rows give exactly 1 so self-similarity carries no rounding.
double row_cos(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) {
  if (a.size() > 0 && a == b && a.norm() > kNormFloor) return 1.0;
  return std::clamp(a.dot(b) / (row_norm(a) * row_norm(b)), -1.0, 1.0);
}

// dcos(a, b)/da for a row pair with precomputed cosine.
Eigen::RowVectorXd cos_grad(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b, double c) {
  const double raw = a.norm();
  const double na = std::max(raw, kNormFloor);
  const double nb = row_norm(b);
  Eigen::RowVectorXd g = b / (na * nb);
  if (raw > kNormFloor) g -= c * a / (na * na);
  return g;
}

}  // namespace

Encoder::Encoder(std::unique_ptr<EncoderModel> model, std::string name)
    : model_(std::move(model)), name_(std::move(name)) {
  if (!model_) throw ContractError("encoder requires a model");
  if (name_.empty()) name_ = model_->arch();
}

Encoder::Encoder(const Encoder& other)
    : model_(other.model_ ? other.model_->clone() : nullptr), name_(other.name_) {}

Encoder& Encoder::operator=(const Encoder& other) {
  if (this != &other) {
    model_ = other.model_ ? other.model_->clone() : nullptr;
    name_ = other.name_;
  }
  return *this;
}

std::string Encoder::param_hash() const { return sha256_hex(params()); }

Activation Encoder::forward(const ImageBatch& images, bool keep_state) const {
  if (images.channels() != channels() || images.height() != model_->height() ||
      images.width() != model_->width()) {
    throw ContractError("images do not match the encoder input resolution");
  }
  Activation act;
  act.batch = images.size();
  act.features = model_->forward(images.pixels(), images.size(), keep_state ? &act.state : nullptr);
  return act;
}

void Encoder::backward(const Activation& act, const Eigen::MatrixXd& d_features,
                       std::span<double> param_grad, std::span<double> input_grad) const {
  if (!act.state) throw ContractError("activation was computed without a backward state");
  model_->backward(*act.state, d_features, param_grad, input_grad);
}

EncoderPair::EncoderPair(Encoder clean) : clean_(std::move(clean)), trainable_(clean_) {}

TargetSpec TargetSpec::from_image(const Encoder& clean, ImageBatch image) {
  if (image.size() != 1) throw ContractError("target must be a single image");
  TargetSpec spec;
  spec.embedding = clean.forward(image, false).features.row(0);
  spec.image = std::move(image);
  return spec;
}

void register_encoder_plugin(const std::string& name, EncoderFactory factory) {
  auto& r = registry();
  std::lock_guard lock(r.mutex);
  r.factories[name] = std::move(factory);
}

std::vector<std::string> registered_encoder_plugins() {
  auto& r = registry();
  std::lock_guard lock(r.mutex);
  std::vector<std::string> names{"checkpoint"};
  for (const auto& [name, _] : r.factories) names.push_back(name);
  return names;
}

Encoder make_encoder(const nlohmann::json& descriptor) {
  if (!descriptor.is_object() || !descriptor.contains("arch") || !descriptor["arch"].is_string()) {
    throw ConfigError("encoder descriptor must be an object with a string \"arch\"");
  }
  const std::string arch = descriptor["arch"].get<std::string>();
  if (arch == "checkpoint") {
    if (!descriptor.contains("path")) throw ConfigError("checkpoint descriptor requires \"path\"");
    return load_encoder_checkpoint(descriptor["path"].get<std::string>());
  }
  return Encoder(find_factory(arch)(descriptor), descriptor.value("name", arch));
}

EncoderPair load_encoder(const nlohmann::json& descriptor) { return EncoderPair(make_encoder(descriptor)); }

void save_encoder(const std::filesystem::path& path, const Encoder& encoder, const nlohmann::json& extra) {
  const std::string header = encoder.model().architecture().dump();
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(header.size()));
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    const auto params = encoder.params();
    write_pod<std::uint64_t>(out, params.size());
    out.write(reinterpret_cast<const char*>(params.data()), static_cast<std::streamsize>(params.size_bytes()));
    if (!out) throw IoError("short write to " + path.string());
  }
  nlohmann::json side = extra;
  side["name"] = encoder.name();
  side["arch"] = encoder.arch();
  side["dim"] = encoder.feature_dim();
  side["resolution"] = {encoder.resolution().height, encoder.resolution().width};
  side["hash"] = encoder.param_hash();
  side["architecture"] = encoder.model().architecture();
  std::ofstream meta(path.string() + ".json", std::ios::trunc);
  if (!meta) throw IoError("cannot write sidecar for " + path.string());
  meta << side.dump(2) << '\n';
}

Encoder load_encoder_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open encoder checkpoint " + path.string());
  char magic[sizeof(kCheckpointMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw IoError("not an encoder checkpoint: " + path.string());
  }
  const auto header_len = read_pod<std::uint32_t>(in, path);
  if (header_len > (1u << 20)) throw IoError("implausible checkpoint header in " + path.string());
  std::string header(header_len, '\0');
  in.read(header.data(), header_len);
  if (!in) throw IoError("truncated encoder checkpoint " + path.string());
  nlohmann::json arch;
  try {
    arch = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed checkpoint header in " + path.string() + ": " + e.what());
  }
  std::unique_ptr<EncoderModel> model;
  try {
    model = find_factory(arch.at("arch").get<std::string>())(arch);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("checkpoint architecture unreadable: " + std::string(e.what()));
  }
  const auto count = read_pod<std::uint64_t>(in, path);
  auto params = model->mutable_params();
  if (count != params.size()) throw IoError("checkpoint parameter count mismatch in " + path.string());
  in.read(reinterpret_cast<char*>(params.data()), static_cast<std::streamsize>(params.size_bytes()));
  if (!in) throw IoError("truncated encoder checkpoint " + path.string());

  std::string name = path.stem().string();
  std::ifstream side(path.string() + ".json");
  if (side) {
    try {
      const auto meta = nlohmann::json::parse(side);
      name = meta.value("name", name);
      Encoder encoder(std::move(model), name);
      if (meta.contains("hash") && meta["hash"].get<std::string>() != encoder.param_hash()) {
        throw IoError("encoder checkpoint hash mismatch for " + path.string());
      }
      return encoder;
    } catch (const nlohmann::json::exception& e) {
      throw IoError("malformed encoder sidecar: " + std::string(e.what()));
    }
  }
  return Encoder(std::move(model), name);
}

FeatureMatrix normalize_rows(const FeatureMatrix& features) {
  FeatureMatrix out{features.rows, true};
  for (Eigen::Index i = 0; i < out.rows.rows(); ++i) {
    out.rows.row(i) /= row_norm(out.rows.row(i));
  }
  return out;
}

FeatureMatrix embed(const Encoder& encoder, const ImageBatch& images, bool normalize) {
  constexpr std::size_t kChunk = 64;
  FeatureMatrix raw;
  if (images.size() <= kChunk) {
    raw.rows = encoder.forward(images, false).features;
  } else {
    raw.rows.resize(static_cast<Eigen::Index>(images.size()), encoder.feature_dim());
    for (std::size_t begin = 0; begin < images.size(); begin += kChunk) {
      const std::size_t end = std::min(images.size(), begin + kChunk);
      raw.rows.middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(end - begin)) =
          encoder.forward(images.slice(begin, end), false).features;
    }
  }
  return normalize ? normalize_rows(raw) : raw;
}

double cosine_sim(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ContractError("cosine_sim: shape mismatch");
  Eigen::Map<const Eigen::RowVectorXd> va(a.data(), static_cast<Eigen::Index>(a.size()));
  Eigen::Map<const Eigen::RowVectorXd> vb(b.data(), static_cast<Eigen::Index>(b.size()));
  return row_cos(va, vb);
}

double cosine_sim(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) {
  return cosine_sim(std::span<const double>(a.data(), static_cast<std::size_t>(a.size())),
                    std::span<const double>(b.data(), static_cast<std::size_t>(b.size())));
}

double pairwise_mean_cos(const FeatureMatrix& features) {
  return cosgrad::pairwise_mean_cos(features.rows, nullptr);
}

namespace cosgrad {

double mean_cos_to(const Eigen::MatrixXd& features, const Eigen::RowVectorXd& target,
                   Eigen::MatrixXd* d_features) {
  const Eigen::Index n = features.rows();
  if (n == 0 || features.cols() != target.size()) throw ContractError("mean_cos_to: shape mismatch");
  if (d_features) d_features->resize(n, features.cols());
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::RowVectorXd row = features.row(i);
    const double c = row_cos(row, target);
    total += c;
    if (d_features) d_features->row(i) = cos_grad(row, target, c) / static_cast<double>(n);
  }
  return total / static_cast<double>(n);
}

double mean_rowwise_cos(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, Eigen::MatrixXd* d_a,
                        Eigen::MatrixXd* d_b) {
  const Eigen::Index n = a.rows();
  if (n == 0 || a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ContractError("mean_rowwise_cos: shape mismatch");
  }
  if (d_a) d_a->resize(n, a.cols());
  if (d_b) d_b->resize(n, b.cols());
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::RowVectorXd ra = a.row(i);
    const Eigen::RowVectorXd rb = b.row(i);
    const double c = row_cos(ra, rb);
    total += c;
    if (d_a) d_a->row(i) = cos_grad(ra, rb, c) / static_cast<double>(n);
    if (d_b) d_b->row(i) = cos_grad(rb, ra, c) / static_cast<double>(n);
  }
  return total / static_cast<double>(n);
}

double pairwise_mean_cos(const Eigen::MatrixXd& features, Eigen::MatrixXd* d_features) {
  const Eigen::Index n = features.rows();
  if (n < 2) throw ContractError("pairwise mean cosine needs at least two rows");
  Eigen::MatrixXd unit(n, features.cols());
  Eigen::VectorXd raw(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    raw(i) = features.row(i).norm();
    unit.row(i) = features.row(i) / std::max(raw(i), kNormFloor);
  }
  const Eigen::RowVectorXd sum = unit.colwise().sum();
  const double pairs = 0.5 * static_cast<double>(n) * static_cast<double>(n - 1);
  const double s = 0.5 * (sum.squaredNorm() - unit.rowwise().squaredNorm().sum());
  if (d_features) {
    d_features->resize(n, features.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::RowVectorXd g = (sum - unit.row(i)) / pairs;
      const double scale = std::max(raw(i), kNormFloor);
      if (raw(i) > kNormFloor) {
        d_features->row(i) = (g - g.dot(unit.row(i)) * unit.row(i)) / scale;
      } else {
        d_features->row(i) = g / scale;
      }
    }
  }
  return s / pairs;
}

double cosine(std::span<const double> a, std::span<const double> b, std::span<double> d_a) {
  if (a.size() != b.size()) throw ContractError("cosine: shape mismatch");
  Eigen::Map<const Eigen::RowVectorXd> va(a.data(), static_cast<Eigen::Index>(a.size()));
  Eigen::Map<const Eigen::RowVectorXd> vb(b.data(), static_cast<Eigen::Index>(b.size()));
  const Eigen::RowVectorXd ra = va;
  const Eigen::RowVectorXd rb = vb;
  const double c = row_cos(ra, rb);
  if (!d_a.empty()) {
    const Eigen::RowVectorXd g = cos_grad(ra, rb, c);
    std::copy(g.data(), g.data() + g.size(), d_a.begin());
  }
  return c;
}

}  // namespace cosgrad
}  // namespace badvision
