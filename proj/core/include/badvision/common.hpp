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

#ifndef BADVISION_COMMON_HPP_
#define BADVISION_COMMON_HPP_

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace badvision {

// Error hierarchy. Every failure the library reports derives from Error so
// front-ends can map categories onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller violated a documented precondition (shape mismatch, N < 2, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Input data could not be read or decoded.
class InputError : public Error {
 public:
  using Error::Error;
};

// A dataset source produced no decodable images.
class EmptyDatasetError : public InputError {
 public:
  using InputError::InputError;
};

// Invalid configuration or unknown plugin name.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Filesystem or checkpoint failure.
class IoError : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite loss. `diagnostic` is a JSON document
// describing where it happened.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::string diagnostic)
      : Error(what), diagnostic_(std::move(diagnostic)) {}
  const std::string& diagnostic() const { return diagnostic_; }

 private:
  std::string diagnostic_;
};

// Lower-case hex SHA-256 of a byte range.
std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(std::string_view text);
std::string sha256_hex(std::span<const double> values);
std::string sha256_hex(std::span<const float> values);

// Deterministic Fisher-Yates permutation of [0, n). Does not rely on
// std::shuffle or std::uniform_int_distribution so the order is identical
// across standard library implementations.
std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed);

// Independent child seed for (stream, index), via splitmix64 mixing.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0);

// Uniform double in [0, 1) from a 64-bit engine output, 53-bit resolution.
double unit_from_bits(std::uint64_t bits);

}  // namespace badvision

#endif  // BADVISION_COMMON_HPP_
