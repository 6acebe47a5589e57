// Copyright 2026 The fedembed Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#include "fedembed/rng.h"

#include <cmath>
#include <numbers>

namespace fedembed {
namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;
constexpr std::uint64_t kRoundMul = 0xBF58476D1CE4E5B9ull;
constexpr std::uint64_t kPurposeMul = 0x94D049BB133111EBull;

}  // namespace

std::uint64_t Mix64(std::uint64_t x) {
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t DeriveStreamSeed(std::uint64_t global_seed, const StreamId& id) {
  const std::uint64_t raw =
      global_seed ^ (id.client * kGolden) ^ (id.round * kRoundMul) ^
      (static_cast<std::uint64_t>(id.purpose) * kPurposeMul);
  return Mix64(raw);
}

RngStream::RngStream(std::uint64_t global_seed, const StreamId& id)
    : state_(DeriveStreamSeed(global_seed, id)) {}

std::uint64_t RngStream::NextU64() {
  state_ += kGolden;
  return Mix64(state_);
}

double RngStream::Uniform() {
  return static_cast<double>(NextU64() >> 11) * 0x1.0p-53;
}

std::uint64_t RngStream::UniformIndex(std::uint64_t n) {
  // Lemire's nearly-divisionless method.
  std::uint64_t x = NextU64();
  __uint128_t m = static_cast<__uint128_t>(x) * n;
  std::uint64_t low = static_cast<std::uint64_t>(m);
  if (low < n) {
    const std::uint64_t threshold = (0 - n) % n;
    while (low < threshold) {
      x = NextU64();
      m = static_cast<__uint128_t>(x) * n;
      low = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::uint64_t>(m >> 64);
}

double RngStream::Normal() {
  if (cached_normal_) {
    const double z = *cached_normal_;
    cached_normal_.reset();
    return z;
  }
  const double u1 = UniformOpenZero();
  const double u2 = Uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  cached_normal_ = radius * std::sin(angle);
  return radius * std::cos(angle);
}

double RngStream::Gamma(double shape) { return std::exp(LogGamma(shape)); }

double RngStream::LogGamma(double shape) {
  if (shape < 1.0) {
    // X ~ Gamma(a + 1), U^(1/a) X ~ Gamma(a).
    const double boosted = LogGamma(shape + 1.0);
    return boosted + std::log(UniformOpenZero()) / shape;
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  while (true) {
    double x = 0.0;
    double v = 0.0;
    do {
      x = Normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = UniformOpenZero();
    if (u < 1.0 - 0.0331 * x * x * x * x ||
        std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) {
      return std::log(d) + std::log(v);
    }
  }
}

}  // namespace fedembed
