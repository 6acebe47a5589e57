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
#ifndef FEDEMBED_RNG_H_
#define FEDEMBED_RNG_H_

#include <cstdint>
#include <optional>

namespace fedembed {

// What a random stream is used for. The numeric codes are part of the
// reproducibility contract: changing them changes every experiment.
enum class Purpose : std::uint64_t {
  kInit = 1,
  kBatch = 2,
  kDpNoise = 3,
  kLatent = 4,
  kGenerate = 5,
  kPartition = 6,
  kSplit = 7,
  kData = 8,
  kShuffle = 9,
  kFakeLabels = 10,
  kDownstream = 11,
  kProjection = 12,
};

struct StreamId {
  std::uint64_t client = 0;
  std::uint64_t round = 0;
  Purpose purpose = Purpose::kInit;
};

// Client id reserved for server-side and dataset-level streams.
inline constexpr std::uint64_t kServerStream = 0xFFFFFFFFull;

// splitmix64 output finalizer.
std::uint64_t Mix64(std::uint64_t x);

// child = mix(global ^ client*0x9E37.. ^ round*0xBF58.. ^ purpose*0x94D0..)
std::uint64_t DeriveStreamSeed(std::uint64_t global_seed, const StreamId& id);

// A counter-based splitmix64 stream. Identical (seed, id) pairs reproduce
// identical sequences on every platform. Not thread-safe; each worker
// owns its streams.
class RngStream {
 public:
  RngStream(std::uint64_t global_seed, const StreamId& id);
  explicit RngStream(std::uint64_t raw_state) : state_(raw_state) {}

  std::uint64_t NextU64();
  // Uniform in [0, 1) with 53 random bits.
  double Uniform();
  // Uniform in (0, 1].
  double UniformOpenZero() { return 1.0 - Uniform(); }
  // Unbiased integer in [0, n). n must be positive.
  std::uint64_t UniformIndex(std::uint64_t n);
  // Standard normal via Box-Muller; the second variate is cached.
  double Normal();
  bool Bernoulli(double p) { return Uniform() < p; }
  // Gamma(shape, 1) by Marsaglia-Tsang, boosted for shape < 1.
  double Gamma(double shape);
  // log of a Gamma(shape, 1) variate. Stays finite for tiny shapes where
  // the variate itself underflows.
  double LogGamma(double shape);

 private:
  std::uint64_t state_;
  std::optional<double> cached_normal_;
};

}  // namespace fedembed

#endif  // FEDEMBED_RNG_H_
