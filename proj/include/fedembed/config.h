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
#ifndef FEDEMBED_CONFIG_H_
#define FEDEMBED_CONFIG_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fedembed/data.h"
#include "fedembed/federation.h"

namespace fedembed {

inline constexpr int kConfigVersion = 1;

enum class Method { kFedAvg, kFedProx, kFedLambda, kCvae, kCgan };

struct BlobConfig {
  int classes = 3;
  int dim = 16;
  int per_class = 600;
  double separation = 8.0;
  std::uint64_t seed = 0;
};

struct DatasetConfig {
  // Free-form identifier; reports refuse to merge runs whose names differ.
  std::string name;
  // Either a FEMB/CSV file or the blob generator.
  std::string path;
  std::optional<BlobConfig> blobs;
};

enum class PartitionKind { kIid, kDirichlet };

struct PartitionConfig {
  PartitionKind kind = PartitionKind::kDirichlet;
  double alpha = 0.3;
  int clients = 5;
  int min_client_size = 5;
};

struct DpSection {
  bool enabled = true;
  double epsilon = 1.0;
  double delta = 1e-4;
  double clip_norm = 1.5;
  BudgetPolicy on_budget_exceeded = BudgetPolicy::kFail;
};

struct RoundsSection {
  int rounds = 50;
  int local_epochs = 5;
  double learning_rate = 1e-3;
  int batch_size = 32;
  double fedprox_mu = 0.01;
};

struct SynthesisConfig {
  // 0 means the summed training-set size over all clients.
  int size = 0;
  // "uniform", "local" (the client's label frequencies) or "explicit".
  std::string class_distribution = "uniform";
  std::vector<double> class_weights;
};

struct DownstreamConfig {
  int epochs = 100;
  double learning_rate = 1e-3;
  int batch_size = 32;
  bool mix_real_and_synthetic = false;
};

struct EvalConfig {
  // Extra sliced-Wasserstein score when > 0.
  int sliced_projections = 0;
};

struct ExperimentConfig {
  int config_version = kConfigVersion;
  Method method = Method::kCvae;
  DatasetConfig dataset;
  PartitionConfig partition;
  SplitSpec split;
  CvaeDims cvae;  // input_dim and num_classes come from the data
  CganDims cgan;
  DpSection dp;
  RoundsSection rounds;
  SynthesisConfig synthesis;
  DownstreamConfig downstream;
  EvalConfig eval;
  std::vector<std::uint64_t> seeds = {0, 1, 2};
  int workers = 1;
  std::string output_dir = "runs/default";

  bool generative() const {
    return method == Method::kCvae || method == Method::kCgan;
  }
};

// Parses a JSON config. Unknown keys, wrong types and out-of-range values
// raise ConfigError naming the dotted field path.
ExperimentConfig ParseConfig(std::string_view json_text);
// ParseConfig on the file contents, then FEDEMBED_OUTPUT_DIR and
// FEDEMBED_WORKERS overrides.
ExperimentConfig LoadConfig(const std::filesystem::path& path);
void ApplyEnvironmentOverrides(ExperimentConfig& config);
// Field-level checks shared by ParseConfig and programmatic callers.
void ValidateConfig(const ExperimentConfig& config);

// Every field, defaults included, as sorted-key JSON.
std::string ConfigToJson(const ExperimentConfig& config);
// FNV-1a 64 of the canonical JSON without output_dir and workers, which
// do not affect results.
std::uint64_t ConfigHash(const ExperimentConfig& config);
std::string HashHex(std::uint64_t hash);
std::uint64_t Fnv1a64(std::string_view bytes);

std::string MethodName(Method method);
// "fedavg", "dp-cvae", ...
std::string MethodLabel(const ExperimentConfig& config);
// dataset.name if set, else a description of the source.
std::string DatasetId(const ExperimentConfig& config);

RoundConfig MakeRoundConfig(const ExperimentConfig& config);

}  // namespace fedembed

#endif  // FEDEMBED_CONFIG_H_
