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
#ifndef FEDEMBED_FEDERATION_H_
#define FEDEMBED_FEDERATION_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "fedembed/data.h"
#include "fedembed/models.h"
#include "fedembed/privacy.h"

namespace fedembed {

enum class ModelKind { kCvae, kCgan, kLinear };
enum class BaselineKind { kFedAvg, kFedProx, kFedLambda };
enum class BudgetPolicy { kFail, kWarn };

struct RoundConfig {
  int rounds = 50;
  int local_epochs = 5;
  int batch_size = 32;
  double learning_rate = 1e-3;
  // epsilon_target, delta and clip_norm are read from here; each client
  // calibrates its own noise multiplier and sample rate.
  std::optional<DpConfig> dp;
  ModelKind model_kind = ModelKind::kCvae;
  BaselineKind baseline = BaselineKind::kFedAvg;
  double fedprox_mu = 0.01;
  double kl_weight = 1.0;
  BudgetPolicy budget_policy = BudgetPolicy::kFail;

  void Validate() const;
};

// The only payload a client sends or receives: the decoder, the
// generator or the linear classifier. Encoders and discriminators have no
// representation here.
struct SharedWeights {
  MlpStack stack;
};

using ClientModel = std::variant<CvaeParams, CganParams, LinearParams>;

struct ClientState {
  int client_id = 0;
  EmbeddingDataset train;
  EmbeddingDataset val;
  EmbeddingDataset test;
  // Personal part (encoder or discriminator) plus the local copy of the
  // shared part.
  ClientModel model;
  std::optional<PrivacyAccountant> accountant;
  std::uint64_t seed = 0;

  const MlpStack& shared() const;
  MlpStack& mutable_shared();
};

// Dimensions used to build client and server models.
struct ModelSpec {
  CvaeDims cvae;
  CganDims cgan;
};

// Initializes the client's model from stream (seed, id, 0, kInit) and, when
// cfg.dp is set, calibrates sigma for q = min(1, B / n_train) over
// rounds * epochs * ceil(n_train / B) steps. Warns (mentioning delta) when
// delta >= 1 / n_train.
ClientState MakeClient(int client_id, EmbeddingDataset train,
                       EmbeddingDataset val, EmbeddingDataset test,
                       const ModelSpec& spec, const RoundConfig& cfg,
                       std::uint64_t seed);

// Server-side initial shared weights, from stream (seed, server, 0, kInit).
SharedWeights InitialSharedWeights(const ClientState& prototype,
                                   std::uint64_t seed);

std::int64_t PlannedSteps(int n_train, const RoundConfig& cfg);

struct LocalUpdate {
  SharedWeights weights;
  double mean_loss = 0.0;
  std::vector<double> epoch_losses;
  std::int64_t steps = 0;
  std::optional<PrivacySpent> spent;
  bool budget_exhausted = false;
};

// Overwrites the client's shared part with `global`, then runs
// cfg.local_epochs epochs of ceil(n / B) Poisson-sampled (DP-)SGD steps.
// Empty batches are skipped without touching the accountant.
LocalUpdate LocalTrain(ClientState& client, const SharedWeights& global,
                       const RoundConfig& cfg, int round);

struct ServerState {
  SharedWeights global;
  int round = 0;
  std::vector<double> aggregation_weights;
};

// theta = sum_m w_m theta_m, w_m = n_m / sum n.
SharedWeights AggregateShared(ServerState& server,
                              std::span<const SharedWeights> client_weights,
                              std::span<const int> n_train);

struct RoundLogRecord {
  int round = 0;
  int client_id = 0;
  double loss = 0.0;
  std::optional<double> epsilon;
};

struct FederationOptions {
  std::uint64_t seed = 0;
  int workers = 1;
  // Called after every aggregation with the 1-based round number.
  std::function<void(int, const ServerState&)> on_round;
};

struct FederationResult {
  ServerState server;
  std::vector<RoundLogRecord> logs;
};

// Rounds of broadcast -> LocalTrain on every client -> AggregateShared.
// Clients may train on parallel workers; results do not depend on the
// worker count because randomness is keyed by (seed, client, round,
// purpose) and aggregation runs in client order.
FederationResult RunFederatedTraining(std::vector<ClientState>& clients,
                                      const RoundConfig& cfg,
                                      const FederationOptions& options);

// One local update of a federated linear classifier. kFedProx adds
// (mu/2)||w - w_global||^2, applied as an implicit (proximal) step so large
// mu stays stable. kFedLambda trains its global part exactly like kFedAvg;
// the local classifier comes from the downstream stage.
SharedWeights BaselineUpdate(BaselineKind kind, ClientState& client,
                             const SharedWeights& global,
                             const RoundConfig& cfg, int round);

// Runs `fn(i)` for i in [0, count) on up to `workers` threads.
void ParallelFor(int count, int workers, const std::function<void(int)>& fn);

// Named float32 tensors plus a round counter and config hash.
struct NamedTensor {
  std::string name;
  std::vector<std::uint32_t> shape;
  std::vector<float> data;
};

struct Checkpoint {
  std::uint32_t round = 0;
  std::uint64_t config_hash = 0;
  std::vector<NamedTensor> tensors;

  const NamedTensor& Get(const std::string& name) const;
  bool Has(const std::string& name) const;
};

// "FCKP", u32 version=1, u32 round, u64 config_hash, u32 count, then per
// tensor: u16 name length + utf-8 name, u32 rank, u32 dims, float32 data.
// Little-endian throughout.
std::string EncodeCheckpoint(const Checkpoint& checkpoint);
Checkpoint DecodeCheckpoint(std::string_view bytes);
void SaveCheckpoint(const Checkpoint& checkpoint,
                    const std::filesystem::path& path);
Checkpoint LoadCheckpoint(const std::filesystem::path& path);

// Stores layer l as "<prefix>.<l>.weight" and "<prefix>.<l>.bias".
void AppendStack(Checkpoint& checkpoint, const std::string& prefix,
                 const MlpStack& stack);
// Rebuilds a stack saved by AppendStack. Hidden layers get `hidden`, the
// last layer `output`.
MlpStack ExtractStack(const Checkpoint& checkpoint, const std::string& prefix,
                      Activation hidden, Activation output);

// One JSON object per record with sorted keys, newline-terminated.
std::string RoundLogJsonl(std::span<const RoundLogRecord> logs);

}  // namespace fedembed

#endif  // FEDEMBED_FEDERATION_H_
