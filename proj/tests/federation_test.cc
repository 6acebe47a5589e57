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

#include "fedembed/federation.h"

#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedembed/downstream.h"
#include "fedembed/error.h"
#include "fedembed/eval.h"
#include "test_util.h"

namespace fedembed {
namespace {

using testing::SmallCganDims;
using testing::SmallCvaeDims;

SharedWeights ConstantWeights(int in, int out, double value) {
  Layer layer;
  layer.weight = Matrix::Constant(out, in, value);
  layer.bias = Vector::Constant(out, value);
  return {MlpStack({layer})};
}

bool SameWeights(const SharedWeights& a, const SharedWeights& b) {
  const auto& la = a.stack.layers();
  const auto& lb = b.stack.layers();
  if (la.size() != lb.size()) return false;
  for (size_t l = 0; l < la.size(); ++l) {
    if (!(la[l].weight == lb[l].weight) || !(la[l].bias == lb[l].bias)) {
      return false;
    }
  }
  return true;
}

double MaxAbsDiff(const SharedWeights& a, const SharedWeights& b) {
  double worst = 0.0;
  for (size_t l = 0; l < a.stack.layers().size(); ++l) {
    const Layer& x = a.stack.layers()[l];
    const Layer& y = b.stack.layers()[l];
    worst = std::max(worst, (x.weight - y.weight).cwiseAbs().maxCoeff());
    worst = std::max(worst, (x.bias - y.bias).cwiseAbs().maxCoeff());
  }
  return worst;
}

TEST(Aggregate, EqualSizesGiveMean) {
  ServerState server;
  const std::vector<SharedWeights> w = {ConstantWeights(2, 3, 0.0),
                                        ConstantWeights(2, 3, 2.0)};
  const std::vector<int> n = {5, 5};
  const SharedWeights out = AggregateShared(server, w, n);
  EXPECT_TRUE(out.stack.layers()[0].weight.isConstant(1.0, 0.0));
  EXPECT_TRUE(SameWeights(out, server.global));
}

TEST(Aggregate, WeightsFollowTrainingSizes) {
  ServerState server;
  const std::vector<SharedWeights> w = {ConstantWeights(2, 2, 0.0),
                                        ConstantWeights(2, 2, 4.0)};
  const std::vector<int> n = {1, 3};
  const SharedWeights out = AggregateShared(server, w, n);
  EXPECT_EQ(server.aggregation_weights, (std::vector<double>{0.25, 0.75}));
  EXPECT_EQ(out.stack.layers()[0].weight(1, 1), 3.0);
  EXPECT_EQ(out.stack.layers()[0].bias(0), 3.0);
}

TEST(Aggregate, WeightsSumToOne) {
  RngStream rng(1, {0, 0, Purpose::kData});
  for (int trial = 0; trial < 20; ++trial) {
    const int m = 1 + rng.UniformIndex(12);
    std::vector<int> n(m);
    std::vector<SharedWeights> w;
    for (int i = 0; i < m; ++i) {
      n[i] = 1 + rng.UniformIndex(1000);
      w.push_back(ConstantWeights(1, 1, rng.Normal()));
    }
    ServerState server;
    AggregateShared(server, w, n);
    double sum = 0.0;
    for (double v : server.aggregation_weights) sum += v;
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(Aggregate, SingleClientIsIdentity) {
  ServerState server;
  RngStream rng(2, {0, 0, Purpose::kInit});
  const std::vector<int> widths = {3, 4, 2};
  const std::vector<SharedWeights> w = {{MlpStack::Create(
      widths, Activation::kRelu, Activation::kIdentity, rng)}};
  const std::vector<int> n = {7};
  EXPECT_TRUE(SameWeights(AggregateShared(server, w, n), w[0]));
}

TEST(Aggregate, Errors) {
  ServerState server;
  const std::vector<SharedWeights> mismatched = {ConstantWeights(2, 2, 0.0),
                                                 ConstantWeights(3, 2, 0.0)};
  const std::vector<int> n = {1, 1};
  EXPECT_THROW(AggregateShared(server, mismatched, n), ShapeError);
  const std::vector<SharedWeights> ok = {ConstantWeights(2, 2, 0.0),
                                         ConstantWeights(2, 2, 0.0)};
  const std::vector<int> zero = {0, 1};
  EXPECT_THROW(AggregateShared(server, ok, zero), ValidationError);
  const std::vector<int> short_n = {1};
  EXPECT_THROW(AggregateShared(server, ok, short_n), Error);
}

// Small blob clients for training tests.
std::vector<ClientState> BlobClients(int clients, int per_class,
                                     const RoundConfig& cfg, std::uint64_t seed,
                                     bool iid = true) {
  RngStream data_rng(seed, {kServerStream, 0, Purpose::kData});
  const EmbeddingDataset all = SynthBlobs(3, 6, per_class, 6.0, data_rng);
  RngStream part_rng(seed, {kServerStream, 0, Purpose::kPartition});
  const PartitionPlan plan =
      iid ? PartitionIid(all, clients, part_rng)
          : PartitionDirichlet(all, clients, 0.3, part_rng, 10, 5);
  ModelSpec spec;
  spec.cvae = SmallCvaeDims(6, 3);
  spec.cgan = SmallCganDims(6, 3);
  std::vector<ClientState> out;
  const auto parts = plan.ClientIndices();
  for (int m = 0; m < clients; ++m) {
    const EmbeddingDataset local = all.Subset(parts[m]);
    RngStream split_rng(seed,
                        {static_cast<std::uint64_t>(m), 0, Purpose::kSplit});
    const SplitIndices idx =
        SplitTrainValTest(local.y, 3, SplitSpec{}, split_rng);
    out.push_back(MakeClient(m, local.Subset(idx.train), local.Subset(idx.val),
                             local.Subset(idx.test), spec, cfg, seed));
  }
  return out;
}

RoundConfig SmallConfig(ModelKind kind, int rounds, int epochs) {
  RoundConfig cfg;
  cfg.model_kind = kind;
  cfg.rounds = rounds;
  cfg.local_epochs = epochs;
  cfg.batch_size = 16;
  cfg.learning_rate = 0.05;
  return cfg;
}

TEST(LocalTrain, ZeroEpochsReturnsGlobal) {
  RoundConfig cfg = SmallConfig(ModelKind::kCvae, 1, 1);
  std::vector<ClientState> clients = BlobClients(1, 20, cfg, 3);
  const SharedWeights global = InitialSharedWeights(clients[0], 3);
  cfg.local_epochs = 0;
  const LocalUpdate update = LocalTrain(clients[0], global, cfg, 1);
  EXPECT_TRUE(SameWeights(update.weights, global));
  EXPECT_EQ(update.steps, 0);
}

TEST(LocalTrain, SharedPartExcludesPersonalPart) {
  for (ModelKind kind : {ModelKind::kCvae, ModelKind::kCgan}) {
    const RoundConfig cfg = SmallConfig(kind, 1, 1);
    std::vector<ClientState> clients = BlobClients(1, 20, cfg, 4);
    const SharedWeights global = InitialSharedWeights(clients[0], 4);
    const LocalUpdate update = LocalTrain(clients[0], global, cfg, 1);
    const ClientState& c = clients[0];
    if (kind == ModelKind::kCvae) {
      const auto& p = std::get<CvaeParams>(c.model);
      EXPECT_EQ(update.weights.stack.ParameterCount(),
                p.decoder.ParameterCount());
      EXPECT_EQ(update.weights.stack.input_dim(),
                p.dims.latent_dim + p.dims.num_classes);
    } else {
      const auto& p = std::get<CganParams>(c.model);
      EXPECT_EQ(update.weights.stack.ParameterCount(),
                p.generator.ParameterCount());
      EXPECT_EQ(update.weights.stack.input_dim(),
                p.dims.noise_dim + p.dims.num_classes);
    }
  }
}

TEST(LocalTrain, CvaeLossDecreases) {
  const RoundConfig cfg = SmallConfig(ModelKind::kCvae, 1, 5);
  std::vector<ClientState> clients = BlobClients(1, 500, cfg, 5);
  const SharedWeights global = InitialSharedWeights(clients[0], 5);
  const LocalUpdate update = LocalTrain(clients[0], global, cfg, 1);
  ASSERT_EQ(update.epoch_losses.size(), 5u);
  int increases = 0;
  for (size_t e = 1; e < update.epoch_losses.size(); ++e) {
    increases += update.epoch_losses[e] > update.epoch_losses[e - 1];
  }
  EXPECT_LE(increases, 0);  // 10% of four transitions rounds down
  EXPECT_LT(update.epoch_losses.back(), update.epoch_losses.front());
}

TEST(LocalTrain, DpSpendsAtMostTarget) {
  RoundConfig cfg = SmallConfig(ModelKind::kCvae, 3, 2);
  cfg.dp = DpConfig{};
  std::vector<ClientState> clients = BlobClients(2, 40, cfg, 6);
  const FederationResult result =
      RunFederatedTraining(clients, cfg, FederationOptions{6, 1, {}});
  for (const ClientState& c : clients) {
    ASSERT_TRUE(c.accountant.has_value());
    EXPECT_LE(c.accountant->Spent().epsilon, 1.0 + 1e-6);
    EXPECT_GT(c.accountant->steps(), 0);
    EXPECT_LE(c.accountant->steps(), PlannedSteps(c.train.size(), cfg));
  }
  for (const RoundLogRecord& r : result.logs) {
    ASSERT_TRUE(r.epsilon.has_value());
    EXPECT_LE(*r.epsilon, 1.0 + 1e-6);
  }
}

TEST(LocalTrain, BudgetExceededFailsOrStops) {
  RoundConfig cfg = SmallConfig(ModelKind::kCvae, 1, 1);
  cfg.dp = DpConfig{};
  std::vector<ClientState> clients = BlobClients(1, 40, cfg, 7);
  const SharedWeights global = InitialSharedWeights(clients[0], 7);
  cfg.local_epochs = 50;  // far beyond the calibrated plan
  ClientState copy = clients[0];
  EXPECT_THROW(LocalTrain(clients[0], global, cfg, 1), PrivacyBudgetError);
  cfg.budget_policy = BudgetPolicy::kWarn;
  const LocalUpdate update = LocalTrain(copy, global, cfg, 1);
  EXPECT_TRUE(update.budget_exhausted);
  EXPECT_LE(update.spent->epsilon, 1.0 + 1e-9);
}

TEST(LocalTrain, DeltaWarningIsNotFatal) {
  RoundConfig cfg = SmallConfig(ModelKind::kCvae, 1, 1);
  cfg.dp = DpConfig{};
  cfg.dp->delta = 0.5;
  EXPECT_NO_THROW(BlobClients(1, 10, cfg, 8));
}

TEST(Federation, SingleClientSingleRoundEqualsLocalTraining) {
  const RoundConfig cfg = SmallConfig(ModelKind::kCvae, 1, 2);
  std::vector<ClientState> clients = BlobClients(1, 30, cfg, 9);
  ClientState copy = clients[0];
  const SharedWeights init = InitialSharedWeights(copy, 9);
  const LocalUpdate update = LocalTrain(copy, init, cfg, 1);
  const FederationResult result =
      RunFederatedTraining(clients, cfg, FederationOptions{9, 1, {}});
  EXPECT_TRUE(SameWeights(result.server.global, update.weights));
}

TEST(Federation, WorkerCountDoesNotMatter) {
  for (ModelKind kind :
       {ModelKind::kCvae, ModelKind::kCgan, ModelKind::kLinear}) {
    RoundConfig cfg = SmallConfig(kind, 3, 1);
    cfg.dp = DpConfig{};
    if (kind == ModelKind::kLinear) cfg.dp.reset();
    std::vector<ClientState> a = BlobClients(4, 30, cfg, 10, false);
    std::vector<ClientState> b = a;
    const FederationResult ra =
        RunFederatedTraining(a, cfg, FederationOptions{10, 1, {}});
    const FederationResult rb =
        RunFederatedTraining(b, cfg, FederationOptions{10, 4, {}});
    EXPECT_TRUE(SameWeights(ra.server.global, rb.server.global));
    EXPECT_EQ(RoundLogJsonl(ra.logs), RoundLogJsonl(rb.logs));
  }
}

TEST(Federation, LogsOneRecordPerClientPerRound) {
  const RoundConfig cfg = SmallConfig(ModelKind::kCvae, 2, 1);
  std::vector<ClientState> clients = BlobClients(3, 20, cfg, 11);
  std::vector<int> seen;
  FederationOptions options{11, 2, [&](int round, const ServerState& s) {
                              seen.push_back(round);
                              EXPECT_EQ(s.round, round);
                            }};
  const FederationResult result = RunFederatedTraining(clients, cfg, options);
  ASSERT_EQ(result.logs.size(), 6u);
  EXPECT_EQ(seen, (std::vector<int>{1, 2}));
  EXPECT_EQ(result.logs[4].round, 2);
  EXPECT_EQ(result.logs[4].client_id, 1);
  EXPECT_FALSE(result.logs[4].epsilon.has_value());
}

TEST(Federation, CvaeFidelityImprovesOverRounds) {
  RoundConfig cfg = SmallConfig(ModelKind::kCvae, 50, 5);
  cfg.learning_rate = 1e-2;
  std::vector<ClientState> clients = BlobClients(5, 100, cfg, 12);
  std::vector<EmbeddingDataset> trains;
  for (const ClientState& c : clients) trains.push_back(c.train);
  const EmbeddingDataset real = Concatenate(trains);
  const int latent = std::get<CvaeParams>(clients[0].model).dims.latent_dim;
  std::vector<double> w;
  FederationOptions options{
      12, 1, [&](int round, const ServerState& s) {
        if (round != 1 && round != 50) return;
        RngStream rng(12, {kServerStream, 0, Purpose::kGenerate});
        const EmbeddingDataset synth =
            GenerateEmbeddings(s.global.stack, latent, real.size(),
                               ClassDistribution::Empirical(real.y, 3), rng);
        w.push_back(WassersteinAvg(real, synth));
      }};
  RunFederatedTraining(clients, cfg, options);
  ASSERT_EQ(w.size(), 2u);
  EXPECT_LT(w[1], w[0]);
}

TEST(Baseline, FedProxWithZeroMuIsFedAvg) {
  RoundConfig cfg = SmallConfig(ModelKind::kLinear, 1, 2);
  cfg.fedprox_mu = 0.0;
  std::vector<ClientState> a = BlobClients(1, 30, cfg, 13);
  std::vector<ClientState> b = a;
  const SharedWeights global = ConstantWeights(6, 3, 0.1);
  const SharedWeights avg =
      BaselineUpdate(BaselineKind::kFedAvg, a[0], global, cfg, 1);
  const SharedWeights prox =
      BaselineUpdate(BaselineKind::kFedProx, b[0], global, cfg, 1);
  EXPECT_TRUE(SameWeights(avg, prox));
  EXPECT_GT(MaxAbsDiff(avg, global), 1e-6);
}

TEST(Baseline, HugeMuPinsToGlobal) {
  RoundConfig cfg = SmallConfig(ModelKind::kLinear, 1, 5);
  cfg.fedprox_mu = 1e6;
  std::vector<ClientState> clients = BlobClients(1, 30, cfg, 14);
  const SharedWeights global = ConstantWeights(6, 3, 0.1);
  const SharedWeights prox =
      BaselineUpdate(BaselineKind::kFedProx, clients[0], global, cfg, 1);
  EXPECT_LT(MaxAbsDiff(prox, global), 1e-3);
}

TEST(Baseline, FedLambdaGlobalPartIsFedAvg) {
  const RoundConfig cfg = SmallConfig(ModelKind::kLinear, 1, 2);
  std::vector<ClientState> a = BlobClients(1, 30, cfg, 15);
  std::vector<ClientState> b = a;
  const SharedWeights global = ConstantWeights(6, 3, 0.0);
  EXPECT_TRUE(SameWeights(
      BaselineUpdate(BaselineKind::kFedAvg, a[0], global, cfg, 1),
      BaselineUpdate(BaselineKind::kFedLambda, b[0], global, cfg, 1)));
}

TEST(Baseline, FedAvgClassifierOnIidBlobs) {
  RoundConfig cfg = SmallConfig(ModelKind::kLinear, 20, 5);
  cfg.learning_rate = 1e-2;
  std::vector<ClientState> clients = BlobClients(5, 200, cfg, 16);
  const FederationResult result =
      RunFederatedTraining(clients, cfg, FederationOptions{16, 1, {}});
  const LinearParams global{result.server.global.stack};
  std::vector<EmbeddingDataset> tests;
  for (const ClientState& c : clients) tests.push_back(c.test);
  const EmbeddingDataset test = Concatenate(tests);
  const InterpolatedClassifier c{global, global, 0.0};
  EXPECT_GE(Accuracy(Predict(c, test.x), test.y), 0.99);
}

TEST(Baseline, RejectsGenerativeClient) {
  const RoundConfig cfg = SmallConfig(ModelKind::kCvae, 1, 1);
  std::vector<ClientState> clients = BlobClients(1, 10, cfg, 17);
  EXPECT_THROW(BaselineUpdate(BaselineKind::kFedAvg, clients[0],
                              ConstantWeights(6, 3, 0.0), cfg, 1),
               ValidationError);
}

TEST(RoundConfig, Validate) {
  RoundConfig cfg;
  EXPECT_NO_THROW(cfg.Validate());
  cfg.rounds = 0;
  EXPECT_THROW(cfg.Validate(), ValidationError);
  cfg.rounds = 1;
  cfg.local_epochs = 0;
  EXPECT_THROW(cfg.Validate(), ValidationError);
  cfg.local_epochs = 1;
  cfg.fedprox_mu = -1.0;
  EXPECT_THROW(cfg.Validate(), ValidationError);
}

TEST(ParallelFor, CoversEveryIndexAndRethrows) {
  std::vector<std::atomic<int>> hits(37);
  ParallelFor(37, 4, [&](int i) { ++hits[i]; });
  for (const auto& h : hits) EXPECT_EQ(h.load(), 1);
  EXPECT_THROW(ParallelFor(10, 3,
                           [](int i) {
                             if (i == 6) throw std::runtime_error("boom");
                           }),
               std::runtime_error);
}

Checkpoint SampleCheckpoint() {
  Checkpoint ck;
  ck.round = 50;
  ck.config_hash = 0x0123456789ABCDEFull;
  RngStream rng(18, {0, 0, Purpose::kInit});
  const std::vector<int> widths = {4, 5, 3};
  AppendStack(
      ck, "global",
      MlpStack::Create(widths, Activation::kRelu, Activation::kIdentity, rng));
  ck.tensors.push_back({"lambda", {1}, {0.7f}});
  return ck;
}

TEST(Checkpoint, RoundTrip) {
  const Checkpoint ck = SampleCheckpoint();
  const std::string bytes = EncodeCheckpoint(ck);
  EXPECT_EQ(bytes.substr(0, 4), "FCKP");
  const Checkpoint back = DecodeCheckpoint(bytes);
  EXPECT_EQ(back.round, 50u);
  EXPECT_EQ(back.config_hash, ck.config_hash);
  ASSERT_EQ(back.tensors.size(), 5u);
  EXPECT_EQ(back.Get("global.0.weight").shape,
            (std::vector<std::uint32_t>{5, 4}));
  EXPECT_EQ(back.Get("lambda").data, std::vector<float>{0.7f});
  EXPECT_TRUE(back.Has("global.1.bias"));
  EXPECT_FALSE(back.Has("global.2.bias"));
  EXPECT_THROW(back.Get("missing"), Error);
  EXPECT_EQ(EncodeCheckpoint(back), bytes);
}

TEST(Checkpoint, StackSurvivesAtFloatPrecision) {
  const Checkpoint ck = DecodeCheckpoint(EncodeCheckpoint(SampleCheckpoint()));
  const MlpStack stack =
      ExtractStack(ck, "global", Activation::kRelu, Activation::kIdentity);
  ASSERT_EQ(stack.layers().size(), 2u);
  EXPECT_EQ(stack.layers()[0].activation, Activation::kRelu);
  EXPECT_EQ(stack.layers()[1].activation, Activation::kIdentity);
  const std::vector<float>& raw = ck.Get("global.0.weight").data;
  EXPECT_EQ(stack.layers()[0].weight(1, 2),
            static_cast<double>(raw[1 * 4 + 2]));
  EXPECT_THROW(
      ExtractStack(ck, "nope", Activation::kRelu, Activation::kIdentity),
      Error);
}

TEST(Checkpoint, CorruptInput) {
  const std::string bytes = EncodeCheckpoint(SampleCheckpoint());
  std::string bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(DecodeCheckpoint(bad), FormatError);
  EXPECT_THROW(DecodeCheckpoint(bytes.substr(0, bytes.size() - 3)),
               FormatError);
  EXPECT_THROW(DecodeCheckpoint(bytes + "zz"), FormatError);
}

TEST(Checkpoint, Files) {
  const auto path =
      std::filesystem::temp_directory_path() / "fedembed_ckpt_test.fckp";
  SaveCheckpoint(SampleCheckpoint(), path);
  EXPECT_EQ(LoadCheckpoint(path).round, 50u);
  std::filesystem::remove(path);
  EXPECT_THROW(LoadCheckpoint(path), Error);
}

TEST(RoundLog, JsonLines) {
  const std::vector<RoundLogRecord> logs = {{1, 0, 0.5, 0.25},
                                            {1, 1, 2.0, std::nullopt}};
  EXPECT_EQ(RoundLogJsonl(logs),
            "{\"client_id\":0,\"epsilon\":0.25,\"loss\":0.5,\"round\":1}\n"
            "{\"client_id\":1,\"epsilon\":null,\"loss\":2.0,\"round\":1}\n");
}

}  // namespace
}  // namespace fedembed
