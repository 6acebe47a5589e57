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

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstring>
#include <exception>
#include <fstream>
#include <sstream>
#include <thread>
#include <utility>

#include "fedembed/error.h"
#include "fedembed/log.h"
#include "fedembed/optim.h"
#include "json.hpp"

namespace fedembed {
namespace {

std::vector<int> PoissonBatch(int n, double q, RngStream& rng) {
  std::vector<int> batch;
  for (int i = 0; i < n; ++i) {
    if (rng.Uniform() < q) batch.push_back(i);
  }
  return batch;
}

double SampleRate(int n_train, int batch_size) {
  return std::min(1.0, static_cast<double>(batch_size) / n_train);
}

// Gradient for the step: plain mean, or clipped and noised under DP.
Gradients StepGradient(PerSampleGrads grads, const RoundConfig& cfg,
                       const ClientState& client, RngStream& noise_rng) {
  if (!cfg.dp) {
    Gradients g = grads.Sum();
    Scale(g, 1.0 / grads.num_samples());
    return g;
  }
  return NoisyAggregate(ClipPerSample(std::move(grads), cfg.dp->clip_norm),
                        client.accountant->noise_multiplier(), noise_rng);
}

struct StepStreams {
  RngStream batch;
  RngStream noise;
  RngStream latent;
};

double CvaeStep(CvaeParams& model, const EmbeddingDataset& batch,
                const RoundConfig& cfg, const ClientState& client,
                StepStreams& streams) {
  const Matrix noise =
      GaussianSample(streams.latent, batch.size(), model.dims.latent_dim);
  CvaeGradients out =
      CvaePerSampleGrads(model, batch.x, batch.y, noise, cfg.kl_weight);
  const Gradients g =
      StepGradient(std::move(out.grads), cfg, client, streams.noise);
  SgdStep(model.Params(), g, cfg.learning_rate);
  return out.loss.loss;
}

double CganStep(CganParams& model, const EmbeddingDataset& batch,
                int generator_batch, const RoundConfig& cfg,
                const ClientState& client, StepStreams& streams) {
  const CganNoise noise =
      DrawCganNoise(model.dims, batch.size(), generator_batch, streams.latent);
  DiscriminatorGradients disc = CganDiscriminatorGrads(
      model, batch.x, batch.y, noise.fake_noise, noise.fake_labels);
  const Gradients g =
      StepGradient(std::move(disc.grads), cfg, client, streams.noise);
  SgdStep(model.discriminator.Params(), g, cfg.learning_rate);

  // The generator only sees the privatized discriminator and public noise.
  GeneratorGradients gen =
      CganGeneratorGrads(model, noise.generator_noise, noise.generator_labels);
  Gradients gg = gen.grads.Sum();
  Scale(gg, 1.0 / gen.grads.num_samples());
  SgdStep(model.generator.Params(), gg, cfg.learning_rate);
  return disc.per_sample_loss.mean();
}

double LinearStep(LinearParams& model, const EmbeddingDataset& batch,
                  const MlpStack& global, const RoundConfig& cfg,
                  const ClientState& client, StepStreams& streams) {
  CrossEntropyGradients ce =
      CrossEntropyPerSampleGrads(model, batch.x, batch.y);
  const Gradients g =
      StepGradient(std::move(ce.grads), cfg, client, streams.noise);
  const double mu =
      cfg.baseline == BaselineKind::kFedProx ? cfg.fedprox_mu : 0.0;
  if (mu == 0.0) {
    SgdStep(model.stack.Params(), g, cfg.learning_rate);
  } else {
    // argmin_w <g, w> + ||w - w_t||^2 / (2 lr) + (mu / 2) ||w - w_global||^2
    const double lr = cfg.learning_rate;
    Layer& layer = model.stack.mutable_layers()[0];
    const Layer& anchor = global.layers()[0];
    layer.weight = (layer.weight - lr * g[0].weight + lr * mu * anchor.weight) /
                   (1.0 + lr * mu);
    layer.bias =
        (layer.bias - lr * g[0].bias + lr * mu * anchor.bias) / (1.0 + lr * mu);
  }
  return ce.per_sample_loss.mean();
}

void CheckSameShape(const MlpStack& a, const MlpStack& b) {
  if (a.layers().size() != b.layers().size()) {
    throw ShapeError("shared weights differ in layer count");
  }
  for (size_t l = 0; l < a.layers().size(); ++l) {
    if (a.layers()[l].in() != b.layers()[l].in() ||
        a.layers()[l].out() != b.layers()[l].out()) {
      throw ShapeError("shared weights differ in shape at layer " +
                       std::to_string(l));
    }
  }
}

void PutU32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}
  std::uint64_t offset() const { return pos_; }
  bool at_end() const { return pos_ == bytes_.size(); }
  std::string_view Take(size_t n) {
    if (bytes_.size() - pos_ < n) {
      throw FormatError("truncated checkpoint", pos_);
    }
    std::string_view out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  std::uint64_t Uint(int width) {
    const std::string_view b = Take(width);
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[i]))
           << (8 * i);
    }
    return v;
  }

 private:
  std::string_view bytes_;
  size_t pos_ = 0;
};

}  // namespace

void RoundConfig::Validate() const {
  if (rounds < 1) throw ValidationError("rounds must be >= 1");
  if (local_epochs < 1) throw ValidationError("local epochs must be >= 1");
  if (batch_size < 1) throw ValidationError("batch size must be >= 1");
  if (!(learning_rate > 0.0)) {
    throw ValidationError("learning rate must be > 0");
  }
  if (!(fedprox_mu >= 0.0)) throw ValidationError("FedProx mu must be >= 0");
}

const MlpStack& ClientState::shared() const {
  return std::visit(
      [](const auto& m) -> const MlpStack& {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, CvaeParams>) return m.decoder;
        if constexpr (std::is_same_v<T, CganParams>) return m.generator;
        if constexpr (std::is_same_v<T, LinearParams>) return m.stack;
      },
      model);
}

MlpStack& ClientState::mutable_shared() {
  return const_cast<MlpStack&>(std::as_const(*this).shared());
}

std::int64_t PlannedSteps(int n_train, const RoundConfig& cfg) {
  const std::int64_t per_epoch =
      (static_cast<std::int64_t>(n_train) + cfg.batch_size - 1) /
      cfg.batch_size;
  return static_cast<std::int64_t>(cfg.rounds) * cfg.local_epochs * per_epoch;
}

ClientState MakeClient(int client_id, EmbeddingDataset train,
                       EmbeddingDataset val, EmbeddingDataset test,
                       const ModelSpec& spec, const RoundConfig& cfg,
                       std::uint64_t seed) {
  if (train.size() < 1) {
    throw ValidationError("client " + std::to_string(client_id) +
                          " has no training samples");
  }
  ClientState client;
  client.client_id = client_id;
  client.seed = seed;
  RngStream init(seed,
                 {static_cast<std::uint64_t>(client_id), 0, Purpose::kInit});
  switch (cfg.model_kind) {
    case ModelKind::kCvae:
      client.model = CvaeParams::Create(spec.cvae, init);
      break;
    case ModelKind::kCgan:
      client.model = CganParams::Create(spec.cgan, init);
      break;
    case ModelKind::kLinear:
      client.model =
          LinearParams::Zeros(spec.cvae.input_dim, spec.cvae.num_classes);
      break;
  }
  if (cfg.dp) {
    const int n = train.size();
    if (cfg.dp->delta >= 1.0 / n) {
      Warn("delta=" + std::to_string(cfg.dp->delta) +
           " is not below 1/n=" + std::to_string(1.0 / n) + " for client " +
           std::to_string(client_id) + " (n_train=" + std::to_string(n) +
           "); the privacy guarantee is weak");
    }
    const double q = SampleRate(n, cfg.batch_size);
    const std::int64_t steps = PlannedSteps(n, cfg);
    const double sigma = CalibrateNoise(cfg.dp->epsilon_target, cfg.dp->delta,
                                        q, steps, DefaultOrders());
    client.accountant.emplace(q, sigma, cfg.dp->delta);
  }
  client.train = std::move(train);
  client.val = std::move(val);
  client.test = std::move(test);
  return client;
}

SharedWeights InitialSharedWeights(const ClientState& prototype,
                                   std::uint64_t seed) {
  RngStream init(seed, {kServerStream, 0, Purpose::kInit});
  return std::visit(
      [&init](const auto& m) -> SharedWeights {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, CvaeParams>) {
          return {CvaeParams::CreateDecoder(m.dims, init)};
        } else if constexpr (std::is_same_v<T, CganParams>) {
          return {CganParams::CreateGenerator(m.dims, init)};
        } else {
          return {LinearParams::Zeros(m.input_dim(), m.num_classes()).stack};
        }
      },
      prototype.model);
}

LocalUpdate LocalTrain(ClientState& client, const SharedWeights& global,
                       const RoundConfig& cfg, int round) {
  CheckSameShape(client.shared(), global.stack);
  client.mutable_shared() = global.stack;
  if (cfg.dp && !client.accountant) {
    throw ValidationError("DP training requested but client " +
                          std::to_string(client.client_id) +
                          " has no accountant");
  }

  const auto id = static_cast<std::uint64_t>(client.client_id);
  const auto r = static_cast<std::uint64_t>(round);
  StepStreams streams{RngStream(client.seed, {id, r, Purpose::kBatch}),
                      RngStream(client.seed, {id, r, Purpose::kDpNoise}),
                      RngStream(client.seed, {id, r, Purpose::kLatent})};

  const int n = client.train.size();
  const double q = SampleRate(n, cfg.batch_size);
  const int steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  const int generator_batch = std::min(cfg.batch_size, n);

  LocalUpdate update;
  double loss_total = 0.0;
  for (int epoch = 0; epoch < cfg.local_epochs && !update.budget_exhausted;
       ++epoch) {
    double epoch_total = 0.0;
    int epoch_steps = 0;
    for (int s = 0; s < steps_per_epoch; ++s) {
      const std::vector<int> indices = PoissonBatch(n, q, streams.batch);
      if (indices.empty()) continue;
      if (cfg.dp &&
          client.accountant->EpsilonAfter(1) > cfg.dp->epsilon_target + 1e-9) {
        const PrivacySpent spent = client.accountant->Spent();
        const std::string msg =
            "client " + std::to_string(client.client_id) +
            " would exceed epsilon=" + std::to_string(cfg.dp->epsilon_target) +
            " (spent " + std::to_string(spent.epsilon) + " after " +
            std::to_string(spent.steps_taken) + " steps)";
        if (cfg.budget_policy == BudgetPolicy::kFail) {
          throw PrivacyBudgetError(msg);
        }
        Warn(msg + "; stopping local training");
        update.budget_exhausted = true;
        break;
      }
      const EmbeddingDataset batch = client.train.Subset(indices);
      double loss = 0.0;
      if (auto* cvae = std::get_if<CvaeParams>(&client.model)) {
        loss = CvaeStep(*cvae, batch, cfg, client, streams);
      } else if (auto* cgan = std::get_if<CganParams>(&client.model)) {
        loss = CganStep(*cgan, batch, generator_batch, cfg, client, streams);
      } else {
        loss = LinearStep(std::get<LinearParams>(client.model), batch,
                          global.stack, cfg, client, streams);
      }
      if (cfg.dp) client.accountant->Step();
      ++update.steps;
      ++epoch_steps;
      epoch_total += loss;
      loss_total += loss;
    }
    update.epoch_losses.push_back(epoch_steps ? epoch_total / epoch_steps
                                              : 0.0);
  }
  update.mean_loss = update.steps ? loss_total / update.steps : 0.0;
  if (client.accountant) update.spent = client.accountant->Spent();
  update.weights = {client.shared()};
  return update;
}

SharedWeights AggregateShared(ServerState& server,
                              std::span<const SharedWeights> client_weights,
                              std::span<const int> n_train) {
  if (client_weights.empty()) throw ValidationError("nothing to aggregate");
  if (client_weights.size() != n_train.size()) {
    throw ShapeError("one training-set size per client required");
  }
  double total = 0.0;
  for (int n : n_train) {
    if (n < 1) throw ValidationError("client training-set size must be >= 1");
    total += n;
  }
  server.aggregation_weights.clear();
  for (int n : n_train) server.aggregation_weights.push_back(n / total);

  SharedWeights out{client_weights.front().stack};
  for (const SharedWeights& w : client_weights) {
    CheckSameShape(out.stack, w.stack);
  }
  for (size_t l = 0; l < out.stack.layers().size(); ++l) {
    Layer& layer = out.stack.mutable_layers()[l];
    layer.weight.setZero();
    layer.bias.setZero();
    for (size_t m = 0; m < client_weights.size(); ++m) {
      const Layer& src = client_weights[m].stack.layers()[l];
      layer.weight += server.aggregation_weights[m] * src.weight;
      layer.bias += server.aggregation_weights[m] * src.bias;
    }
  }
  server.global = out;
  return out;
}

void ParallelFor(int count, int workers, const std::function<void(int)>& fn) {
  workers = std::max(1, std::min(workers, count));
  std::vector<std::exception_ptr> errors(count);
  if (workers == 1) {
    for (int i = 0; i < count; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::atomic<int> next{0};
    std::vector<std::jthread> threads;
    for (int w = 0; w < workers; ++w) {
      threads.emplace_back([&] {
        for (int i = next++; i < count; i = next++) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
  }
  for (const std::exception_ptr& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

FederationResult RunFederatedTraining(std::vector<ClientState>& clients,
                                      const RoundConfig& cfg,
                                      const FederationOptions& options) {
  if (clients.empty()) throw ValidationError("federation needs >= 1 client");
  cfg.Validate();
  FederationResult result;
  result.server.global = InitialSharedWeights(clients.front(), options.seed);
  std::vector<int> n_train;
  for (const ClientState& c : clients) n_train.push_back(c.train.size());

  const int m = static_cast<int>(clients.size());
  std::vector<LocalUpdate> updates(m);
  for (int round = 1; round <= cfg.rounds; ++round) {
    const SharedWeights broadcast = result.server.global;
    ParallelFor(m, options.workers, [&](int i) {
      updates[i] = LocalTrain(clients[i], broadcast, cfg, round);
    });
    std::vector<SharedWeights> payloads;
    payloads.reserve(m);
    for (int i = 0; i < m; ++i) {
      payloads.push_back(updates[i].weights);
      RoundLogRecord record;
      record.round = round;
      record.client_id = clients[i].client_id;
      record.loss = updates[i].mean_loss;
      if (updates[i].spent) record.epsilon = updates[i].spent->epsilon;
      result.logs.push_back(record);
    }
    AggregateShared(result.server, payloads, n_train);
    result.server.round = round;
    if (options.on_round) options.on_round(round, result.server);
  }
  return result;
}

SharedWeights BaselineUpdate(BaselineKind kind, ClientState& client,
                             const SharedWeights& global,
                             const RoundConfig& cfg, int round) {
  if (!std::holds_alternative<LinearParams>(client.model)) {
    throw ValidationError("baseline updates need a linear classifier client");
  }
  RoundConfig local = cfg;
  local.model_kind = ModelKind::kLinear;
  local.baseline = kind;
  return LocalTrain(client, global, local, round).weights;
}

const NamedTensor& Checkpoint::Get(const std::string& name) const {
  for (const NamedTensor& t : tensors) {
    if (t.name == name) return t;
  }
  throw FormatError("checkpoint has no tensor '" + name + "'", 0);
}

bool Checkpoint::Has(const std::string& name) const {
  return std::any_of(tensors.begin(), tensors.end(),
                     [&](const NamedTensor& t) { return t.name == name; });
}

std::string EncodeCheckpoint(const Checkpoint& checkpoint) {
  std::string out = "FCKP";
  PutU32(out, 1);
  PutU32(out, checkpoint.round);
  PutU32(out, static_cast<std::uint32_t>(checkpoint.config_hash));
  PutU32(out, static_cast<std::uint32_t>(checkpoint.config_hash >> 32));
  PutU32(out, static_cast<std::uint32_t>(checkpoint.tensors.size()));
  for (const NamedTensor& t : checkpoint.tensors) {
    if (t.name.size() > 0xFFFF) throw ValidationError("tensor name too long");
    std::uint64_t elements = 1;
    for (std::uint32_t dim : t.shape) elements *= dim;
    if (elements != t.data.size()) {
      throw ShapeError("tensor '" + t.name + "' shape does not match data");
    }
    out.push_back(static_cast<char>(t.name.size() & 0xFF));
    out.push_back(static_cast<char>(t.name.size() >> 8));
    out += t.name;
    PutU32(out, static_cast<std::uint32_t>(t.shape.size()));
    for (std::uint32_t dim : t.shape) PutU32(out, dim);
    for (float v : t.data) PutU32(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

Checkpoint DecodeCheckpoint(std::string_view bytes) {
  if (bytes.size() < 4 || bytes.substr(0, 4) != "FCKP") {
    throw FormatError("bad checkpoint magic", 0);
  }
  Reader reader(bytes);
  reader.Take(4);
  const std::uint64_t version_at = reader.offset();
  if (reader.Uint(4) != 1) {
    throw FormatError("unsupported checkpoint version", version_at);
  }
  Checkpoint ckpt;
  ckpt.round = static_cast<std::uint32_t>(reader.Uint(4));
  ckpt.config_hash = reader.Uint(8);
  const std::uint64_t count = reader.Uint(4);
  for (std::uint64_t k = 0; k < count; ++k) {
    NamedTensor t;
    const auto name_len = static_cast<size_t>(reader.Uint(2));
    t.name = std::string(reader.Take(name_len));
    const std::uint64_t rank = reader.Uint(4);
    std::uint64_t elements = 1;
    for (std::uint64_t r = 0; r < rank; ++r) {
      t.shape.push_back(static_cast<std::uint32_t>(reader.Uint(4)));
      elements *= t.shape.back();
    }
    if ((bytes.size() - reader.offset()) / 4 < elements) {
      throw FormatError("truncated tensor '" + t.name + "'", reader.offset());
    }
    t.data.resize(elements);
    for (float& v : t.data) {
      v = std::bit_cast<float>(static_cast<std::uint32_t>(reader.Uint(4)));
    }
    ckpt.tensors.push_back(std::move(t));
  }
  if (!reader.at_end()) {
    throw FormatError("trailing bytes after checkpoint", reader.offset());
  }
  return ckpt;
}

void SaveCheckpoint(const Checkpoint& checkpoint,
                    const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  const std::string bytes = EncodeCheckpoint(checkpoint);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint LoadCheckpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return DecodeCheckpoint(buffer.str());
}

void AppendStack(Checkpoint& checkpoint, const std::string& prefix,
                 const MlpStack& stack) {
  for (size_t l = 0; l < stack.layers().size(); ++l) {
    const Layer& layer = stack.layers()[l];
    const std::string base = prefix + "." + std::to_string(l);
    NamedTensor w{base + ".weight",
                  {static_cast<std::uint32_t>(layer.out()),
                   static_cast<std::uint32_t>(layer.in())},
                  {}};
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) {
      w.data.push_back(static_cast<float>(layer.weight.data()[i]));
    }
    NamedTensor b{
        base + ".bias", {static_cast<std::uint32_t>(layer.out())}, {}};
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) {
      b.data.push_back(static_cast<float>(layer.bias[i]));
    }
    checkpoint.tensors.push_back(std::move(w));
    checkpoint.tensors.push_back(std::move(b));
  }
}

MlpStack ExtractStack(const Checkpoint& checkpoint, const std::string& prefix,
                      Activation hidden, Activation output) {
  std::vector<Layer> layers;
  for (int l = 0;; ++l) {
    const std::string base = prefix + "." + std::to_string(l);
    if (!checkpoint.Has(base + ".weight")) break;
    const NamedTensor& w = checkpoint.Get(base + ".weight");
    const NamedTensor& b = checkpoint.Get(base + ".bias");
    if (w.shape.size() != 2 || b.shape.size() != 1 ||
        b.shape[0] != w.shape[0]) {
      throw FormatError("tensor '" + base + "' has an unexpected shape", 0);
    }
    Layer layer;
    layer.weight.resize(w.shape[0], w.shape[1]);
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) {
      layer.weight.data()[i] = w.data[i];
    }
    layer.bias.resize(b.shape[0]);
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) {
      layer.bias[i] = b.data[i];
    }
    layers.push_back(std::move(layer));
  }
  if (layers.empty()) {
    throw FormatError("checkpoint has no layers under '" + prefix + "'", 0);
  }
  for (size_t l = 0; l < layers.size(); ++l) {
    layers[l].activation = l + 1 == layers.size() ? output : hidden;
  }
  return MlpStack(std::move(layers));
}

std::string RoundLogJsonl(std::span<const RoundLogRecord> logs) {
  std::string out;
  for (const RoundLogRecord& r : logs) {
    nlohmann::json j;
    j["round"] = r.round;
    j["client_id"] = r.client_id;
    j["loss"] = r.loss;
    j["epsilon"] = r.epsilon ? nlohmann::json(*r.epsilon) : nlohmann::json();
    out += j.dump();
    out += "\n";
  }
  return out;
}

}  // namespace fedembed
