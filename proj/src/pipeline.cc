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
#include "fedembed/pipeline.h"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "fedembed/error.h"
#include "fedembed/federation.h"
#include "fedembed/models.h"
#include "fedembed/rng.h"
#include "json.hpp"

namespace fedembed {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr int kFembFormatVersion = 1;
constexpr int kCheckpointFormatVersion = 1;
constexpr char kGlobalPrefix[] = "global";

std::string ReadFile(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("missing artifact " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void WriteFile(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

void WriteJson(const fs::path& path, const json& value) {
  WriteFile(path, value.dump(2) + "\n");
}

json ReadJson(const fs::path& path) {
  try {
    return json::parse(ReadFile(path));
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what(), e.byte);
  }
}

fs::path ClientFile(const fs::path& dir, int m, const std::string& part) {
  return dir / "clients" /
         ("client_" + std::to_string(m) + "_" + part + ".femb");
}

fs::path SyntheticFile(const fs::path& dir, int m) {
  return dir / "synthetic" / ("client_" + std::to_string(m) + ".femb");
}

fs::path ClassifierFile(const fs::path& dir, int m) {
  return dir / "classifiers" / ("client_" + std::to_string(m) + ".fckp");
}

struct ClientSplits {
  EmbeddingDataset train;
  EmbeddingDataset val;
  EmbeddingDataset test;
};

int ClientCount(const fs::path& dir) {
  const json partition = ReadJson(dir / "partition.json");
  return static_cast<int>(partition.at("clients").size());
}

std::vector<ClientSplits> LoadClients(const fs::path& dir) {
  std::vector<ClientSplits> clients;
  const int m_count = ClientCount(dir);
  for (int m = 0; m < m_count; ++m) {
    clients.push_back({LoadDataset(ClientFile(dir, m, "train")),
                       LoadDataset(ClientFile(dir, m, "val")),
                       LoadDataset(ClientFile(dir, m, "test"))});
  }
  return clients;
}

ModelSpec MakeModelSpec(const ExperimentConfig& config, int dim, int classes) {
  ModelSpec spec;
  spec.cvae = config.cvae;
  spec.cvae.input_dim = dim;
  spec.cvae.num_classes = classes;
  spec.cgan = config.cgan;
  spec.cgan.input_dim = dim;
  spec.cgan.num_classes = classes;
  return spec;
}

int LatentDim(const ExperimentConfig& config) {
  return config.method == Method::kCvae ? config.cvae.latent_dim
                                        : config.cgan.noise_dim;
}

std::uint64_t DownstreamSeed(std::uint64_t seed, int m) {
  return DeriveStreamSeed(
      seed, {static_cast<std::uint64_t>(m), 0, Purpose::kDownstream});
}

// Shortest decimal that round-trips the float, read back as a double.
double FloatToDecimalDouble(float value) {
  char buffer[32];
  const auto result = std::to_chars(buffer, buffer + sizeof(buffer), value);
  double out = 0.0;
  std::from_chars(buffer, result.ptr, out);
  return out;
}

template <typename Fn>
void RunStage(const ExperimentConfig& config, std::uint64_t seed,
              const std::string& stage, Fn&& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    json marker = {{"stage", stage}, {"seed", seed}, {"error", e.what()}};
    try {
      WriteJson(fs::path(config.output_dir) / "FAILED", marker);
    } catch (const std::exception&) {
      // The original error matters more than the marker.
    }
    throw;
  }
}

std::int64_t ModelParamCount(const ExperimentConfig& config, int dim,
                             int classes) {
  const ModelSpec spec = MakeModelSpec(config, dim, classes);
  RngStream rng(0, {kServerStream, 0, Purpose::kInit});
  switch (config.method) {
    case Method::kCvae:
      return ParamCount(CvaeParams::Create(spec.cvae, rng));
    case Method::kCgan:
      return ParamCount(CganParams::Create(spec.cgan, rng));
    default:
      return ParamCount(LinearParams::Zeros(dim, classes));
  }
}

json ReportJson(const MetricReport& report) {
  return {{"mean", report.mean},
          {"std", report.stddev},
          {"per_seed_means", report.per_seed_means},
          {"per_client", report.per_client},
          {"seeds", report.seeds}};
}

MetricReport ReportFromJson(const json& j) {
  MetricReport r;
  r.mean = j.at("mean").get<double>();
  r.stddev = j.at("std").get<double>();
  r.per_seed_means = j.at("per_seed_means").get<std::vector<double>>();
  r.per_client = j.at("per_client").get<std::vector<std::vector<double>>>();
  r.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  return r;
}

std::string FormatCell(double mean, double stddev) {
  char buffer[64];
  std::snprintf(buffer, sizeof(buffer), "%.4f ± %.4f", mean, stddev);
  return buffer;
}

std::string FormatNumber(double value) {
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "%.6f", value);
  return buffer;
}

bool IsRunDir(const fs::path& dir) {
  return fs::is_regular_file(dir / "manifest.json") &&
         fs::is_regular_file(dir / "metrics.json");
}

}  // namespace

fs::path SeedDir(const ExperimentConfig& config, std::uint64_t seed) {
  return fs::path(config.output_dir) / ("seed_" + std::to_string(seed));
}

EmbeddingDataset LoadSourceDataset(const ExperimentConfig& config) {
  if (config.dataset.blobs) {
    const BlobConfig& b = *config.dataset.blobs;
    RngStream rng(b.seed, {kServerStream, 0, Purpose::kData});
    return SynthBlobs(b.classes, b.dim, b.per_class, b.separation, rng);
  }
  if (!fs::is_regular_file(config.dataset.path)) {
    throw ConfigError("dataset.path", "file not found: " + config.dataset.path);
  }
  return LoadDataset(config.dataset.path);
}

void StagePartition(const ExperimentConfig& config, std::uint64_t seed) {
  const fs::path dir = SeedDir(config, seed);
  const EmbeddingDataset source = LoadSourceDataset(config);
  RngStream rng(seed, {kServerStream, 0, Purpose::kPartition});
  const PartitionPlan plan =
      config.partition.kind == PartitionKind::kIid
          ? PartitionIid(source, config.partition.clients, rng)
          : PartitionDirichlet(source, config.partition.clients,
                               config.partition.alpha, rng, 10,
                               config.partition.min_client_size);
  const std::vector<std::vector<int>> indices = plan.ClientIndices();
  json clients = json::array();
  for (int m = 0; m < plan.client_count; ++m) {
    const EmbeddingDataset data = source.Subset(indices[m]);
    RngStream split_rng(seed,
                        {static_cast<std::uint64_t>(m), 0, Purpose::kSplit});
    const SplitIndices split =
        SplitTrainValTest(data.y, data.num_classes(), config.split, split_rng);
    SaveDataset(data.Subset(split.train), ClientFile(dir, m, "train"));
    SaveDataset(data.Subset(split.val), ClientFile(dir, m, "val"));
    SaveDataset(data.Subset(split.test), ClientFile(dir, m, "test"));
    clients.push_back({{"client_id", m},
                       {"n", data.size()},
                       {"n_train", split.train.size()},
                       {"n_val", split.val.size()},
                       {"n_test", split.test.size()},
                       {"class_counts", data.ClassCounts()}});
  }
  WriteJson(dir / "partition.json", {{"seed", seed},
                                     {"dataset_id", DatasetId(config)},
                                     {"num_classes", source.num_classes()},
                                     {"dim", source.dim()},
                                     {"clients", clients}});
}

void StageTrain(const ExperimentConfig& config, std::uint64_t seed) {
  const fs::path dir = SeedDir(config, seed);
  std::vector<ClientSplits> splits = LoadClients(dir);
  const RoundConfig cfg = MakeRoundConfig(config);
  const EmbeddingDataset& first = splits.front().train;
  const ModelSpec spec =
      MakeModelSpec(config, first.dim(), first.num_classes());
  std::vector<ClientState> clients;
  for (size_t m = 0; m < splits.size(); ++m) {
    clients.push_back(MakeClient(
        static_cast<int>(m), std::move(splits[m].train),
        std::move(splits[m].val), std::move(splits[m].test), spec, cfg, seed));
  }
  FederationOptions options;
  options.seed = seed;
  options.workers = config.workers;
  const FederationResult result = RunFederatedTraining(clients, cfg, options);

  Checkpoint ckpt;
  ckpt.round = static_cast<std::uint32_t>(result.server.round);
  ckpt.config_hash = ConfigHash(config);
  AppendStack(ckpt, kGlobalPrefix, result.server.global.stack);
  SaveCheckpoint(ckpt, dir / "global.fckp");
  WriteFile(dir / "rounds.jsonl", RoundLogJsonl(result.logs));

  json privacy = {{"enabled", cfg.dp.has_value()}};
  json per_client = json::array();
  for (const ClientState& c : clients) {
    if (!c.accountant) continue;
    const PrivacySpent spent = c.accountant->Spent();
    per_client.push_back(
        {{"client_id", c.client_id},
         {"noise_multiplier", c.accountant->noise_multiplier()},
         {"sample_rate", c.accountant->sample_rate()},
         {"steps", spent.steps_taken},
         {"epsilon", spent.epsilon},
         {"delta", spent.delta},
         {"best_order", spent.best_order}});
  }
  privacy["clients"] = per_client;
  if (cfg.dp) {
    privacy["epsilon_target"] = cfg.dp->epsilon_target;
    privacy["delta"] = cfg.dp->delta;
    privacy["clip_norm"] = cfg.dp->clip_norm;
  }
  WriteJson(dir / "privacy.json", privacy);
}

void StageSynthesize(const ExperimentConfig& config, std::uint64_t seed) {
  if (!config.generative()) return;
  const fs::path dir = SeedDir(config, seed);
  const Checkpoint ckpt = LoadCheckpoint(dir / "global.fckp");
  const MlpStack generator = ExtractStack(
      ckpt, kGlobalPrefix, Activation::kRelu, Activation::kIdentity);
  const std::vector<ClientSplits> clients = LoadClients(dir);
  int total_train = 0;
  for (const ClientSplits& c : clients) total_train += c.train.size();
  const int count =
      config.synthesis.size > 0 ? config.synthesis.size : total_train;
  const int classes = clients.front().train.num_classes();
  for (size_t m = 0; m < clients.size(); ++m) {
    ClassDistribution dist = ClassDistribution::Uniform(classes);
    if (config.synthesis.class_distribution == "local") {
      dist = ClassDistribution::Empirical(clients[m].train.y, classes);
    } else if (config.synthesis.class_distribution == "explicit") {
      if (static_cast<int>(config.synthesis.class_weights.size()) != classes) {
        throw ConfigError("synthesis.class_weights",
                          "expected " + std::to_string(classes) + " weights");
      }
      dist = ClassDistribution::Explicit(config.synthesis.class_weights);
    }
    RngStream rng(seed, {m, 0, Purpose::kGenerate});
    EmbeddingDataset synthetic =
        GenerateEmbeddings(generator, LatentDim(config), count, dist, rng);
    synthetic.meta.extractor_id = clients[m].train.meta.extractor_id;
    SaveDataset(synthetic, SyntheticFile(dir, static_cast<int>(m)));
  }
}

void StageTrainDownstream(const ExperimentConfig& config, std::uint64_t seed) {
  const fs::path dir = SeedDir(config, seed);
  const std::vector<ClientSplits> clients = LoadClients(dir);
  std::optional<LinearParams> federated;
  if (!config.generative()) {
    const Checkpoint ckpt = LoadCheckpoint(dir / "global.fckp");
    federated = LinearParams{ExtractStack(
        ckpt, kGlobalPrefix, Activation::kIdentity, Activation::kIdentity)};
  }
  std::vector<InterpolatedClassifier> trained(clients.size());
  ParallelFor(static_cast<int>(clients.size()), config.workers, [&](int m) {
    TrainSpec spec;
    spec.epochs = config.downstream.epochs;
    spec.learning_rate = config.downstream.learning_rate;
    spec.batch_size = config.downstream.batch_size;
    spec.seed = DownstreamSeed(seed, m);
    InterpolatedClassifier& c = trained[m];
    c.local = TrainLinear(clients[m].train, spec);
    if (federated) {
      c.global = *federated;
    } else {
      EmbeddingDataset synthetic = LoadDataset(SyntheticFile(dir, m));
      if (config.downstream.mix_real_and_synthetic) {
        const std::vector<EmbeddingDataset> parts = {synthetic,
                                                     clients[m].train};
        synthetic = Concatenate(parts);
      }
      c.global = TrainLinear(synthetic, spec);
    }
    const bool fixed_global =
        config.method == Method::kFedAvg || config.method == Method::kFedProx;
    c.lambda = fixed_global
                   ? 0.0
                   : SelectLambda(c.local, c.global, clients[m].val).lambda;
  });
  const std::uint64_t hash = ConfigHash(config);
  for (size_t m = 0; m < trained.size(); ++m) {
    SaveClassifier(trained[m], hash, ClassifierFile(dir, static_cast<int>(m)));
  }
}

ClassifierScores ScoreClassifier(const InterpolatedClassifier& classifier,
                                 const EmbeddingDataset& test) {
  const std::vector<int> pred = Predict(classifier, test.x);
  return {Accuracy(pred, test.y),
          BalancedAccuracy(pred, test.y, test.num_classes())};
}

void StageEvaluate(const ExperimentConfig& config, std::uint64_t seed) {
  const fs::path dir = SeedDir(config, seed);
  const std::vector<ClientSplits> clients = LoadClients(dir);
  json rows = json::array();
  for (size_t m = 0; m < clients.size(); ++m) {
    const int id = static_cast<int>(m);
    InterpolatedClassifier c = LoadClassifier(ClassifierFile(dir, id));
    const EmbeddingDataset& test = clients[m].test;
    const ClassifierScores mixed = ScoreClassifier(c, test);
    const double lambda = c.lambda;
    c.lambda = 0.0;
    const ClassifierScores global = ScoreClassifier(c, test);
    c.lambda = 1.0;
    const ClassifierScores local = ScoreClassifier(c, test);
    json row = {
        {"client_id", id},          {"n_train", clients[m].train.size()},
        {"n_test", test.size()},    {"lambda", lambda},
        {"acc", mixed.acc},         {"bacc", mixed.bacc},
        {"global_acc", global.acc}, {"global_bacc", global.bacc},
        {"local_acc", local.acc},   {"local_bacc", local.bacc}};
    if (config.generative()) {
      const EmbeddingDataset synthetic = LoadDataset(SyntheticFile(dir, id));
      row["wasserstein"] = WassersteinAvg(clients[m].train, synthetic);
      if (config.eval.sliced_projections > 0) {
        RngStream rng(seed, {m, 0, Purpose::kProjection});
        row["sliced_wasserstein"] = SlicedWasserstein(
            clients[m].train, synthetic, config.eval.sliced_projections, rng);
      }
    }
    rows.push_back(row);
  }
  WriteJson(dir / "metrics.json", {{"format_version", kMetricsFormatVersion},
                                   {"method", MethodLabel(config)},
                                   {"seed", seed},
                                   {"clients", rows}});
}

RunSummary FinalizeRun(const ExperimentConfig& config) {
  const fs::path out(config.output_dir);
  RunSummary summary;
  summary.method = MethodLabel(config);
  summary.dataset_id = DatasetId(config);

  std::map<std::string, std::vector<std::vector<double>>> values;
  for (std::uint64_t seed : config.seeds) {
    const json metrics = ReadJson(SeedDir(config, seed) / "metrics.json");
    std::map<std::string, std::vector<double>> per_seed;
    for (const json& row : metrics.at("clients")) {
      for (auto it = row.begin(); it != row.end(); ++it) {
        if (it.key() == "client_id" || it.key() == "n_train" ||
            it.key() == "n_test") {
          continue;
        }
        per_seed[it.key()].push_back(it.value().get<double>());
      }
    }
    for (auto& [name, v] : per_seed) values[name].push_back(std::move(v));
  }
  for (auto& [name, v] : values) {
    summary.metrics[name] = AggregateReport(v, config.seeds);
  }
  const fs::path first = SeedDir(config, config.seeds.front());
  const EmbeddingDataset sample = LoadDataset(ClientFile(first, 0, "train"));
  summary.clients = ClientCount(first);
  summary.extractor_id = sample.meta.extractor_id;
  summary.param_count =
      ModelParamCount(config, sample.dim(), sample.num_classes());

  json metric_json;
  for (const auto& [name, report] : summary.metrics) {
    metric_json[name] = ReportJson(report);
  }
  const std::uint64_t hash = ConfigHash(config);
  WriteFile(out / "config.json", ConfigToJson(config));
  WriteJson(out / "metrics.json", {{"format_version", kMetricsFormatVersion},
                                   {"method", summary.method},
                                   {"dataset_id", summary.dataset_id},
                                   {"extractor_id", summary.extractor_id},
                                   {"clients", summary.clients},
                                   {"param_count", summary.param_count},
                                   {"config_hash", HashHex(hash)},
                                   {"seeds", config.seeds},
                                   {"metrics", metric_json}});

  std::ostringstream csv;
  csv << "metric,mean,std";
  for (std::uint64_t seed : config.seeds) csv << ",seed_" << seed;
  csv << "\n";
  for (const auto& [name, report] : summary.metrics) {
    csv << name << "," << FormatNumber(report.mean) << ","
        << FormatNumber(report.stddev);
    for (double v : report.per_seed_means) csv << "," << FormatNumber(v);
    csv << "\n";
  }
  WriteFile(out / "metrics.csv", csv.str());

  json artifacts = json::object();
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(out)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const fs::path& file : files) {
    const std::string rel = fs::relative(file, out).generic_string();
    if (rel == "manifest.json" || rel == "FAILED") continue;
    artifacts[rel] = HashHex(Fnv1a64(ReadFile(file)));
  }
  WriteJson(out / "manifest.json",
            {{"tool", "fedembed"},
             {"config_hash", HashHex(hash)},
             {"config", json::parse(ConfigToJson(config))},
             {"seeds", config.seeds},
             {"format_versions",
              {{"config", kConfigVersion},
               {"femb", kFembFormatVersion},
               {"checkpoint", kCheckpointFormatVersion},
               {"metrics", kMetricsFormatVersion}}},
             {"hash_algorithm", "fnv1a64"},
             {"artifacts", artifacts}});
  return summary;
}

RunSummary RunExperiment(const ExperimentConfig& config) {
  ValidateConfig(config);
  const fs::path out(config.output_dir);
  fs::create_directories(out);
  fs::remove(out / "FAILED");
  WriteFile(out / "config.json", ConfigToJson(config));
  for (std::uint64_t seed : config.seeds) {
    RunStage(config, seed, "partition", [&] { StagePartition(config, seed); });
    RunStage(config, seed, "train-gen", [&] { StageTrain(config, seed); });
    RunStage(config, seed, "synthesize",
             [&] { StageSynthesize(config, seed); });
    RunStage(config, seed, "train-downstream",
             [&] { StageTrainDownstream(config, seed); });
    RunStage(config, seed, "evaluate", [&] { StageEvaluate(config, seed); });
  }
  RunSummary summary;
  RunStage(config, config.seeds.front(), "finalize",
           [&] { summary = FinalizeRun(config); });
  return summary;
}

void SaveClassifier(const InterpolatedClassifier& classifier,
                    std::uint64_t config_hash, const fs::path& path) {
  Checkpoint ckpt;
  ckpt.config_hash = config_hash;
  AppendStack(ckpt, "local", classifier.local.stack);
  AppendStack(ckpt, "global", classifier.global.stack);
  ckpt.tensors.push_back(
      {"lambda", {1}, {static_cast<float>(classifier.lambda)}});
  SaveCheckpoint(ckpt, path);
}

InterpolatedClassifier LoadClassifier(const fs::path& path) {
  const Checkpoint ckpt = LoadCheckpoint(path);
  InterpolatedClassifier c;
  c.local = LinearParams{ExtractStack(ckpt, "local", Activation::kIdentity,
                                      Activation::kIdentity)};
  c.global = LinearParams{ExtractStack(ckpt, "global", Activation::kIdentity,
                                       Activation::kIdentity)};
  const NamedTensor& lambda = ckpt.Get("lambda");
  if (lambda.data.size() != 1) {
    throw FormatError("classifier lambda must be a scalar", 0);
  }
  c.lambda = FloatToDecimalDouble(lambda.data[0]);
  if (!(c.lambda >= 0.0 && c.lambda <= 1.0)) {
    throw ValidationError("classifier lambda outside [0, 1]");
  }
  return c;
}

int MethodRank(const std::string& label) {
  static const std::vector<std::string> kOrder = {
      "fedavg", "fedprox", "fedlambda", "dp-cgan", "dp-cvae"};
  const auto it = std::find(kOrder.begin(), kOrder.end(), label);
  return it == kOrder.end() ? static_cast<int>(kOrder.size())
                            : static_cast<int>(it - kOrder.begin());
}

void ReportTables(std::span<const fs::path> run_dirs, const fs::path& out_dir) {
  std::vector<fs::path> runs;
  for (const fs::path& dir : run_dirs) {
    if (IsRunDir(dir)) {
      runs.push_back(dir);
      continue;
    }
    if (!fs::is_directory(dir)) continue;
    std::vector<fs::path> children;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_directory() && IsRunDir(entry.path())) {
        children.push_back(entry.path());
      }
    }
    std::sort(children.begin(), children.end());
    runs.insert(runs.end(), children.begin(), children.end());
  }
  if (runs.empty()) throw ValidationError("no completed runs found");

  struct Run {
    json metrics;
    fs::path dir;
  };
  std::vector<Run> loaded;
  std::string dataset_id;
  for (const fs::path& dir : runs) {
    Run run{ReadJson(dir / "metrics.json"), dir};
    const std::string id = run.metrics.at("dataset_id").get<std::string>();
    if (loaded.empty()) {
      dataset_id = id;
    } else if (id != dataset_id) {
      throw ValidationError("inconsistent dataset identifiers: '" + dataset_id +
                            "' vs '" + id + "' (" + dir.string() + ")");
    }
    loaded.push_back(std::move(run));
  }

  // Pool per-client values of runs sharing a method label.
  std::map<std::string, std::map<std::string, MetricReport>> pooled;
  std::map<std::string, std::int64_t> params;
  for (const Run& run : loaded) {
    const std::string method = run.metrics.at("method").get<std::string>();
    params[method] = run.metrics.at("param_count").get<std::int64_t>();
    for (auto it = run.metrics.at("metrics").begin();
         it != run.metrics.at("metrics").end(); ++it) {
      const MetricReport r = ReportFromJson(it.value());
      MetricReport& acc = pooled[method][it.key()];
      acc.per_client.insert(acc.per_client.end(), r.per_client.begin(),
                            r.per_client.end());
      acc.seeds.insert(acc.seeds.end(), r.seeds.begin(), r.seeds.end());
    }
  }
  std::vector<std::string> methods;
  for (auto& [method, metrics] : pooled) {
    methods.push_back(method);
    for (auto& [name, r] : metrics) r = AggregateReport(r.per_client, r.seeds);
  }
  std::stable_sort(methods.begin(), methods.end(),
                   [](const std::string& a, const std::string& b) {
                     return std::make_pair(MethodRank(a), a) <
                            std::make_pair(MethodRank(b), b);
                   });

  std::ostringstream table;
  table << "method," << dataset_id << "/ACC," << dataset_id << "/BACC\n";
  json rows = json::array();
  for (const std::string& method : methods) {
    const auto& m = pooled[method];
    const MetricReport& acc = m.at("acc");
    const MetricReport& bacc = m.at("bacc");
    table << method << "," << FormatCell(acc.mean, acc.stddev) << ","
          << FormatCell(bacc.mean, bacc.stddev) << "\n";
    json row = {{"method", method}, {"param_count", params[method]}};
    for (const auto& [name, r] : m) {
      row[name] = {{"mean", r.mean}, {"std", r.stddev}};
    }
    rows.push_back(row);
  }
  fs::create_directories(out_dir);
  WriteFile(out_dir / "table.csv", table.str());
  WriteJson(out_dir / "table.json",
            {{"dataset_id", dataset_id}, {"rows", rows}});

  std::ostringstream fig2;
  fig2 << "method,param_count,wasserstein_mean,wasserstein_std\n";
  for (const std::string& method : methods) {
    const auto& m = pooled[method];
    const auto w = m.find("wasserstein");
    if (w == m.end()) continue;
    fig2 << method << "," << params[method] << ","
         << FormatNumber(w->second.mean) << ","
         << FormatNumber(w->second.stddev) << "\n";
  }
  WriteFile(out_dir / "fig2.csv", fig2.str());

  // One row per run: the x axis varies across runs of one method.
  struct Fig3Row {
    int rank;
    std::string method;
    int clients;
    std::string extractor;
    double mean;
    double stddev;
  };
  std::vector<Fig3Row> fig3_rows;
  for (const Run& run : loaded) {
    const std::string method = run.metrics.at("method").get<std::string>();
    const json& bacc = run.metrics.at("metrics").at("bacc");
    fig3_rows.push_back(
        {MethodRank(method), method, run.metrics.at("clients").get<int>(),
         run.metrics.at("extractor_id").get<std::string>(),
         bacc.at("mean").get<double>(), bacc.at("std").get<double>()});
  }
  std::stable_sort(fig3_rows.begin(), fig3_rows.end(),
                   [](const Fig3Row& a, const Fig3Row& b) {
                     return std::tie(a.rank, a.method, a.extractor, a.clients) <
                            std::tie(b.rank, b.method, b.extractor, b.clients);
                   });
  std::ostringstream fig3;
  fig3 << "method,clients,extractor,bacc_mean,bacc_std\n";
  for (const Fig3Row& r : fig3_rows) {
    fig3 << r.method << "," << r.clients << "," << r.extractor << ","
         << FormatNumber(r.mean) << "," << FormatNumber(r.stddev) << "\n";
  }
  WriteFile(out_dir / "fig3.csv", fig3.str());
}

}  // namespace fedembed
