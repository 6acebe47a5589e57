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
#include "fedembed/config.h"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "fedembed/error.h"
#include "json.hpp"

namespace fedembed {
namespace {

using nlohmann::json;

// Reads one JSON object, remembering which keys were consumed so that
// leftovers can be reported as unknown.
class Section {
 public:
  Section(const json& node, std::string path)
      : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) throw ConfigError(Name(), "expected an object");
  }

  std::string Field(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  const json* Find(const std::string& key) {
    seen_.insert(key);
    auto it = node_.find(key);
    return it == node_.end() ? nullptr : &*it;
  }

  void Get(const std::string& key, int& out) {
    if (const json* v = Find(key)) {
      if (!v->is_number_integer()) {
        throw ConfigError(Field(key), "expected an integer");
      }
      const auto value = v->get<std::int64_t>();
      if (value < INT32_MIN || value > INT32_MAX) {
        throw ConfigError(Field(key), "integer out of range");
      }
      out = static_cast<int>(value);
    }
  }
  void Get(const std::string& key, std::uint64_t& out) {
    if (const json* v = Find(key)) {
      if (!v->is_number_unsigned()) {
        throw ConfigError(Field(key), "expected a non-negative integer");
      }
      out = v->get<std::uint64_t>();
    }
  }
  void Get(const std::string& key, double& out) {
    if (const json* v = Find(key)) {
      if (!v->is_number()) throw ConfigError(Field(key), "expected a number");
      out = v->get<double>();
    }
  }
  void Get(const std::string& key, bool& out) {
    if (const json* v = Find(key)) {
      if (!v->is_boolean()) throw ConfigError(Field(key), "expected a boolean");
      out = v->get<bool>();
    }
  }
  void Get(const std::string& key, std::string& out) {
    if (const json* v = Find(key)) {
      if (!v->is_string()) throw ConfigError(Field(key), "expected a string");
      out = v->get<std::string>();
    }
  }
  void Get(const std::string& key, std::vector<double>& out) {
    if (const json* v = Find(key)) {
      if (!v->is_array()) throw ConfigError(Field(key), "expected an array");
      out.clear();
      for (const json& item : *v) {
        if (!item.is_number()) {
          throw ConfigError(Field(key), "expected an array of numbers");
        }
        out.push_back(item.get<double>());
      }
    }
  }
  void Get(const std::string& key, std::vector<std::uint64_t>& out) {
    if (const json* v = Find(key)) {
      if (!v->is_array()) throw ConfigError(Field(key), "expected an array");
      out.clear();
      for (const json& item : *v) {
        if (!item.is_number_unsigned()) {
          throw ConfigError(Field(key),
                            "expected an array of non-negative integers");
        }
        out.push_back(item.get<std::uint64_t>());
      }
    }
  }

  // Nested object, or nullopt when the key is absent or null.
  std::optional<Section> Sub(const std::string& key) {
    const json* v = Find(key);
    if (v == nullptr || v->is_null()) return std::nullopt;
    return Section(*v, Field(key));
  }

  void Finish() const {
    for (auto it = node_.begin(); it != node_.end(); ++it) {
      if (!seen_.count(it.key())) {
        throw ConfigError(Field(it.key()), "unknown key");
      }
    }
  }

 private:
  std::string Name() const { return path_.empty() ? "<root>" : path_; }

  const json& node_;
  std::string path_;
  std::set<std::string> seen_;
};

Method ParseMethod(const std::string& name) {
  if (name == "fedavg") return Method::kFedAvg;
  if (name == "fedprox") return Method::kFedProx;
  if (name == "fedlambda") return Method::kFedLambda;
  if (name == "cvae") return Method::kCvae;
  if (name == "cgan") return Method::kCgan;
  throw ConfigError("method", "unknown method '" + name +
                                  "' (fedavg, fedprox, fedlambda, cvae, cgan)");
}

void Require(bool ok, const std::string& field, const std::string& message) {
  if (!ok) throw ConfigError(field, message);
}

json ToJson(const ExperimentConfig& c) {
  json j;
  j["config_version"] = c.config_version;
  j["method"] = MethodName(c.method);
  json dataset;
  dataset["name"] = c.dataset.name;
  dataset["path"] = c.dataset.path;
  if (c.dataset.blobs) {
    const BlobConfig& b = *c.dataset.blobs;
    dataset["blobs"] = {{"classes", b.classes},
                        {"dim", b.dim},
                        {"per_class", b.per_class},
                        {"separation", b.separation},
                        {"seed", b.seed}};
  } else {
    dataset["blobs"] = nullptr;
  }
  j["dataset"] = dataset;
  j["partition"] = {
      {"kind", c.partition.kind == PartitionKind::kIid ? "iid" : "dirichlet"},
      {"alpha", c.partition.alpha},
      {"clients", c.partition.clients},
      {"min_client_size", c.partition.min_client_size}};
  j["split"] = {{"train", c.split.train},
                {"val", c.split.val},
                {"test", c.split.test},
                {"stratified", c.split.stratified}};
  j["cvae"] = {{"latent_dim", c.cvae.latent_dim},
               {"hidden1", c.cvae.hidden1},
               {"hidden2", c.cvae.hidden2}};
  j["cgan"] = {{"noise_dim", c.cgan.noise_dim},
               {"gen_hidden1", c.cgan.gen_hidden1},
               {"gen_hidden2", c.cgan.gen_hidden2},
               {"disc_hidden1", c.cgan.disc_hidden1},
               {"disc_hidden2", c.cgan.disc_hidden2}};
  j["dp"] = {
      {"enabled", c.dp.enabled},
      {"epsilon", c.dp.epsilon},
      {"delta", c.dp.delta},
      {"clip_norm", c.dp.clip_norm},
      {"on_budget_exceeded",
       c.dp.on_budget_exceeded == BudgetPolicy::kFail ? "fail" : "warn"}};
  j["rounds"] = {{"rounds", c.rounds.rounds},
                 {"local_epochs", c.rounds.local_epochs},
                 {"learning_rate", c.rounds.learning_rate},
                 {"batch_size", c.rounds.batch_size},
                 {"fedprox_mu", c.rounds.fedprox_mu}};
  j["synthesis"] = {{"size", c.synthesis.size},
                    {"class_distribution", c.synthesis.class_distribution},
                    {"class_weights", c.synthesis.class_weights}};
  j["downstream"] = {
      {"epochs", c.downstream.epochs},
      {"learning_rate", c.downstream.learning_rate},
      {"batch_size", c.downstream.batch_size},
      {"mix_real_and_synthetic", c.downstream.mix_real_and_synthetic}};
  j["eval"] = {{"sliced_projections", c.eval.sliced_projections}};
  j["seeds"] = c.seeds;
  j["workers"] = c.workers;
  j["output_dir"] = c.output_dir;
  return j;
}

}  // namespace

std::string MethodName(Method method) {
  switch (method) {
    case Method::kFedAvg:
      return "fedavg";
    case Method::kFedProx:
      return "fedprox";
    case Method::kFedLambda:
      return "fedlambda";
    case Method::kCvae:
      return "cvae";
    case Method::kCgan:
      return "cgan";
  }
  return "unknown";
}

std::string MethodLabel(const ExperimentConfig& config) {
  return (config.dp.enabled ? "dp-" : "") + MethodName(config.method);
}

std::string DatasetId(const ExperimentConfig& config) {
  if (!config.dataset.name.empty()) return config.dataset.name;
  if (config.dataset.blobs) {
    const BlobConfig& b = *config.dataset.blobs;
    std::ostringstream out;
    out << "blobs(K=" << b.classes << ",d=" << b.dim << ",n=" << b.per_class
        << ",s=" << b.separation << ",seed=" << b.seed << ")";
    return out.str();
  }
  return std::filesystem::path(config.dataset.path).filename().string();
}

ExperimentConfig ParseConfig(std::string_view json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError("<root>", std::string("invalid JSON: ") + e.what());
  }
  ExperimentConfig c;
  Section top(root, "");
  Require(top.Find("config_version") != nullptr, "config_version",
          "missing (expected 1)");
  top.Get("config_version", c.config_version);
  Require(c.config_version == kConfigVersion, "config_version",
          "unsupported version " + std::to_string(c.config_version));

  std::string method = MethodName(c.method);
  top.Get("method", method);
  c.method = ParseMethod(method);

  if (auto s = top.Sub("dataset")) {
    s->Get("name", c.dataset.name);
    s->Get("path", c.dataset.path);
    if (auto b = s->Sub("blobs")) {
      BlobConfig blobs;
      b->Get("classes", blobs.classes);
      b->Get("dim", blobs.dim);
      b->Get("per_class", blobs.per_class);
      b->Get("separation", blobs.separation);
      b->Get("seed", blobs.seed);
      b->Finish();
      c.dataset.blobs = blobs;
    }
    s->Finish();
  }
  if (auto s = top.Sub("partition")) {
    std::string kind = "dirichlet";
    s->Get("kind", kind);
    Require(kind == "iid" || kind == "dirichlet", s->Field("kind"),
            "expected 'iid' or 'dirichlet'");
    c.partition.kind =
        kind == "iid" ? PartitionKind::kIid : PartitionKind::kDirichlet;
    s->Get("alpha", c.partition.alpha);
    s->Get("clients", c.partition.clients);
    s->Get("min_client_size", c.partition.min_client_size);
    s->Finish();
  }
  if (auto s = top.Sub("split")) {
    s->Get("train", c.split.train);
    s->Get("val", c.split.val);
    s->Get("test", c.split.test);
    s->Get("stratified", c.split.stratified);
    s->Finish();
  }
  if (auto s = top.Sub("cvae")) {
    s->Get("latent_dim", c.cvae.latent_dim);
    s->Get("hidden1", c.cvae.hidden1);
    s->Get("hidden2", c.cvae.hidden2);
    s->Finish();
  }
  if (auto s = top.Sub("cgan")) {
    s->Get("noise_dim", c.cgan.noise_dim);
    s->Get("gen_hidden1", c.cgan.gen_hidden1);
    s->Get("gen_hidden2", c.cgan.gen_hidden2);
    s->Get("disc_hidden1", c.cgan.disc_hidden1);
    s->Get("disc_hidden2", c.cgan.disc_hidden2);
    s->Finish();
  }
  if (auto s = top.Sub("dp")) {
    s->Get("enabled", c.dp.enabled);
    s->Get("epsilon", c.dp.epsilon);
    s->Get("delta", c.dp.delta);
    s->Get("clip_norm", c.dp.clip_norm);
    std::string policy = "fail";
    s->Get("on_budget_exceeded", policy);
    Require(policy == "fail" || policy == "warn",
            s->Field("on_budget_exceeded"), "expected 'fail' or 'warn'");
    c.dp.on_budget_exceeded =
        policy == "fail" ? BudgetPolicy::kFail : BudgetPolicy::kWarn;
    s->Finish();
  }
  if (auto s = top.Sub("rounds")) {
    s->Get("rounds", c.rounds.rounds);
    s->Get("local_epochs", c.rounds.local_epochs);
    s->Get("learning_rate", c.rounds.learning_rate);
    s->Get("batch_size", c.rounds.batch_size);
    s->Get("fedprox_mu", c.rounds.fedprox_mu);
    s->Finish();
  }
  if (auto s = top.Sub("synthesis")) {
    s->Get("size", c.synthesis.size);
    s->Get("class_distribution", c.synthesis.class_distribution);
    s->Get("class_weights", c.synthesis.class_weights);
    s->Finish();
  }
  if (auto s = top.Sub("downstream")) {
    s->Get("epochs", c.downstream.epochs);
    s->Get("learning_rate", c.downstream.learning_rate);
    s->Get("batch_size", c.downstream.batch_size);
    s->Get("mix_real_and_synthetic", c.downstream.mix_real_and_synthetic);
    s->Finish();
  }
  if (auto s = top.Sub("eval")) {
    s->Get("sliced_projections", c.eval.sliced_projections);
    s->Finish();
  }
  top.Get("seeds", c.seeds);
  top.Get("workers", c.workers);
  top.Get("output_dir", c.output_dir);
  top.Finish();
  ValidateConfig(c);
  return c;
}

void ValidateConfig(const ExperimentConfig& c) {
  const DatasetConfig& d = c.dataset;
  Require(!(d.path.empty() && !d.blobs), "dataset.path",
          "required (or set dataset.blobs)");
  Require(d.path.empty() || !d.blobs, "dataset.path",
          "set either dataset.path or dataset.blobs, not both");
  if (!d.path.empty()) {
    Require(std::filesystem::is_regular_file(d.path), "dataset.path",
            "file not found: " + d.path);
  }
  if (d.blobs) {
    Require(d.blobs->classes >= 2, "dataset.blobs.classes", "must be >= 2");
    Require(d.blobs->dim >= d.blobs->classes, "dataset.blobs.dim",
            "must be >= dataset.blobs.classes");
    Require(d.blobs->per_class >= 1, "dataset.blobs.per_class", "must be >= 1");
    Require(d.blobs->separation >= 0.0, "dataset.blobs.separation",
            "must be >= 0");
  }
  Require(c.partition.clients >= 1, "partition.clients", "must be >= 1");
  Require(c.partition.alpha > 0.0, "partition.alpha", "must be > 0");
  Require(c.partition.min_client_size >= 1, "partition.min_client_size",
          "must be >= 1");
  try {
    c.split.Validate();
  } catch (const ValidationError& e) {
    throw ConfigError("split", e.what());
  }
  Require(c.cvae.latent_dim >= 1, "cvae.latent_dim", "must be >= 1");
  Require(c.cvae.hidden1 >= 1, "cvae.hidden1", "must be >= 1");
  Require(c.cvae.hidden2 >= 1, "cvae.hidden2", "must be >= 1");
  Require(c.cgan.noise_dim >= 1, "cgan.noise_dim", "must be >= 1");
  Require(c.cgan.gen_hidden1 >= 1, "cgan.gen_hidden1", "must be >= 1");
  Require(c.cgan.gen_hidden2 >= 1, "cgan.gen_hidden2", "must be >= 1");
  Require(c.cgan.disc_hidden1 >= 1, "cgan.disc_hidden1", "must be >= 1");
  Require(c.cgan.disc_hidden2 >= 1, "cgan.disc_hidden2", "must be >= 1");
  Require(c.dp.epsilon > 0.0, "dp.epsilon", "must be > 0");
  Require(c.dp.delta > 0.0 && c.dp.delta < 1.0, "dp.delta",
          "must be in (0, 1)");
  Require(c.dp.clip_norm > 0.0, "dp.clip_norm", "must be > 0");
  Require(c.rounds.rounds >= 1, "rounds.rounds", "must be >= 1");
  Require(c.rounds.local_epochs >= 1, "rounds.local_epochs", "must be >= 1");
  Require(c.rounds.learning_rate > 0.0, "rounds.learning_rate", "must be > 0");
  Require(c.rounds.batch_size >= 1, "rounds.batch_size", "must be >= 1");
  Require(c.rounds.fedprox_mu >= 0.0, "rounds.fedprox_mu", "must be >= 0");
  Require(c.synthesis.size >= 0, "synthesis.size", "must be >= 0");
  const std::string& dist = c.synthesis.class_distribution;
  Require(dist == "uniform" || dist == "local" || dist == "explicit",
          "synthesis.class_distribution",
          "expected 'uniform', 'local' or 'explicit'");
  Require(dist != "explicit" || !c.synthesis.class_weights.empty(),
          "synthesis.class_weights", "required for an explicit distribution");
  Require(c.downstream.epochs >= 1, "downstream.epochs", "must be >= 1");
  Require(c.downstream.learning_rate > 0.0, "downstream.learning_rate",
          "must be > 0");
  Require(c.downstream.batch_size >= 1, "downstream.batch_size",
          "must be >= 1");
  Require(c.eval.sliced_projections >= 0, "eval.sliced_projections",
          "must be >= 0");
  Require(!c.seeds.empty(), "seeds", "at least one seed required");
  Require(std::set<std::uint64_t>(c.seeds.begin(), c.seeds.end()).size() ==
              c.seeds.size(),
          "seeds", "duplicate seed");
  Require(c.workers >= 1, "workers", "must be >= 1");
  Require(!c.output_dir.empty(), "output_dir", "must not be empty");
}

void ApplyEnvironmentOverrides(ExperimentConfig& config) {
  if (const char* dir = std::getenv("FEDEMBED_OUTPUT_DIR"); dir && *dir) {
    config.output_dir = dir;
  }
  if (const char* workers = std::getenv("FEDEMBED_WORKERS");
      workers && *workers) {
    char* end = nullptr;
    const long value = std::strtol(workers, &end, 10);
    if (*end != '\0' || value < 1 || value > 4096) {
      throw ConfigError(
          "FEDEMBED_WORKERS",
          "expected a positive integer, got '" + std::string(workers) + "'");
    }
    config.workers = static_cast<int>(value);
  }
}

ExperimentConfig LoadConfig(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config", "cannot open " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  ExperimentConfig config = ParseConfig(text.str());
  ApplyEnvironmentOverrides(config);
  return config;
}

std::string ConfigToJson(const ExperimentConfig& config) {
  return ToJson(config).dump(2) + "\n";
}

std::uint64_t Fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string HashHex(std::uint64_t hash) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = kDigits[hash & 0xF];
    hash >>= 4;
  }
  return out;
}

std::uint64_t ConfigHash(const ExperimentConfig& config) {
  json j = ToJson(config);
  j.erase("output_dir");
  j.erase("workers");
  return Fnv1a64(j.dump());
}

RoundConfig MakeRoundConfig(const ExperimentConfig& config) {
  RoundConfig cfg;
  cfg.rounds = config.rounds.rounds;
  cfg.local_epochs = config.rounds.local_epochs;
  cfg.batch_size = config.rounds.batch_size;
  cfg.learning_rate = config.rounds.learning_rate;
  cfg.fedprox_mu = config.rounds.fedprox_mu;
  cfg.budget_policy = config.dp.on_budget_exceeded;
  switch (config.method) {
    case Method::kCvae:
      cfg.model_kind = ModelKind::kCvae;
      break;
    case Method::kCgan:
      cfg.model_kind = ModelKind::kCgan;
      break;
    case Method::kFedAvg:
    case Method::kFedLambda:
      cfg.model_kind = ModelKind::kLinear;
      cfg.baseline = config.method == Method::kFedAvg
                         ? BaselineKind::kFedAvg
                         : BaselineKind::kFedLambda;
      break;
    case Method::kFedProx:
      cfg.model_kind = ModelKind::kLinear;
      cfg.baseline = BaselineKind::kFedProx;
      break;
  }
  if (config.dp.enabled) {
    DpConfig dp;
    dp.epsilon_target = config.dp.epsilon;
    dp.delta = config.dp.delta;
    dp.clip_norm = config.dp.clip_norm;
    cfg.dp = dp;
  }
  return cfg;
}

}  // namespace fedembed
