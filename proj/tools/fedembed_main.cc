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
// Command-line entry point: full experiment runs, individual stages,
// report tables and privacy-accountant queries.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fedembed/config.h"
#include "fedembed/data.h"
#include "fedembed/error.h"
#include "fedembed/pipeline.h"
#include "fedembed/privacy.h"
#include "fedembed/rng.h"
#include "json.hpp"

namespace fedembed {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

enum ExitCode {
  kOk = 0,
  kConfigExit = 2,
  kDataExit = 3,
  kRuntimeExit = 4,
  kBudgetExit = 5,
};

void PrintJson(const json& value) { std::cout << value.dump(2) << "\n"; }

// "K=3,d=16,n=600,s=8" -> blob generator settings (n is per class).
BlobConfig ParseBlobSpec(const std::string& text) {
  BlobConfig blobs;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("--blobs", "expected key=value, got '" + item + "'");
    }
    const std::string key = item.substr(0, eq);
    const std::string value = item.substr(eq + 1);
    try {
      if (key == "K") {
        blobs.classes = std::stoi(value);
      } else if (key == "d") {
        blobs.dim = std::stoi(value);
      } else if (key == "n") {
        blobs.per_class = std::stoi(value);
      } else if (key == "s") {
        blobs.separation = std::stod(value);
      } else {
        throw ConfigError("--blobs", "unknown key '" + key + "' (K, d, n, s)");
      }
    } catch (const std::logic_error&) {
      throw ConfigError("--blobs", "bad value for '" + key + "': " + value);
    }
  }
  return blobs;
}

struct StageOptions {
  std::string config;
  std::vector<std::uint64_t> seeds;
  std::optional<int> workers;
  std::string output_dir;
};

ExperimentConfig ResolveConfig(const StageOptions& options) {
  ExperimentConfig config = LoadConfig(options.config);
  if (!options.output_dir.empty()) config.output_dir = options.output_dir;
  if (options.workers) {
    if (*options.workers < 1) throw ConfigError("--workers", "must be >= 1");
    config.workers = *options.workers;
  }
  return config;
}

std::vector<std::uint64_t> SelectedSeeds(const ExperimentConfig& config,
                                         const StageOptions& options) {
  return options.seeds.empty() ? config.seeds : options.seeds;
}

void AddStageOptions(CLI::App* cmd, StageOptions& options) {
  cmd->add_option("--config", options.config, "Experiment config (JSON)")
      ->required();
  cmd->add_option("--seed", options.seeds,
                  "Run only these seeds (default: all configured seeds)");
  cmd->add_option("--workers", options.workers, "Parallel client workers");
  cmd->add_option("--output-dir", options.output_dir, "Run directory");
}

bool AllSeedsEvaluated(const ExperimentConfig& config) {
  for (std::uint64_t seed : config.seeds) {
    if (!fs::is_regular_file(SeedDir(config, seed) / "metrics.json")) {
      return false;
    }
  }
  return true;
}

json SummaryJson(const RunSummary& summary, const ExperimentConfig& config) {
  json metrics;
  for (const auto& [name, report] : summary.metrics) {
    metrics[name] = {{"mean", report.mean}, {"std", report.stddev}};
  }
  return {
      {"method", summary.method},        {"dataset_id", summary.dataset_id},
      {"clients", summary.clients},      {"param_count", summary.param_count},
      {"output_dir", config.output_dir}, {"metrics", metrics}};
}

int Main(int argc, char** argv) {
  CLI::App app{"Federated embedding sharing with DP conditional generators"};
  app.require_subcommand(1);

  // gen-data
  CLI::App* gen = app.add_subcommand("gen-data", "Write a blob dataset");
  std::string blob_spec;
  std::uint64_t gen_seed = 0;
  std::string gen_out;
  gen->add_option("--blobs", blob_spec, "K=..,d=..,n=..(per class),s=..")
      ->required();
  gen->add_option("--seed", gen_seed, "Generator seed");
  gen->add_option("--out", gen_out, "Output file (.femb or .csv)")->required();

  // Stages.
  StageOptions stage;
  const std::vector<std::pair<std::string, std::string>> kStages = {
      {"partition", "Partition and split the dataset across clients"},
      {"train-gen", "Federated training of the shared model"},
      {"synthesize", "Generate per-client synthetic datasets"},
      {"train-downstream", "Train local/global classifiers, select lambda"},
  };
  std::map<std::string, CLI::App*> stage_cmds;
  for (const auto& [name, help] : kStages) {
    stage_cmds[name] = app.add_subcommand(name, help);
    AddStageOptions(stage_cmds[name], stage);
  }

  // evaluate: either a pipeline stage or a single classifier on a dataset.
  CLI::App* evaluate =
      app.add_subcommand("evaluate", "Score classifiers on test data");
  std::string eval_classifier;
  std::string eval_data;
  evaluate->add_option("--config", stage.config, "Experiment config (JSON)");
  evaluate->add_option("--seed", stage.seeds, "Seeds to evaluate");
  evaluate->add_option("--workers", stage.workers, "Parallel client workers");
  evaluate->add_option("--output-dir", stage.output_dir, "Run directory");
  evaluate->add_option("--classifier", eval_classifier,
                       "Classifier checkpoint (.fckp)");
  evaluate->add_option("--data", eval_data, "Test dataset (.femb or .csv)");

  CLI::App* run = app.add_subcommand("run", "Run every stage for every seed");
  AddStageOptions(run, stage);

  CLI::App* report = app.add_subcommand("report", "Merge runs into tables");
  std::vector<std::string> report_dirs;
  std::string report_out;
  report->add_option("runs", report_dirs, "Run directories")->required();
  report->add_option("--out", report_out, "Output directory")->required();

  // accountant
  CLI::App* accountant =
      app.add_subcommand("accountant", "Privacy accountant queries");
  accountant->require_subcommand(1);
  double q = 1.0;
  double sigma = 1.0;
  double delta = 1e-4;
  double epsilon = 1.0;
  std::int64_t steps = 1;
  std::vector<int> orders;
  CLI::App* acc_rdp = accountant->add_subcommand("rdp", "RDP per order");
  acc_rdp->add_option("--q", q, "Sampling rate")->required();
  acc_rdp->add_option("--sigma", sigma, "Noise multiplier")->required();
  acc_rdp->add_option("--steps", steps, "Number of steps");
  acc_rdp->add_option("--order", orders, "Orders (default: 2..64,128,256)");
  CLI::App* acc_eps = accountant->add_subcommand("epsilon", "Composed eps");
  acc_eps->add_option("--q", q, "Sampling rate")->required();
  acc_eps->add_option("--sigma", sigma, "Noise multiplier")->required();
  acc_eps->add_option("--steps", steps, "Number of steps")->required();
  acc_eps->add_option("--delta", delta, "Target delta");
  CLI::App* acc_cal =
      accountant->add_subcommand("calibrate", "Smallest sigma meeting eps");
  acc_cal->add_option("--epsilon", epsilon, "Target epsilon")->required();
  acc_cal->add_option("--delta", delta, "Target delta");
  acc_cal->add_option("--q", q, "Sampling rate")->required();
  acc_cal->add_option("--steps", steps, "Number of steps")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigExit;
  }

  if (gen->parsed()) {
    const BlobConfig blobs = ParseBlobSpec(blob_spec);
    RngStream rng(gen_seed, {kServerStream, 0, Purpose::kData});
    const EmbeddingDataset data = SynthBlobs(
        blobs.classes, blobs.dim, blobs.per_class, blobs.separation, rng);
    SaveDataset(data, gen_out);
    PrintJson({{"path", gen_out},
               {"n", data.size()},
               {"dim", data.dim()},
               {"num_classes", data.num_classes()}});
    return kOk;
  }

  for (const auto& [name, cmd] : stage_cmds) {
    if (!cmd->parsed()) continue;
    const ExperimentConfig config = ResolveConfig(stage);
    for (std::uint64_t seed : SelectedSeeds(config, stage)) {
      if (name == "partition") StagePartition(config, seed);
      if (name == "train-gen") StageTrain(config, seed);
      if (name == "synthesize") StageSynthesize(config, seed);
      if (name == "train-downstream") StageTrainDownstream(config, seed);
    }
    return kOk;
  }

  if (evaluate->parsed()) {
    if (!eval_classifier.empty() || !eval_data.empty()) {
      if (eval_classifier.empty() || eval_data.empty()) {
        throw ConfigError("--classifier",
                          "--classifier and --data go together");
      }
      const InterpolatedClassifier classifier = LoadClassifier(eval_classifier);
      const EmbeddingDataset test = LoadDataset(eval_data);
      const ClassifierScores scores = ScoreClassifier(classifier, test);
      PrintJson({{"acc", scores.acc},
                 {"bacc", scores.bacc},
                 {"lambda", classifier.lambda},
                 {"n", test.size()}});
      return kOk;
    }
    if (stage.config.empty()) {
      throw ConfigError("--config", "required (or --classifier with --data)");
    }
    const ExperimentConfig config = ResolveConfig(stage);
    for (std::uint64_t seed : SelectedSeeds(config, stage)) {
      StageEvaluate(config, seed);
    }
    // The last evaluated seed completes the run.
    if (AllSeedsEvaluated(config)) {
      PrintJson(SummaryJson(FinalizeRun(config), config));
    }
    return kOk;
  }

  if (run->parsed()) {
    ExperimentConfig config = ResolveConfig(stage);
    if (!stage.seeds.empty()) config.seeds = stage.seeds;
    PrintJson(SummaryJson(RunExperiment(config), config));
    return kOk;
  }

  if (report->parsed()) {
    std::vector<fs::path> dirs(report_dirs.begin(), report_dirs.end());
    ReportTables(dirs, report_out);
    PrintJson({{"out", report_out}});
    return kOk;
  }

  if (acc_rdp->parsed()) {
    if (orders.empty()) orders = DefaultOrders();
    json rdp = json::array();
    for (int order : orders) {
      if (order < 2) throw ConfigError("--order", "orders must be >= 2");
      const double per_step = RdpSubsampledGaussian(q, sigma, order);
      rdp.push_back(
          {{"order", order}, {"rdp", per_step * static_cast<double>(steps)}});
    }
    PrintJson({{"q", q}, {"sigma", sigma}, {"steps", steps}, {"rdp", rdp}});
    return kOk;
  }
  if (acc_eps->parsed()) {
    const DpGuarantee g =
        ComposedEpsilon(q, sigma, steps, delta, DefaultOrders());
    PrintJson({{"q", q},
               {"sigma", sigma},
               {"steps", steps},
               {"delta", delta},
               {"epsilon", g.epsilon},
               {"order", g.order}});
    return kOk;
  }
  if (acc_cal->parsed()) {
    const double calibrated =
        CalibrateNoise(epsilon, delta, q, steps, DefaultOrders());
    const DpGuarantee g =
        ComposedEpsilon(q, calibrated, steps, delta, DefaultOrders());
    PrintJson({{"q", q},
               {"steps", steps},
               {"delta", delta},
               {"epsilon_target", epsilon},
               {"sigma", calibrated},
               {"epsilon", g.epsilon},
               {"order", g.order}});
    return kOk;
  }
  return kConfigExit;
}

int ExitCodeFor(const std::exception_ptr& error) {
  try {
    std::rethrow_exception(error);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigExit;
  } catch (const PrivacyBudgetError& e) {
    std::cerr << "privacy budget exceeded: " << e.what() << "\n";
    return kBudgetExit;
  } catch (const FormatError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kDataExit;
  } catch (const ValidationError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kDataExit;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeExit;
  }
}

}  // namespace
}  // namespace fedembed

int main(int argc, char** argv) {
  try {
    return fedembed::Main(argc, argv);
  } catch (...) {
    return fedembed::ExitCodeFor(std::current_exception());
  }
}
