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
#ifndef FEDEMBED_PIPELINE_H_
#define FEDEMBED_PIPELINE_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fedembed/config.h"
#include "fedembed/data.h"
#include "fedembed/downstream.h"
#include "fedembed/eval.h"

namespace fedembed {

inline constexpr int kMetricsFormatVersion = 1;

// Layout of one run directory:
//   <out>/config.json, manifest.json, metrics.json, metrics.csv
//   <out>/seed_<s>/partition.json
//   <out>/seed_<s>/clients/client_<m>_{train,val,test}.femb
//   <out>/seed_<s>/global.fckp, rounds.jsonl, privacy.json
//   <out>/seed_<s>/synthetic/client_<m>.femb      (generative methods)
//   <out>/seed_<s>/classifiers/client_<m>.fckp
//   <out>/seed_<s>/metrics.json
//   <out>/FAILED                                  (after a stage error)
std::filesystem::path SeedDir(const ExperimentConfig& config,
                              std::uint64_t seed);

// The configured source dataset (file or blob generator).
EmbeddingDataset LoadSourceDataset(const ExperimentConfig& config);

// Stages. Each reads the previous stage's files and writes its own, so a
// manual stage-by-stage sequence reproduces RunExperiment byte for byte.
void StagePartition(const ExperimentConfig& config, std::uint64_t seed);
// Federated training of the shared model (decoder, generator or linear
// classifier).
void StageTrain(const ExperimentConfig& config, std::uint64_t seed);
// Per-client synthetic datasets from the global decoder or generator.
// A no-op for the federated-classifier baselines.
void StageSynthesize(const ExperimentConfig& config, std::uint64_t seed);
// Per-client local and global classifiers and the selected lambda.
void StageTrainDownstream(const ExperimentConfig& config, std::uint64_t seed);
// Test-set metrics per client, written to seed_<s>/metrics.json.
void StageEvaluate(const ExperimentConfig& config, std::uint64_t seed);

struct RunSummary {
  std::string method;
  std::string dataset_id;
  std::string extractor_id;
  int clients = 0;
  std::int64_t param_count = 0;
  // "acc", "bacc", "global_bacc", "local_bacc", "wasserstein", ...
  std::map<std::string, MetricReport> metrics;
};

// Aggregates the per-seed metrics into metrics.json/metrics.csv and writes
// manifest.json with hashes of every artifact.
RunSummary FinalizeRun(const ExperimentConfig& config);

// All stages for every seed, then FinalizeRun. On a stage error the
// partial artifacts stay in place next to a FAILED marker and the error
// propagates.
RunSummary RunExperiment(const ExperimentConfig& config);

// Per-client scores of one classifier on one test set.
struct ClassifierScores {
  double acc = 0.0;
  double bacc = 0.0;
};
ClassifierScores ScoreClassifier(const InterpolatedClassifier& classifier,
                                 const EmbeddingDataset& test);

// Merges completed run directories (or directories containing them) into
// table.csv, table.json, fig2.csv and fig3.csv under `out_dir`. Runs of
// the same method are pooled over seeds. Throws ValidationError when no
// run is found or dataset identifiers differ.
void ReportTables(std::span<const std::filesystem::path> run_dirs,
                  const std::filesystem::path& out_dir);

// Position of a method label in report tables.
int MethodRank(const std::string& label);

// Interpolated classifier stored in a classifier checkpoint.
InterpolatedClassifier LoadClassifier(const std::filesystem::path& path);
void SaveClassifier(const InterpolatedClassifier& classifier,
                    std::uint64_t config_hash,
                    const std::filesystem::path& path);

}  // namespace fedembed

#endif  // FEDEMBED_PIPELINE_H_
