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
#ifndef FEDEMBED_EVAL_H_
#define FEDEMBED_EVAL_H_

#include <cstdint>
#include <span>
#include <vector>

#include "fedembed/data.h"
#include "fedembed/models.h"

namespace fedembed {

double Accuracy(std::span<const int> predicted, std::span<const int> truth);

// Mean per-class recall over the classes present in `truth`.
double BalancedAccuracy(std::span<const int> predicted,
                        std::span<const int> truth, int num_classes);

// 1-D W1 between two empirical distributions with uniform weights:
// the integral over u of |F^-1(u) - G^-1(u)|, exact for unequal sizes.
double Wasserstein1d(std::span<const double> a, std::span<const double> b);

// Per-dimension W1 between the marginals, averaged over dimensions.
double WassersteinAvg(const EmbeddingDataset& real,
                      const EmbeddingDataset& synthetic);

// Mean W1 over `projections` random unit directions.
double SlicedWasserstein(const EmbeddingDataset& real,
                         const EmbeddingDataset& synthetic, int projections,
                         RngStream& rng);

std::int64_t ParamCount(const MlpStack& stack);
std::int64_t ParamCount(const CvaeParams& params);
std::int64_t ParamCount(const CganParams& params);
std::int64_t ParamCount(const LinearParams& params);

struct MetricReport {
  // values[s][m]: client m under seed s.
  std::vector<std::vector<double>> per_client;
  std::vector<std::uint64_t> seeds;
  std::vector<double> per_seed_means;
  double mean = 0.0;
  double stddev = 0.0;  // population std over seeds
};

// Mean over clients within each seed, then mean and population standard
// deviation over seeds.
MetricReport AggregateReport(std::vector<std::vector<double>> per_client,
                             std::vector<std::uint64_t> seeds = {});

}  // namespace fedembed

#endif  // FEDEMBED_EVAL_H_
