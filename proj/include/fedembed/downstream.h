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
#ifndef FEDEMBED_DOWNSTREAM_H_
#define FEDEMBED_DOWNSTREAM_H_

#include <array>
#include <cstdint>
#include <vector>

#include "fedembed/data.h"
#include "fedembed/models.h"

namespace fedembed {

struct TrainSpec {
  int epochs = 100;
  double learning_rate = 1e-3;
  int batch_size = 32;
  std::uint64_t seed = 0;
};

// Mean cross-entropy minimized with Adam from zero weights. Each epoch
// orders rows by a key hashed from (seed, epoch, row content), so the
// result does not depend on the order of rows in `train`.
LinearParams TrainLinear(const EmbeddingDataset& train, const TrainSpec& spec);

struct InterpolatedClassifier {
  LinearParams local;
  LinearParams global;
  double lambda = 0.0;
};

// lambda * P_local + (1 - lambda) * P_global, one row per input row.
Matrix InterpolateProba(const InterpolatedClassifier& classifier,
                        const Matrix& x);

// Row-wise argmax, lowest class index on ties.
std::vector<int> ArgmaxRows(const Matrix& probabilities);
std::vector<int> Predict(const InterpolatedClassifier& classifier,
                         const Matrix& x);

// {0.0, 0.1, ..., 1.0}.
const std::array<double, 11>& LambdaGrid();

struct LambdaSelection {
  double lambda = 0.0;
  double score = 0.0;  // validation balanced accuracy
  std::array<double, 11> grid_scores{};
};

// Grid point maximizing validation balanced accuracy; ties go to the larger
// lambda.
LambdaSelection SelectLambda(const LinearParams& local,
                             const LinearParams& global,
                             const EmbeddingDataset& val);

}  // namespace fedembed

#endif  // FEDEMBED_DOWNSTREAM_H_
