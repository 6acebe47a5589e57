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
#include "fedembed/downstream.h"

#include <algorithm>
#include <bit>
#include <numeric>
#include <set>
#include <utility>

#include "fedembed/error.h"
#include "fedembed/eval.h"
#include "fedembed/log.h"
#include "fedembed/optim.h"
#include "fedembed/rng.h"

namespace fedembed {
namespace {

std::uint64_t RowKey(const EmbeddingDataset& data, int row) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  auto feed = [&h](std::uint64_t word) {
    for (int i = 0; i < 8; ++i) {
      h ^= (word >> (8 * i)) & 0xFF;
      h *= 0x100000001B3ull;
    }
  };
  for (int j = 0; j < data.dim(); ++j) {
    feed(std::bit_cast<std::uint64_t>(data.x(row, j)));
  }
  feed(static_cast<std::uint64_t>(data.y[row]));
  return h;
}

}  // namespace

LinearParams TrainLinear(const EmbeddingDataset& train, const TrainSpec& spec) {
  if (train.size() < 1) throw ValidationError("empty training set");
  if (spec.epochs < 1) throw ValidationError("epochs must be >= 1");
  if (spec.batch_size < 1) throw ValidationError("batch size must be >= 1");
  const std::set<int> present(train.y.begin(), train.y.end());
  if (present.size() == 1) {
    Warn("training set has a single class (" +
         std::to_string(*present.begin()) + "); classifier is degenerate");
  }

  LinearParams params = LinearParams::Zeros(train.dim(), train.num_classes());
  OptimizerState adam = OptimizerState::Adam(spec.learning_rate);
  const ParamRefs refs = params.stack.Params();

  const int n = train.size();
  std::vector<std::uint64_t> row_keys(n);
  for (int i = 0; i < n; ++i) row_keys[i] = RowKey(train, i);
  std::vector<std::pair<std::uint64_t, int>> order(n);
  std::vector<int> batch;
  for (int epoch = 0; epoch < spec.epochs; ++epoch) {
    const std::uint64_t epoch_salt = DeriveStreamSeed(
        spec.seed,
        {kServerStream, static_cast<std::uint64_t>(epoch), Purpose::kShuffle});
    for (int i = 0; i < n; ++i) order[i] = {Mix64(row_keys[i] ^ epoch_salt), i};
    std::sort(order.begin(), order.end());
    for (int start = 0; start < n; start += spec.batch_size) {
      const int end = std::min(n, start + spec.batch_size);
      batch.clear();
      for (int k = start; k < end; ++k) batch.push_back(order[k].second);
      const EmbeddingDataset b = train.Subset(batch);
      Gradients g = CrossEntropyPerSampleGrads(params, b.x, b.y).grads.Sum();
      Scale(g, 1.0 / static_cast<double>(b.size()));
      AdamStep(adam, refs, g);
    }
  }
  return params;
}

Matrix InterpolateProba(const InterpolatedClassifier& classifier,
                        const Matrix& x) {
  const double lambda = classifier.lambda;
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw ValidationError("lambda must lie in [0, 1]");
  }
  const Matrix local = ClassifierPredictProba(classifier.local, x);
  const Matrix global = ClassifierPredictProba(classifier.global, x);
  if (local.cols() != global.cols()) {
    throw ShapeError("local and global classifiers disagree on K");
  }
  return lambda * local + (1.0 - lambda) * global;
}

std::vector<int> ArgmaxRows(const Matrix& probabilities) {
  std::vector<int> out(probabilities.rows());
  for (Eigen::Index i = 0; i < probabilities.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < probabilities.cols(); ++c) {
      if (probabilities(i, c) > probabilities(i, best)) best = c;
    }
    out[i] = static_cast<int>(best);
  }
  return out;
}

std::vector<int> Predict(const InterpolatedClassifier& classifier,
                         const Matrix& x) {
  return ArgmaxRows(InterpolateProba(classifier, x));
}

const std::array<double, 11>& LambdaGrid() {
  static const std::array<double, 11> grid = [] {
    std::array<double, 11> g{};
    for (int i = 0; i <= 10; ++i) g[i] = i / 10.0;
    return g;
  }();
  return grid;
}

LambdaSelection SelectLambda(const LinearParams& local,
                             const LinearParams& global,
                             const EmbeddingDataset& val) {
  if (val.size() < 1) throw ValidationError("empty validation set");
  const Matrix p_local = ClassifierPredictProba(local, val.x);
  const Matrix p_global = ClassifierPredictProba(global, val.x);
  const int classes = static_cast<int>(p_local.cols());
  LambdaSelection best;
  best.score = -1.0;
  for (size_t k = 0; k < LambdaGrid().size(); ++k) {
    const double lambda = LambdaGrid()[k];
    const std::vector<int> pred =
        ArgmaxRows(lambda * p_local + (1.0 - lambda) * p_global);
    const double score = BalancedAccuracy(pred, val.y, classes);
    best.grid_scores[k] = score;
    if (score >= best.score) {
      best.score = score;
      best.lambda = lambda;
    }
  }
  return best;
}

}  // namespace fedembed
