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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "fedembed/error.h"
#include "fedembed/eval.h"
#include "test_util.h"

namespace fedembed {
namespace {

using testing::MakeDataset;
using testing::RandomLabels;
using testing::RandomMatrix;

struct BlobSplit {
  EmbeddingDataset train;
  EmbeddingDataset test;
};

BlobSplit Blobs(std::uint64_t seed, int classes, int per_class, double s) {
  RngStream rng(seed, {kServerStream, 0, Purpose::kData});
  const EmbeddingDataset all = SynthBlobs(classes, 16, per_class, s, rng);
  RngStream split_rng(seed, {0, 0, Purpose::kSplit});
  const SplitIndices idx =
      SplitTrainValTest(all.y, classes, SplitSpec{}, split_rng);
  return {all.Subset(idx.train), all.Subset(idx.test)};
}

LinearParams RandomLinear(RngStream& rng, int d, int k, double scale) {
  Vector bias(k);
  for (int c = 0; c < k; ++c) bias[c] = scale * rng.Normal();
  return LinearParams::FromWeights(RandomMatrix(rng, k, d, scale), bias);
}

TEST(TrainLinear, SeparableBlobs) {
  const BlobSplit data = Blobs(1, 3, 600, 8.0);
  const LinearParams p = TrainLinear(data.train, TrainSpec{});
  const InterpolatedClassifier c{p, p, 1.0};
  EXPECT_GE(Accuracy(Predict(c, data.test.x), data.test.y), 0.99);
}

TEST(TrainLinear, ZeroSeparationIsChance) {
  const BlobSplit data = Blobs(2, 2, 8334, 0.0);
  TrainSpec spec;
  spec.epochs = 5;
  const LinearParams p = TrainLinear(data.train, spec);
  const InterpolatedClassifier c{p, p, 0.0};
  EXPECT_NEAR(BalancedAccuracy(Predict(c, data.test.x), data.test.y, 2), 0.5,
              0.05);
}

TEST(TrainLinear, RowOrderDoesNotMatter) {
  const BlobSplit data = Blobs(3, 3, 50, 2.0);
  std::vector<int> reversed(data.train.size());
  for (int i = 0; i < data.train.size(); ++i) {
    reversed[i] = data.train.size() - 1 - i;
  }
  TrainSpec spec;
  spec.epochs = 10;
  const LinearParams a = TrainLinear(data.train, spec);
  const LinearParams b = TrainLinear(data.train.Subset(reversed), spec);
  EXPECT_TRUE(a.weight() == b.weight());
  EXPECT_TRUE(a.bias() == b.bias());
}

TEST(TrainLinear, DuplicatedRowsWithDoubledBatch) {
  const BlobSplit data = Blobs(4, 3, 50, 2.0);
  const std::vector<EmbeddingDataset> parts = {data.train, data.train};
  const EmbeddingDataset doubled = Concatenate(parts);
  TrainSpec spec;
  spec.epochs = 10;
  const LinearParams a = TrainLinear(data.train, spec);
  spec.batch_size *= 2;
  const LinearParams b = TrainLinear(doubled, spec);
  // Only the summation order differs.
  EXPECT_LT((a.weight() - b.weight()).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LT((a.bias() - b.bias()).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(TrainLinear, DeterministicAndSeeded) {
  const BlobSplit data = Blobs(5, 3, 30, 1.0);
  TrainSpec spec;
  spec.epochs = 3;
  spec.batch_size = 7;
  const LinearParams a = TrainLinear(data.train, spec);
  EXPECT_TRUE(a.weight() == TrainLinear(data.train, spec).weight());
  spec.seed = 9;
  EXPECT_FALSE(a.weight() == TrainLinear(data.train, spec).weight());
}

TEST(TrainLinear, Errors) {
  const EmbeddingDataset one =
      MakeDataset(Matrix::Ones(3, 2), std::vector<int>{1, 1, 1}, 2);
  EXPECT_NO_THROW(TrainLinear(one, TrainSpec{}));  // warns only
  TrainSpec bad;
  bad.epochs = 0;
  EXPECT_THROW(TrainLinear(one, bad), ValidationError);
}

TEST(Interpolate, EndpointsAreExact) {
  RngStream rng(6, {0, 0, Purpose::kData});
  for (int trial = 0; trial < 20; ++trial) {
    const LinearParams local = RandomLinear(rng, 5, 4, 2.0);
    const LinearParams global = RandomLinear(rng, 5, 4, 2.0);
    const Matrix x = RandomMatrix(rng, 30, 5);
    const Matrix pl = ClassifierPredictProba(local, x);
    const Matrix pg = ClassifierPredictProba(global, x);
    EXPECT_TRUE(InterpolateProba({local, global, 1.0}, x) == pl);
    EXPECT_TRUE(InterpolateProba({local, global, 0.0}, x) == pg);
    EXPECT_EQ(Predict({local, global, 1.0}, x), ArgmaxRows(pl));
    EXPECT_EQ(Predict({local, global, 0.0}, x), ArgmaxRows(pg));
    const Matrix mid = InterpolateProba({local, global, 0.3}, x);
    EXPECT_LT((mid.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-12);
    EXPECT_GE(mid.minCoeff(), 0.0);
  }
}

TEST(Interpolate, HalfwayArithmetic) {
  // Logits chosen so that softmax gives [0.8, 0.2] and [0.2, 0.8].
  const double t = std::log(4.0);
  Matrix wl = Matrix::Zero(2, 1);
  Matrix wg = Matrix::Zero(2, 1);
  Vector bl(2), bg(2);
  bl << t, 0.0;
  bg << 0.0, t;
  const InterpolatedClassifier c{LinearParams::FromWeights(wl, bl),
                                 LinearParams::FromWeights(wg, bg), 0.5};
  const Matrix p = InterpolateProba(c, Matrix::Zero(1, 1));
  EXPECT_NEAR(p(0, 0), 0.5, 1e-15);
  EXPECT_NEAR(p(0, 1), 0.5, 1e-15);
  EXPECT_THROW(InterpolateProba({c.local, c.global, 1.5}, Matrix::Zero(1, 1)),
               ValidationError);
}

TEST(Predict, TieGoesToLowestClass) {
  Matrix p(3, 3);
  p << 0.5, 0.5, 0.0,  //
      0.1, 0.7, 0.2,   //
      0.2, 0.4, 0.4;
  EXPECT_EQ(ArgmaxRows(p), (std::vector<int>{0, 1, 1}));
}

TEST(Predict, ShiftInvariantPerModel) {
  RngStream rng(7, {0, 0, Purpose::kData});
  const LinearParams local = RandomLinear(rng, 4, 3, 1.0);
  const LinearParams global = RandomLinear(rng, 4, 3, 1.0);
  const Matrix x = RandomMatrix(rng, 50, 4);
  LinearParams shifted_local = local;
  LinearParams shifted_global = global;
  shifted_local.stack.mutable_layers()[0].bias.array() += 3.0;
  shifted_global.stack.mutable_layers()[0].bias.array() -= 2.0;
  EXPECT_EQ(Predict({local, global, 0.4}, x),
            Predict({shifted_local, shifted_global, 0.4}, x));
}

TEST(SelectLambda, GridHasElevenPoints) {
  const auto& grid = LambdaGrid();
  ASSERT_EQ(grid.size(), 11u);
  for (int i = 0; i <= 10; ++i) EXPECT_DOUBLE_EQ(grid[i], i / 10.0);
}

TEST(SelectLambda, BeatsBothEndpointsOnRandomFixtures) {
  RngStream rng(8, {0, 0, Purpose::kData});
  for (int trial = 0; trial < 50; ++trial) {
    const int k = 2 + rng.UniformIndex(3);
    const LinearParams local = RandomLinear(rng, 3, k, 1.5);
    const LinearParams global = RandomLinear(rng, 3, k, 1.5);
    const EmbeddingDataset val =
        MakeDataset(RandomMatrix(rng, 25, 3), RandomLabels(rng, 25, k), k);
    const LambdaSelection sel = SelectLambda(local, global, val);
    const double at0 =
        BalancedAccuracy(Predict({local, global, 0.0}, val.x), val.y, k);
    const double at1 =
        BalancedAccuracy(Predict({local, global, 1.0}, val.x), val.y, k);
    EXPECT_GE(sel.score, std::max(at0, at1));
    EXPECT_EQ(sel.score,
              BalancedAccuracy(Predict({local, global, sel.lambda}, val.x),
                               val.y, k));
    EXPECT_EQ(sel.score, *std::max_element(sel.grid_scores.begin(),
                                           sel.grid_scores.end()));
  }
}

TEST(SelectLambda, PerfectLocalWins) {
  const BlobSplit data = Blobs(9, 3, 100, 8.0);
  const LinearParams local = TrainLinear(data.train, TrainSpec{});
  const LinearParams global = LinearParams::Zeros(16, 3);
  const LambdaSelection sel = SelectLambda(local, global, data.test);
  EXPECT_EQ(sel.lambda, 1.0);
  EXPECT_EQ(sel.score, 1.0);
}

TEST(SelectLambda, TiesPreferLocal) {
  RngStream rng(10, {0, 0, Purpose::kData});
  const LinearParams p = RandomLinear(rng, 3, 3, 1.0);
  const EmbeddingDataset val =
      MakeDataset(RandomMatrix(rng, 20, 3), RandomLabels(rng, 20, 3), 3);
  const LambdaSelection sel = SelectLambda(p, p, val);
  EXPECT_EQ(sel.lambda, 1.0);
  for (double s : sel.grid_scores) EXPECT_EQ(s, sel.score);
  const EmbeddingDataset empty;
  EXPECT_THROW(SelectLambda(p, p, empty), ValidationError);
}

}  // namespace
}  // namespace fedembed
