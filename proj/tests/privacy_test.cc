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
#include "fedembed/privacy.h"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "fedembed/error.h"
#include "oracles.h"
#include "test_util.h"

namespace fedembed {
namespace {

using testing::OracleRdp;

TEST(Rdp, MatchesHighPrecisionOracle) {
  for (double q : {0.001, 0.01, 0.1, 1.0}) {
    for (double sigma : {0.5, 1.0, 2.0, 4.0}) {
      for (int order = 2; order <= 32; ++order) {
        const double got = RdpSubsampledGaussian(q, sigma, order);
        const double want = OracleRdp(q, sigma, order);
        EXPECT_LE(std::abs(got - want), 1e-10 * std::abs(want))
            << "q=" << q << " sigma=" << sigma << " order=" << order;
      }
    }
  }
}

TEST(Rdp, FullBatchIsClosedForm) {
  for (double sigma : {0.5, 1.0, 2.0, 4.0}) {
    for (int order = 2; order <= 32; ++order) {
      EXPECT_EQ(RdpSubsampledGaussian(1.0, sigma, order),
                order / (2.0 * sigma * sigma));
    }
  }
}

TEST(Rdp, DegenerateInputs) {
  EXPECT_EQ(RdpSubsampledGaussian(0.0, 1.0, 4), 0.0);
  EXPECT_TRUE(std::isinf(RdpSubsampledGaussian(0.1, 0.0, 4)));
  EXPECT_THROW(RdpSubsampledGaussian(0.1, 1.0, 1), ValidationError);
  EXPECT_THROW(RdpSubsampledGaussian(1.5, 1.0, 2), ValidationError);
}

TEST(Rdp, MonotoneInQSigmaAndOrder) {
  for (int order : {2, 8, 32}) {
    double prev = 0.0;
    for (double q : {0.001, 0.01, 0.1, 0.5, 1.0}) {
      const double v = RdpSubsampledGaussian(q, 1.0, order);
      EXPECT_GT(v, prev);
      prev = v;
    }
    prev = std::numeric_limits<double>::infinity();
    for (double sigma : {0.5, 1.0, 2.0, 4.0}) {
      const double v = RdpSubsampledGaussian(0.05, sigma, order);
      EXPECT_LT(v, prev);
      prev = v;
    }
  }
  double prev = 0.0;
  for (int order = 2; order <= 64; ++order) {
    const double v = RdpSubsampledGaussian(0.05, 1.0, order);
    EXPECT_GE(v, prev);
    prev = v;
  }
}

TEST(RdpToDp, MinimizesOverOrders) {
  const std::vector<int> orders = {2, 3};
  const std::vector<double> rdp = {1.0, 0.2};
  const double delta = 1e-5;
  const DpGuarantee g = RdpToDp(orders, rdp, delta);
  const double a2 = 1.0 + std::log(1e5);
  const double a3 = 0.2 + std::log(1e5) / 2.0;
  EXPECT_DOUBLE_EQ(g.epsilon, std::min(a2, a3));
  EXPECT_EQ(g.order, 3);
}

TEST(RdpToDp, CompositionIsAdditive) {
  const auto& orders = DefaultOrders();
  std::vector<double> rdp;
  for (int a : orders) rdp.push_back(100 * RdpSubsampledGaussian(0.1, 1.5, a));
  EXPECT_DOUBLE_EQ(ComposedEpsilon(0.1, 1.5, 100, 1e-5, orders).epsilon,
                   RdpToDp(orders, rdp, 1e-5).epsilon);
}

TEST(CalibrateNoise, RoundTrip) {
  const auto& orders = DefaultOrders();
  for (double q : {0.01, 0.05, 0.3, 1.0}) {
    for (std::int64_t steps : {10, 250, 2500}) {
      if (q == 1.0 && steps == 2500) {
        // Needs sigma above the search bracket.
        EXPECT_THROW(CalibrateNoise(1.0, 1e-4, q, steps, orders),
                     CalibrationError);
        continue;
      }
      const double sigma = CalibrateNoise(1.0, 1e-4, q, steps, orders);
      const double eps = ComposedEpsilon(q, sigma, steps, 1e-4, orders).epsilon;
      EXPECT_LE(eps, 1.0) << "q=" << q << " steps=" << steps;
      EXPECT_GE(eps, 0.999) << "q=" << q << " steps=" << steps;
    }
  }
}

TEST(CalibrateNoise, EpsilonDecreasesWithSigma) {
  const auto& orders = DefaultOrders();
  double prev = std::numeric_limits<double>::infinity();
  for (double sigma = 0.5; sigma < 20.0; sigma *= 1.5) {
    const double eps = ComposedEpsilon(0.05, sigma, 500, 1e-5, orders).epsilon;
    EXPECT_LT(eps, prev);
    prev = eps;
  }
}

TEST(CalibrateNoise, MoreStepsNeedMoreNoise) {
  const auto& orders = DefaultOrders();
  double prev = 0.0;
  for (std::int64_t steps : {50, 100, 200, 400, 800}) {
    const double sigma = CalibrateNoise(1.0, 1e-4, 0.05, steps, orders);
    EXPECT_GT(sigma, prev);
    prev = sigma;
  }
  // A loose target sits at the bracket floor.
  EXPECT_EQ(CalibrateNoise(1e6, 1e-4, 0.05, 10, orders), 0.1);
}

TEST(CalibrateNoise, UnreachableTargetThrows) {
  EXPECT_THROW(CalibrateNoise(1e-6, 1e-10, 1.0, 1000000, DefaultOrders()),
               CalibrationError);
}

TEST(Accountant, TracksSteps) {
  PrivacyAccountant acc(0.05, 1.2, 1e-5);
  EXPECT_EQ(acc.Spent().epsilon, 0.0);
  acc.Step(10);
  acc.Step();
  EXPECT_EQ(acc.steps(), 11);
  const PrivacySpent spent = acc.Spent();
  EXPECT_DOUBLE_EQ(
      spent.epsilon,
      ComposedEpsilon(0.05, 1.2, 11, 1e-5, DefaultOrders()).epsilon);
  EXPECT_DOUBLE_EQ(
      acc.EpsilonAfter(4),
      ComposedEpsilon(0.05, 1.2, 15, 1e-5, DefaultOrders()).epsilon);
}

// One layer whose per-sample gradients are delta_i a_i^T.
PerSampleGrads RankOneGrads(const Matrix& inputs, const Matrix& deltas) {
  std::vector<LayerFactors> layers(1);
  layers[0].inputs = inputs;
  layers[0].deltas = deltas;
  return PerSampleGrads(std::move(layers));
}

double MaterializedNorm(const Gradients& g) {
  return std::sqrt(SquaredNorm(g));
}

TEST(Clipping, PostClipNormsBoundedOnAdversarialFixtures) {
  const double c = 1.5;
  std::vector<std::pair<Matrix, Matrix>> fixtures;
  Matrix a(4, 3), d(4, 2);
  a << 1e150, 0, 0, 1e-150, 1e-150, 0, 0, 0, 0, 1, 1, 1;
  d << 1e-100, 1e100, 1e-300, 1e-300, 0, 0, 1.5 / std::sqrt(4.0), 0;
  fixtures.emplace_back(a, d);
  RngStream rng(1, {0, 0, Purpose::kInit});
  for (double scale : {1e-8, 1.0, 1e6, 1e60}) {
    fixtures.emplace_back(testing::RandomMatrix(rng, 6, 5, scale),
                          testing::RandomMatrix(rng, 6, 4, 1.0));
  }
  for (const auto& [inputs, deltas] : fixtures) {
    const ClippedGrads clipped = ClipPerSample(RankOneGrads(inputs, deltas), c);
    for (int i = 0; i < clipped.num_samples(); ++i) {
      EXPECT_LE(clipped.norms()[i], c * (1 + 1e-9));
      EXPECT_LE(MaterializedNorm(clipped.Materialize(i)), c * (1 + 1e-9));
    }
  }
}

TEST(Clipping, CancellingRowsOfOneSample) {
  // Two rows of one sample whose contributions almost cancel.
  std::vector<LayerFactors> layers(1);
  layers[0].inputs = Matrix(2, 2);
  layers[0].inputs << 1e8, 1.0, 1e8, 1.0;
  layers[0].deltas = Matrix(2, 1);
  layers[0].deltas << 1e8, -(1e8 - 1e-3);
  const PerSampleGrads grads(layers, {0, 0}, 1);
  const double exact = MaterializedNorm(grads.Materialize(0));
  const ClippedGrads clipped = ClipPerSample(grads, 1.5);
  EXPECT_LE(MaterializedNorm(clipped.Materialize(0)), 1.5 * (1 + 1e-9));
  EXPECT_NEAR(std::sqrt(grads.SquaredNorms()[0]), exact, 1e-9 * exact);
}

TEST(Clipping, SmallGradientsAreUntouched) {
  Matrix a(2, 2), d(2, 1);
  a << 0.1, 0.2, 0.0, 0.0;
  d << 0.5, 0.0;
  const ClippedGrads clipped = ClipPerSample(RankOneGrads(a, d), 1.5);
  EXPECT_EQ(clipped.scales()[0], 1.0);
  EXPECT_EQ(clipped.scales()[1], 1.0);
  EXPECT_EQ(clipped.norms()[1], 0.0);
}

TEST(Clipping, NonFiniteGradientThrows) {
  Matrix a(1, 1), d(1, 1);
  a << std::numeric_limits<double>::infinity();
  d << 1.0;
  EXPECT_THROW(ClipPerSample(RankOneGrads(a, d), 1.5), NumericError);
}

TEST(NoisyAggregate, ZeroNoiseIsClippedMean) {
  RngStream rng(4, {0, 0, Purpose::kInit});
  const Matrix a = testing::RandomMatrix(rng, 5, 3, 3.0);
  const Matrix d = testing::RandomMatrix(rng, 5, 2, 3.0);
  const ClippedGrads clipped = ClipPerSample(RankOneGrads(a, d), 1.5);
  RngStream noise(0, {0, 0, Purpose::kDpNoise});
  const Gradients mean = NoisyAggregate(clipped, 0.0, noise);

  Gradients expected = clipped.Materialize(0);
  for (int i = 1; i < 5; ++i) AddScaled(expected, clipped.Materialize(i), 1.0);
  Scale(expected, 1.0 / 5);
  const std::vector<double> got = Flatten(mean);
  const std::vector<double> want = Flatten(expected);
  for (size_t k = 0; k < got.size(); ++k) EXPECT_NEAR(got[k], want[k], 1e-12);

  // The explicit-gradient route agrees.
  std::vector<Gradients> explicit_grads;
  for (int i = 0; i < 5; ++i) {
    explicit_grads.push_back(RankOneGrads(a, d).Materialize(i));
  }
  explicit_grads = ClipPerSample(std::move(explicit_grads), 1.5);
  const std::vector<double> dense =
      Flatten(NoisyAggregate(explicit_grads, 1.5, 0.0, noise));
  for (size_t k = 0; k < got.size(); ++k) EXPECT_NEAR(got[k], dense[k], 1e-12);
}

TEST(NoisyAggregate, NoiseHasExpectedScale) {
  // One zero gradient with many coordinates: output = N(0, (sigma C)^2) / n.
  std::vector<LayerFactors> layers(1);
  layers[0].inputs = Matrix::Zero(1, 200);
  layers[0].deltas = Matrix::Zero(1, 100);
  const ClippedGrads clipped =
      ClipPerSample(PerSampleGrads(std::move(layers)), 2.0);
  RngStream rng(8, {0, 0, Purpose::kDpNoise});
  const std::vector<double> v = Flatten(NoisyAggregate(clipped, 1.5, rng));
  double sum = 0.0, sq = 0.0;
  for (double x : v) {
    sum += x;
    sq += x * x;
  }
  const double mean = sum / v.size();
  const double var = sq / v.size() - mean * mean;
  EXPECT_NEAR(mean, 0.0, 0.05);
  EXPECT_NEAR(std::sqrt(var), 3.0, 0.05);
}

TEST(NoisyAggregate, ObserverSeesPostClipNorms) {
  double max_norm = 0.0;
  SetAggregationObserver([&](std::span<const double> norms, double) {
    for (double n : norms) max_norm = std::max(max_norm, n);
  });
  RngStream rng(2, {0, 0, Purpose::kInit});
  const ClippedGrads clipped =
      ClipPerSample(RankOneGrads(testing::RandomMatrix(rng, 8, 4, 100.0),
                                 testing::RandomMatrix(rng, 8, 3, 100.0)),
                    1.5);
  NoisyAggregate(clipped, 1.0, rng);
  SetAggregationObserver({});
  EXPECT_GT(max_norm, 1.0);
  EXPECT_LE(max_norm, 1.5 * (1 + 1e-12));
}

TEST(DpConfig, Validate) {
  DpConfig ok;
  EXPECT_NO_THROW(ok.Validate());
  DpConfig bad = ok;
  bad.clip_norm = 0.0;
  EXPECT_THROW(bad.Validate(), ValidationError);
  bad = ok;
  bad.delta = 1.0;
  EXPECT_THROW(bad.Validate(), ValidationError);
}

}  // namespace
}  // namespace fedembed
