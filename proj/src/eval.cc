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
#include "fedembed/eval.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>

#include "fedembed/error.h"

namespace fedembed {
namespace {

void CheckSameLength(std::span<const int> predicted,
                     std::span<const int> truth) {
  if (truth.empty()) throw ValidationError("empty label vector");
  if (predicted.size() != truth.size()) {
    throw ShapeError("predicted and true label vectors differ in length");
  }
}

void CheckComparable(const EmbeddingDataset& a, const EmbeddingDataset& b) {
  if (a.size() < 1 || b.size() < 1) {
    throw ValidationError("Wasserstein distance needs non-empty datasets");
  }
  if (a.dim() != b.dim()) {
    throw ShapeError("Wasserstein distance between widths " +
                     std::to_string(a.dim()) + " and " +
                     std::to_string(b.dim()));
  }
}

}  // namespace

double Accuracy(std::span<const int> predicted, std::span<const int> truth) {
  CheckSameLength(predicted, truth);
  int correct = 0;
  for (size_t i = 0; i < truth.size(); ++i) correct += predicted[i] == truth[i];
  return static_cast<double>(correct) / static_cast<double>(truth.size());
}

double BalancedAccuracy(std::span<const int> predicted,
                        std::span<const int> truth, int num_classes) {
  CheckSameLength(predicted, truth);
  std::vector<int> support(num_classes, 0);
  std::vector<int> hits(num_classes, 0);
  for (size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= num_classes) {
      throw ValidationError("true label outside [0, K)");
    }
    ++support[truth[i]];
    hits[truth[i]] += predicted[i] == truth[i];
  }
  double total = 0.0;
  int present = 0;
  for (int c = 0; c < num_classes; ++c) {
    if (support[c] == 0) continue;
    total += static_cast<double>(hits[c]) / support[c];
    ++present;
  }
  return total / present;
}

double Wasserstein1d(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) {
    throw ValidationError("Wasserstein distance needs non-empty samples");
  }
  std::vector<double> xs(a.begin(), a.end());
  std::vector<double> ys(b.begin(), b.end());
  std::sort(xs.begin(), xs.end());
  std::sort(ys.begin(), ys.end());
  const double n = static_cast<double>(xs.size());
  const double m = static_cast<double>(ys.size());
  if (xs.size() == ys.size()) {
    double total = 0.0;
    for (size_t i = 0; i < xs.size(); ++i) total += std::abs(xs[i] - ys[i]);
    return total / n;
  }
  // Walk the merged breakpoints i/n and j/m of the two quantile functions.
  // Comparing i*m against j*n keeps the breakpoint order exact.
  double total = 0.0;
  size_t i = 0;
  size_t j = 0;
  double u = 0.0;
  while (i < xs.size() && j < ys.size()) {
    const auto next_i = static_cast<std::uint64_t>(i + 1) * ys.size();
    const auto next_j = static_cast<std::uint64_t>(j + 1) * xs.size();
    const double next_u = next_i <= next_j ? (i + 1) / n : (j + 1) / m;
    total += (next_u - u) * std::abs(xs[i] - ys[j]);
    u = next_u;
    if (next_i <= next_j) ++i;
    if (next_j <= next_i) ++j;
  }
  return total;
}

double WassersteinAvg(const EmbeddingDataset& real,
                      const EmbeddingDataset& synthetic) {
  CheckComparable(real, synthetic);
  double total = 0.0;
  std::vector<double> a(real.size());
  std::vector<double> b(synthetic.size());
  for (int j = 0; j < real.dim(); ++j) {
    for (int i = 0; i < real.size(); ++i) a[i] = real.x(i, j);
    for (int i = 0; i < synthetic.size(); ++i) b[i] = synthetic.x(i, j);
    total += Wasserstein1d(a, b);
  }
  return total / real.dim();
}

double SlicedWasserstein(const EmbeddingDataset& real,
                         const EmbeddingDataset& synthetic, int projections,
                         RngStream& rng) {
  CheckComparable(real, synthetic);
  if (projections < 1) throw ValidationError("need >= 1 projection");
  double total = 0.0;
  for (int p = 0; p < projections; ++p) {
    Vector direction = GaussianSample(rng, real.dim(), 1).col(0);
    direction.normalize();
    const Vector a = real.x * direction;
    const Vector b = synthetic.x * direction;
    total += Wasserstein1d(std::span<const double>(a.data(), a.size()),
                           std::span<const double>(b.data(), b.size()));
  }
  return total / projections;
}

std::int64_t ParamCount(const MlpStack& stack) {
  std::int64_t total = 0;
  for (const Layer& layer : stack.layers()) {
    total += layer.in() * layer.out() + layer.out();
  }
  return total;
}

std::int64_t ParamCount(const CvaeParams& params) {
  return ParamCount(params.encoder) + ParamCount(params.decoder);
}

std::int64_t ParamCount(const CganParams& params) {
  return ParamCount(params.generator) + ParamCount(params.discriminator);
}

std::int64_t ParamCount(const LinearParams& params) {
  return ParamCount(params.stack);
}

MetricReport AggregateReport(std::vector<std::vector<double>> per_client,
                             std::vector<std::uint64_t> seeds) {
  if (per_client.empty()) throw ValidationError("no metric values to report");
  MetricReport report;
  for (const std::vector<double>& clients : per_client) {
    if (clients.empty()) {
      throw ValidationError("a seed reported no client values");
    }
    // Summed in sorted order so the mean does not depend on client order.
    std::vector<double> sorted = clients;
    std::sort(sorted.begin(), sorted.end());
    report.per_seed_means.push_back(
        std::accumulate(sorted.begin(), sorted.end(), 0.0) /
        static_cast<double>(sorted.size()));
  }
  const double s = static_cast<double>(report.per_seed_means.size());
  report.mean = std::accumulate(report.per_seed_means.begin(),
                                report.per_seed_means.end(), 0.0) /
                s;
  double var = 0.0;
  for (double v : report.per_seed_means) {
    var += (v - report.mean) * (v - report.mean);
  }
  report.stddev = std::sqrt(var / s);
  report.per_client = std::move(per_client);
  report.seeds = std::move(seeds);
  return report;
}

}  // namespace fedembed
