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
#ifndef FEDEMBED_PRIVACY_H_
#define FEDEMBED_PRIVACY_H_

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "fedembed/mlp.h"
#include "fedembed/rng.h"

namespace fedembed {

struct DpConfig {
  double epsilon_target = 1.0;
  double delta = 1e-4;
  double clip_norm = 1.5;
  double noise_multiplier = 0.0;
  double sample_rate = 1.0;
  std::int64_t planned_steps = 1;

  // Throws ValidationError unless eps > 0, delta in [0, 1), C > 0,
  // sigma >= 0, q in (0, 1] and T >= 1.
  void Validate() const;
};

// Per-sample gradients after clipping to an L2 ball. Only ClipPerSample
// creates these, so NoisyAggregate cannot see an unclipped gradient.
class ClippedGrads {
 public:
  int num_samples() const { return grads_.num_samples(); }
  double clip_norm() const { return clip_norm_; }
  // Post-clip L2 norm of each sample's gradient.
  const std::vector<double>& norms() const { return norms_; }
  // The factor each sample was multiplied by, min(1, C / ||g||).
  const std::vector<double>& scales() const { return scales_; }
  Gradients Materialize(int sample) const;

 private:
  friend ClippedGrads ClipPerSample(PerSampleGrads grads, double clip_norm);
  friend Gradients NoisyAggregate(const ClippedGrads& clipped,
                                  double noise_multiplier, RngStream& rng);

  PerSampleGrads grads_;
  std::vector<double> scales_;
  std::vector<double> norms_;
  double clip_norm_ = 0.0;
};

// g_i <- g_i * min(1, C / ||g_i||), the norm taken jointly over all layers.
ClippedGrads ClipPerSample(PerSampleGrads grads, double clip_norm);
// Same on explicit gradients.
std::vector<Gradients> ClipPerSample(std::vector<Gradients> grads,
                                     double clip_norm);

// (1/n) (sum_i g_i + N(0, sigma^2 C^2 I)). Noise is drawn layer by layer,
// weight entries row-major then bias.
Gradients NoisyAggregate(const ClippedGrads& clipped, double noise_multiplier,
                         RngStream& rng);
Gradients NoisyAggregate(std::span<const Gradients> clipped, double clip_norm,
                         double noise_multiplier, RngStream& rng);

// Test hook: invoked by NoisyAggregate(ClippedGrads) with the post-clip
// norms of every aggregated sample. Pass an empty function to remove.
using AggregationObserver =
    std::function<void(std::span<const double> norms, double clip_norm)>;
void SetAggregationObserver(AggregationObserver observer);

// Integer orders 2..64 plus 128 and 256.
const std::vector<int>& DefaultOrders();

// RDP at integer order `order` of one step of the Poisson-subsampled
// Gaussian mechanism:
//   1/(a-1) ln sum_k C(a,k) (1-q)^(a-k) q^k exp(k(k-1) / (2 sigma^2)).
// Returns +infinity for sigma == 0 and q > 0.
double RdpSubsampledGaussian(double q, double sigma, int order);

struct DpGuarantee {
  double epsilon = 0.0;
  int order = 0;
};

// eps = min_a [ rdp(a) + ln(1/delta) / (a - 1) ].
DpGuarantee RdpToDp(std::span<const int> orders, std::span<const double> rdp,
                    double delta);

// epsilon after `steps` compositions of the subsampled Gaussian.
DpGuarantee ComposedEpsilon(double q, double sigma, std::int64_t steps,
                            double delta, std::span<const int> orders);

inline constexpr double kSigmaLowerBound = 0.1;
inline constexpr double kSigmaUpperBound = 100.0;

// Smallest sigma in [0.1, 100] (to relative 1e-9) whose composed epsilon
// is <= epsilon_target. Returns the lower bound when it already suffices;
// throws CalibrationError when even the upper bound does not.
double CalibrateNoise(double epsilon_target, double delta, double q,
                      std::int64_t steps, std::span<const int> orders);

struct PrivacySpent {
  std::vector<int> orders;
  std::vector<double> rdp_values;
  std::int64_t steps_taken = 0;
  double epsilon = 0.0;
  double delta = 0.0;
  int best_order = 0;
};

// RDP accountant for one client running a fixed-(q, sigma) mechanism.
class PrivacyAccountant {
 public:
  PrivacyAccountant() = default;
  PrivacyAccountant(double sample_rate, double noise_multiplier, double delta,
                    std::vector<int> orders = DefaultOrders());

  void Step(std::int64_t count = 1) { steps_ += count; }
  std::int64_t steps() const { return steps_; }
  double noise_multiplier() const { return sigma_; }
  double sample_rate() const { return q_; }
  // epsilon that would be spent after `extra` more steps.
  double EpsilonAfter(std::int64_t extra) const;
  PrivacySpent Spent() const;

 private:
  double q_ = 1.0;
  double sigma_ = 0.0;
  double delta_ = 1e-4;
  std::vector<int> orders_;
  std::vector<double> per_step_;
  std::int64_t steps_ = 0;
};

}  // namespace fedembed

#endif  // FEDEMBED_PRIVACY_H_
