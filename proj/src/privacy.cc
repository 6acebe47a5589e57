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

#include <cmath>
#include <limits>
#include <mutex>
#include <sstream>
#include <utility>

#include "fedembed/error.h"

namespace fedembed {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::mutex& ObserverMutex() {
  static std::mutex mu;
  return mu;
}

AggregationObserver& Observer() {
  static AggregationObserver observer;
  return observer;
}

void NotifyObserver(std::span<const double> norms, double clip_norm) {
  std::lock_guard<std::mutex> lock(ObserverMutex());
  if (Observer()) Observer()(norms, clip_norm);
}

void AddNoise(Gradients& g, double stddev, RngStream& rng) {
  if (stddev == 0.0) return;
  for (LayerGrad& layer : g) {
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) {
      layer.weight.data()[i] += stddev * rng.Normal();
    }
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) {
      layer.bias[i] += stddev * rng.Normal();
    }
  }
}

void CheckClipNorm(double clip_norm) {
  if (!(clip_norm > 0.0)) throw ValidationError("clip norm must be > 0");
}

// log(exp(x) - 1) for x > 0.
double LogExpm1(double x) {
  if (x > 30.0) return x + std::log1p(-std::exp(-x));
  return std::log(std::expm1(x));
}

}  // namespace

void DpConfig::Validate() const {
  if (!(epsilon_target > 0.0)) throw ValidationError("epsilon must be > 0");
  if (!(delta >= 0.0 && delta < 1.0)) {
    throw ValidationError("delta must lie in [0, 1)");
  }
  CheckClipNorm(clip_norm);
  if (!(noise_multiplier >= 0.0)) {
    throw ValidationError("noise multiplier must be >= 0");
  }
  if (!(sample_rate > 0.0 && sample_rate <= 1.0)) {
    throw ValidationError("sample rate must lie in (0, 1]");
  }
  if (planned_steps < 1) throw ValidationError("planned steps must be >= 1");
}

Gradients ClippedGrads::Materialize(int sample) const {
  Gradients g = grads_.Materialize(sample);
  Scale(g, scales_[sample]);
  return g;
}

ClippedGrads ClipPerSample(PerSampleGrads grads, double clip_norm) {
  CheckClipNorm(clip_norm);
  ClippedGrads out;
  out.clip_norm_ = clip_norm;
  const std::vector<double> norms = grads.Norms();
  out.scales_.resize(norms.size());
  out.norms_.resize(norms.size());
  for (size_t i = 0; i < norms.size(); ++i) {
    const double norm = norms[i];
    if (!std::isfinite(norm)) {
      throw NumericError("non-finite per-sample gradient norm");
    }
    out.scales_[i] = norm > clip_norm ? clip_norm / norm : 1.0;
    out.norms_[i] = norm * out.scales_[i];
  }
  out.grads_ = std::move(grads);
  return out;
}

std::vector<Gradients> ClipPerSample(std::vector<Gradients> grads,
                                     double clip_norm) {
  CheckClipNorm(clip_norm);
  for (Gradients& g : grads) {
    const std::vector<double> flat = Flatten(g);
    const double norm = Eigen::Map<const Vector>(
                            flat.data(), static_cast<Eigen::Index>(flat.size()))
                            .stableNorm();
    if (!std::isfinite(norm)) {
      throw NumericError("non-finite per-sample gradient norm");
    }
    if (norm > clip_norm) Scale(g, clip_norm / norm);
  }
  return grads;
}

Gradients NoisyAggregate(const ClippedGrads& clipped, double noise_multiplier,
                         RngStream& rng) {
  const int n = clipped.num_samples();
  if (n < 1) throw ValidationError("noisy aggregation needs >= 1 sample");
  if (!(noise_multiplier >= 0.0)) {
    throw ValidationError("noise multiplier must be >= 0");
  }
  NotifyObserver(clipped.norms_, clipped.clip_norm_);
  Gradients sum = clipped.grads_.WeightedSum(clipped.scales_);
  AddNoise(sum, noise_multiplier * clipped.clip_norm_, rng);
  Scale(sum, 1.0 / n);
  return sum;
}

Gradients NoisyAggregate(std::span<const Gradients> clipped, double clip_norm,
                         double noise_multiplier, RngStream& rng) {
  if (clipped.empty()) {
    throw ValidationError("noisy aggregation needs >= 1 sample");
  }
  CheckClipNorm(clip_norm);
  Gradients sum = clipped.front();
  for (size_t i = 1; i < clipped.size(); ++i) AddScaled(sum, clipped[i], 1.0);
  AddNoise(sum, noise_multiplier * clip_norm, rng);
  Scale(sum, 1.0 / static_cast<double>(clipped.size()));
  return sum;
}

void SetAggregationObserver(AggregationObserver observer) {
  std::lock_guard<std::mutex> lock(ObserverMutex());
  Observer() = std::move(observer);
}

const std::vector<int>& DefaultOrders() {
  static const std::vector<int> orders = [] {
    std::vector<int> o;
    for (int a = 2; a <= 64; ++a) o.push_back(a);
    o.push_back(128);
    o.push_back(256);
    return o;
  }();
  return orders;
}

double RdpSubsampledGaussian(double q, double sigma, int order) {
  if (order < 2) throw ValidationError("RDP order must be an integer >= 2");
  if (!(q >= 0.0 && q <= 1.0)) throw ValidationError("q must lie in [0, 1]");
  if (!(sigma >= 0.0)) throw ValidationError("sigma must be >= 0");
  if (q == 0.0) return 0.0;
  if (sigma == 0.0) return kInf;
  const double alpha = order;
  if (q == 1.0) return alpha / (2.0 * sigma * sigma);

  // The k = 0 and k = 1 terms sum with the rest of the binomial mass to 1,
  // so ln A = log1p(sum_{k>=2} C(a,k)(1-q)^(a-k) q^k (exp(k(k-1)/2s^2) - 1)).
  const double log_q = std::log(q);
  const double log_1mq = std::log1p(-q);
  double log_binom = std::log(alpha);  // ln C(a, 1)
  double log_excess = -kInf;
  for (int k = 2; k <= order; ++k) {
    log_binom += std::log(alpha - k + 1.0) - std::log(static_cast<double>(k));
    const double exponent = k * (k - 1.0) / (2.0 * sigma * sigma);
    const double term =
        log_binom + (alpha - k) * log_1mq + k * log_q + LogExpm1(exponent);
    if (term == -kInf) continue;
    const double hi = std::max(log_excess, term);
    log_excess = hi + std::log1p(std::exp(-std::abs(log_excess - term)));
  }
  const double log_a = log_excess > 0.0
                           ? log_excess + std::log1p(std::exp(-log_excess))
                           : std::log1p(std::exp(log_excess));
  return log_a / (alpha - 1.0);
}

DpGuarantee RdpToDp(std::span<const int> orders, std::span<const double> rdp,
                    double delta) {
  if (orders.empty()) throw ValidationError("empty RDP order grid");
  if (orders.size() != rdp.size()) {
    throw ValidationError("one RDP value per order required");
  }
  if (!(delta > 0.0 && delta < 1.0)) {
    throw ValidationError("delta must lie in (0, 1) for RDP conversion");
  }
  DpGuarantee best{kInf, orders.front()};
  const double log_inv_delta = -std::log(delta);
  for (size_t i = 0; i < orders.size(); ++i) {
    if (orders[i] < 2) throw ValidationError("RDP orders must be >= 2");
    const double eps = rdp[i] + log_inv_delta / (orders[i] - 1.0);
    if (eps < best.epsilon) best = {eps, orders[i]};
  }
  best.epsilon = std::max(best.epsilon, 0.0);
  return best;
}

DpGuarantee ComposedEpsilon(double q, double sigma, std::int64_t steps,
                            double delta, std::span<const int> orders) {
  std::vector<double> rdp(orders.size());
  for (size_t i = 0; i < orders.size(); ++i) {
    rdp[i] =
        static_cast<double>(steps) * RdpSubsampledGaussian(q, sigma, orders[i]);
  }
  return RdpToDp(orders, rdp, delta);
}

double CalibrateNoise(double epsilon_target, double delta, double q,
                      std::int64_t steps, std::span<const int> orders) {
  if (!(epsilon_target > 0.0)) {
    throw ValidationError("epsilon target must be > 0");
  }
  if (steps < 1) throw ValidationError("steps must be >= 1");
  auto eps_at = [&](double sigma) {
    return ComposedEpsilon(q, sigma, steps, delta, orders).epsilon;
  };
  double lo = kSigmaLowerBound;
  double hi = kSigmaUpperBound;
  if (eps_at(lo) <= epsilon_target) return lo;
  const double eps_hi = eps_at(hi);
  if (eps_hi > epsilon_target) {
    std::ostringstream msg;
    msg << "cannot reach epsilon=" << epsilon_target << " with sigma <= " << hi
        << " (epsilon there is " << eps_hi << "; q=" << q << ", steps=" << steps
        << ", delta=" << delta << ")";
    throw CalibrationError(msg.str());
  }
  while (hi - lo > 1e-9 * lo) {
    const double mid = 0.5 * (lo + hi);
    if (eps_at(mid) <= epsilon_target) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return hi;
}

PrivacyAccountant::PrivacyAccountant(double sample_rate,
                                     double noise_multiplier, double delta,
                                     std::vector<int> orders)
    : q_(sample_rate),
      sigma_(noise_multiplier),
      delta_(delta),
      orders_(std::move(orders)) {
  per_step_.reserve(orders_.size());
  for (int a : orders_) {
    per_step_.push_back(RdpSubsampledGaussian(q_, sigma_, a));
  }
}

double PrivacyAccountant::EpsilonAfter(std::int64_t extra) const {
  std::vector<double> rdp(per_step_.size());
  for (size_t i = 0; i < rdp.size(); ++i) {
    const std::int64_t total = steps_ + extra;
    rdp[i] = total == 0 ? 0.0 : static_cast<double>(total) * per_step_[i];
  }
  return RdpToDp(orders_, rdp, delta_).epsilon;
}

PrivacySpent PrivacyAccountant::Spent() const {
  PrivacySpent spent;
  spent.orders = orders_;
  spent.rdp_values.resize(per_step_.size());
  for (size_t i = 0; i < per_step_.size(); ++i) {
    spent.rdp_values[i] =
        steps_ == 0 ? 0.0 : static_cast<double>(steps_) * per_step_[i];
  }
  spent.steps_taken = steps_;
  spent.delta = delta_;
  if (steps_ == 0) return spent;  // nothing released yet
  const DpGuarantee g = RdpToDp(orders_, spent.rdp_values, delta_);
  spent.epsilon = g.epsilon;
  spent.best_order = g.order;
  return spent;
}

}  // namespace fedembed
