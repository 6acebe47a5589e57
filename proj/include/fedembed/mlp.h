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
#ifndef FEDEMBED_MLP_H_
#define FEDEMBED_MLP_H_

#include <cstdint>
#include <span>
#include <vector>

#include "fedembed/matrix.h"
#include "fedembed/rng.h"

namespace fedembed {

enum class Activation { kIdentity, kRelu, kSigmoid };

struct Layer {
  Matrix weight;  // [out x in]
  Vector bias;    // [out]
  Activation activation = Activation::kIdentity;

  Eigen::Index in() const { return weight.cols(); }
  Eigen::Index out() const { return weight.rows(); }
  std::int64_t ParameterCount() const { return weight.size() + bias.size(); }
};

// Gradient of one layer, shaped like the layer.
struct LayerGrad {
  Matrix weight;
  Vector bias;
};
using Gradients = std::vector<LayerGrad>;

// Mutable views over the trainable layers of a model, in a fixed order.
using ParamRefs = std::vector<Layer*>;

Gradients ZeroGradients(std::span<Layer* const> params);
void CheckGradientShapes(std::span<Layer* const> params, const Gradients& g);
void AddScaled(Gradients& acc, const Gradients& g, double scale);
void Scale(Gradients& g, double scale);
double SquaredNorm(const Gradients& g);
std::vector<double> Flatten(const Gradients& g);

// Inputs and pre-activations recorded by a forward pass, layer by layer.
struct ForwardCache {
  std::vector<Matrix> inputs;
  std::vector<Matrix> preactivations;
  Matrix output;
};

// Row-wise factorization of a linear layer's gradient. Row r contributes
// deltas.row(r)^T * inputs.row(r) to the weight gradient and deltas.row(r)
// to the bias gradient.
struct LayerFactors {
  Matrix inputs;
  Matrix deltas;
};

struct BackwardResult {
  std::vector<LayerFactors> factors;
  // d loss_r / d input_r, one row per input row.
  Matrix input_grad;
};

class MlpStack {
 public:
  MlpStack() = default;
  // Throws ShapeError if consecutive layers do not chain.
  explicit MlpStack(std::vector<Layer> layers);

  // widths = {in, h1, ..., out}. Hidden layers use `hidden`, the last layer
  // `output`. Weights and biases are U(-1/sqrt(in), 1/sqrt(in)).
  static MlpStack Create(std::span<const int> widths, Activation hidden,
                         Activation output, RngStream& rng);

  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& mutable_layers() { return layers_; }
  ParamRefs Params();

  Eigen::Index input_dim() const;
  Eigen::Index output_dim() const;
  std::int64_t ParameterCount() const;

  Matrix Forward(const Matrix& x) const;
  // Same as Forward but records what Backward needs. Throws NumericError on
  // non-finite activations.
  Matrix Forward(const Matrix& x, ForwardCache* cache) const;

  // `upstream` row r is d loss_r / d output_r.
  BackwardResult Backward(const ForwardCache& cache,
                          const Matrix& upstream) const;

 private:
  std::vector<Layer> layers_;
};

// Per-sample gradients kept in factored form. A sample may own several
// rows (a discriminator sees one real and one generated row per sample);
// its gradient is the sum of its rows' contributions. Materialize() expands
// one sample for inspection; the training path only ever consumes norms and
// weighted sums.
class PerSampleGrads {
 public:
  PerSampleGrads() = default;
  // One row per sample.
  explicit PerSampleGrads(std::vector<LayerFactors> layers);
  PerSampleGrads(std::vector<LayerFactors> layers,
                 std::vector<int> row_to_sample, int num_samples);

  int num_samples() const { return num_samples_; }
  int num_layers() const { return static_cast<int>(layers_.size()); }
  const std::vector<LayerFactors>& factors() const { return layers_; }

  // ||g_i|| flattened jointly over every layer. Finite whenever the
  // gradient entries are, even if the squared norm would overflow.
  std::vector<double> Norms() const;
  std::vector<double> SquaredNorms() const;
  Gradients Materialize(int sample) const;
  Gradients Sum() const;
  Gradients WeightedSum(std::span<const double> sample_weights) const;

  // Parameter lists of `a` followed by `b`, over the same samples.
  static PerSampleGrads Concat(PerSampleGrads a, const PerSampleGrads& b);

 private:
  bool trivial_rows() const { return row_to_sample_.empty(); }
  Matrix ScaledDeltas(const Matrix& deltas,
                      std::span<const double> sample_weights) const;

  std::vector<LayerFactors> layers_;
  std::vector<int> row_to_sample_;  // empty means identity
  std::vector<std::vector<int>> sample_rows_;
  int num_samples_ = 0;
};

// Forward then backward through `stack`, returning per-sample gradients.
PerSampleGrads MlpForwardBackward(const MlpStack& stack, const Matrix& x,
                                  const Matrix& upstream);

}  // namespace fedembed

#endif  // FEDEMBED_MLP_H_
