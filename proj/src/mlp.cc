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
#include "fedembed/mlp.h"

#include <cmath>
#include <utility>

#include "fedembed/error.h"

namespace fedembed {
namespace {

Matrix Activate(const Matrix& pre, Activation act) {
  switch (act) {
    case Activation::kIdentity:
      return pre;
    case Activation::kRelu:
      return pre.cwiseMax(0.0);
    case Activation::kSigmoid:
      return pre.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
  }
  return pre;
}

// Multiplies `grad` in place by the activation derivative at `pre`.
void ApplyActivationGrad(const Matrix& pre, Activation act, Matrix& grad) {
  switch (act) {
    case Activation::kIdentity:
      return;
    case Activation::kRelu:
      grad = grad.cwiseProduct(
          pre.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; }));
      return;
    case Activation::kSigmoid:
      grad = grad.cwiseProduct(pre.unaryExpr([](double v) {
        const double s = 1.0 / (1.0 + std::exp(-v));
        return s * (1.0 - s);
      }));
      return;
  }
}

}  // namespace

Gradients ZeroGradients(std::span<Layer* const> params) {
  Gradients g;
  g.reserve(params.size());
  for (const Layer* layer : params) {
    g.push_back(
        {Matrix::Zero(layer->out(), layer->in()), Vector::Zero(layer->out())});
  }
  return g;
}

void CheckGradientShapes(std::span<Layer* const> params, const Gradients& g) {
  if (params.size() != g.size()) {
    throw ShapeError("gradient has " + std::to_string(g.size()) +
                     " layers, parameters have " +
                     std::to_string(params.size()));
  }
  for (size_t l = 0; l < g.size(); ++l) {
    if (g[l].weight.rows() != params[l]->out() ||
        g[l].weight.cols() != params[l]->in() ||
        g[l].bias.size() != params[l]->out()) {
      throw ShapeError("gradient layer " + std::to_string(l) + " is " +
                       ShapeString(g[l].weight.rows(), g[l].weight.cols()) +
                       ", parameter is " +
                       ShapeString(params[l]->out(), params[l]->in()));
    }
  }
}

void AddScaled(Gradients& acc, const Gradients& g, double scale) {
  if (acc.size() != g.size()) throw ShapeError("gradient layer count");
  for (size_t l = 0; l < g.size(); ++l) {
    acc[l].weight += scale * g[l].weight;
    acc[l].bias += scale * g[l].bias;
  }
}

void Scale(Gradients& g, double scale) {
  for (LayerGrad& layer : g) {
    layer.weight *= scale;
    layer.bias *= scale;
  }
}

double SquaredNorm(const Gradients& g) {
  double total = 0.0;
  for (const LayerGrad& layer : g) {
    total += layer.weight.squaredNorm() + layer.bias.squaredNorm();
  }
  return total;
}

std::vector<double> Flatten(const Gradients& g) {
  std::vector<double> flat;
  for (const LayerGrad& layer : g) {
    flat.insert(flat.end(), layer.weight.data(),
                layer.weight.data() + layer.weight.size());
    flat.insert(flat.end(), layer.bias.data(),
                layer.bias.data() + layer.bias.size());
  }
  return flat;
}

MlpStack::MlpStack(std::vector<Layer> layers) : layers_(std::move(layers)) {
  for (size_t l = 0; l < layers_.size(); ++l) {
    if (layers_[l].bias.size() != layers_[l].out()) {
      throw ShapeError("layer " + std::to_string(l) + ": bias size " +
                       std::to_string(layers_[l].bias.size()) +
                       " != output width " + std::to_string(layers_[l].out()));
    }
    if (l > 0 && layers_[l].in() != layers_[l - 1].out()) {
      throw ShapeError("layer " + std::to_string(l) + " expects width " +
                       std::to_string(layers_[l].in()) + ", previous emits " +
                       std::to_string(layers_[l - 1].out()));
    }
  }
}

MlpStack MlpStack::Create(std::span<const int> widths, Activation hidden,
                          Activation output, RngStream& rng) {
  if (widths.size() < 2) throw ShapeError("an MLP needs at least 2 widths");
  std::vector<Layer> layers;
  for (size_t l = 0; l + 1 < widths.size(); ++l) {
    const int in = widths[l];
    const int out = widths[l + 1];
    if (in < 1 || out < 1) throw ShapeError("layer widths must be positive");
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    Layer layer;
    layer.weight.resize(out, in);
    layer.bias.resize(out);
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) {
      layer.weight.data()[i] = bound * (2.0 * rng.Uniform() - 1.0);
    }
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) {
      layer.bias[i] = bound * (2.0 * rng.Uniform() - 1.0);
    }
    layer.activation = (l + 2 == widths.size()) ? output : hidden;
    layers.push_back(std::move(layer));
  }
  return MlpStack(std::move(layers));
}

ParamRefs MlpStack::Params() {
  ParamRefs refs;
  for (Layer& layer : layers_) refs.push_back(&layer);
  return refs;
}

Eigen::Index MlpStack::input_dim() const {
  return layers_.empty() ? 0 : layers_.front().in();
}

Eigen::Index MlpStack::output_dim() const {
  return layers_.empty() ? 0 : layers_.back().out();
}

std::int64_t MlpStack::ParameterCount() const {
  std::int64_t total = 0;
  for (const Layer& layer : layers_) total += layer.ParameterCount();
  return total;
}

Matrix MlpStack::Forward(const Matrix& x) const {
  Matrix h = x;
  for (const Layer& layer : layers_) {
    h = Activate(LinearForward(h, layer.weight, layer.bias), layer.activation);
  }
  return h;
}

Matrix MlpStack::Forward(const Matrix& x, ForwardCache* cache) const {
  cache->inputs.clear();
  cache->preactivations.clear();
  Matrix h = x;
  for (const Layer& layer : layers_) {
    cache->inputs.push_back(h);
    Matrix pre = LinearForward(h, layer.weight, layer.bias);
    h = Activate(pre, layer.activation);
    cache->preactivations.push_back(std::move(pre));
  }
  RequireFinite(h, "MLP forward pass");
  cache->output = h;
  return h;
}

BackwardResult MlpStack::Backward(const ForwardCache& cache,
                                  const Matrix& upstream) const {
  if (cache.inputs.size() != layers_.size()) {
    throw ShapeError("forward cache does not belong to this stack");
  }
  if (upstream.rows() != cache.output.rows() ||
      upstream.cols() != cache.output.cols()) {
    throw ShapeError(
        "upstream gradient " + ShapeString(upstream.rows(), upstream.cols()) +
        " vs output " + ShapeString(cache.output.rows(), cache.output.cols()));
  }
  BackwardResult result;
  result.factors.resize(layers_.size());
  Matrix delta = upstream;
  for (size_t k = layers_.size(); k-- > 0;) {
    ApplyActivationGrad(cache.preactivations[k], layers_[k].activation, delta);
    Matrix next = delta * layers_[k].weight;
    result.factors[k] = {cache.inputs[k], std::move(delta)};
    delta = std::move(next);
  }
  result.input_grad = std::move(delta);
  return result;
}

PerSampleGrads::PerSampleGrads(std::vector<LayerFactors> layers)
    : layers_(std::move(layers)) {
  num_samples_ =
      layers_.empty() ? 0 : static_cast<int>(layers_.front().inputs.rows());
  for (const LayerFactors& f : layers_) {
    if (f.inputs.rows() != num_samples_ || f.deltas.rows() != num_samples_) {
      throw ShapeError("per-sample factors disagree on row count");
    }
  }
}

PerSampleGrads::PerSampleGrads(std::vector<LayerFactors> layers,
                               std::vector<int> row_to_sample, int num_samples)
    : layers_(std::move(layers)),
      row_to_sample_(std::move(row_to_sample)),
      num_samples_(num_samples) {
  const auto rows = static_cast<Eigen::Index>(row_to_sample_.size());
  for (const LayerFactors& f : layers_) {
    if (f.inputs.rows() != rows || f.deltas.rows() != rows) {
      throw ShapeError("per-sample factors disagree on row count");
    }
  }
  sample_rows_.resize(num_samples_);
  for (int r = 0; r < static_cast<int>(row_to_sample_.size()); ++r) {
    const int s = row_to_sample_[r];
    if (s < 0 || s >= num_samples_) throw ShapeError("row maps to no sample");
    sample_rows_[s].push_back(r);
  }
}

std::vector<double> PerSampleGrads::Norms() const {
  // Per-layer norms first, combined with rescaling, so that gradients whose
  // squared norm overflows still get a finite norm.
  std::vector<std::vector<double>> parts(num_samples_);
  for (const LayerFactors& f : layers_) {
    if (trivial_rows()) {
      for (int i = 0; i < num_samples_; ++i) {
        parts[i].push_back(std::hypot(f.inputs.row(i).stableNorm(), 1.0) *
                           f.deltas.row(i).stableNorm());
      }
      continue;
    }
    for (int s = 0; s < num_samples_; ++s) {
      double sum = 0.0;
      double magnitude = 0.0;
      for (int r : sample_rows_[s]) {
        for (int t : sample_rows_[s]) {
          const double term = (f.inputs.row(r).dot(f.inputs.row(t)) + 1.0) *
                              f.deltas.row(r).dot(f.deltas.row(t));
          sum += term;
          magnitude += std::abs(term);
        }
      }
      // Rows that nearly cancel, or overflow: form the gradient instead.
      if (!std::isfinite(magnitude) || sum < 1e-6 * magnitude) {
        Matrix w = Matrix::Zero(f.deltas.cols(), f.inputs.cols());
        Vector b = Vector::Zero(f.deltas.cols());
        for (int r : sample_rows_[s]) {
          w += f.deltas.row(r).transpose() * f.inputs.row(r);
          b += f.deltas.row(r).transpose();
        }
        parts[s].push_back(std::hypot(w.stableNorm(), b.stableNorm()));
      } else {
        parts[s].push_back(std::sqrt(sum));
      }
    }
  }
  std::vector<double> norms(num_samples_, 0.0);
  for (int s = 0; s < num_samples_; ++s) {
    double largest = 0.0;
    for (double v : parts[s]) largest = std::max(largest, v);
    if (largest == 0.0 || !std::isfinite(largest)) {
      norms[s] = largest;
      continue;
    }
    double total = 0.0;
    for (double v : parts[s]) total += (v / largest) * (v / largest);
    norms[s] = largest * std::sqrt(total);
  }
  return norms;
}

std::vector<double> PerSampleGrads::SquaredNorms() const {
  std::vector<double> norms = Norms();
  for (double& v : norms) v *= v;
  return norms;
}

Gradients PerSampleGrads::Materialize(int sample) const {
  if (sample < 0 || sample >= num_samples_) {
    throw ShapeError("sample index out of range");
  }
  Gradients g;
  for (const LayerFactors& f : layers_) {
    LayerGrad layer{Matrix::Zero(f.deltas.cols(), f.inputs.cols()),
                    Vector::Zero(f.deltas.cols())};
    const std::vector<int> single{sample};
    for (int r : trivial_rows() ? single : sample_rows_[sample]) {
      layer.weight += f.deltas.row(r).transpose() * f.inputs.row(r);
      layer.bias += f.deltas.row(r).transpose();
    }
    g.push_back(std::move(layer));
  }
  return g;
}

Matrix PerSampleGrads::ScaledDeltas(
    const Matrix& deltas, std::span<const double> sample_weights) const {
  Matrix scaled = deltas;
  for (Eigen::Index r = 0; r < scaled.rows(); ++r) {
    const int s = trivial_rows() ? static_cast<int>(r) : row_to_sample_[r];
    scaled.row(r) *= sample_weights[s];
  }
  return scaled;
}

Gradients PerSampleGrads::WeightedSum(
    std::span<const double> sample_weights) const {
  if (static_cast<int>(sample_weights.size()) != num_samples_) {
    throw ShapeError("one weight per sample required");
  }
  Gradients g;
  for (const LayerFactors& f : layers_) {
    const Matrix scaled = ScaledDeltas(f.deltas, sample_weights);
    g.push_back(
        {scaled.transpose() * f.inputs, scaled.colwise().sum().transpose()});
  }
  return g;
}

Gradients PerSampleGrads::Sum() const {
  const std::vector<double> ones(num_samples_, 1.0);
  return WeightedSum(ones);
}

PerSampleGrads PerSampleGrads::Concat(PerSampleGrads a,
                                      const PerSampleGrads& b) {
  if (a.num_samples_ != b.num_samples_ ||
      a.row_to_sample_ != b.row_to_sample_) {
    throw ShapeError(
        "cannot concatenate per-sample gradients over "
        "different samples");
  }
  a.layers_.insert(a.layers_.end(), b.layers_.begin(), b.layers_.end());
  return a;
}

PerSampleGrads MlpForwardBackward(const MlpStack& stack, const Matrix& x,
                                  const Matrix& upstream) {
  if (x.rows() < 1) throw ShapeError("empty batch");
  ForwardCache cache;
  stack.Forward(x, &cache);
  return PerSampleGrads(stack.Backward(cache, upstream).factors);
}

}  // namespace fedembed
