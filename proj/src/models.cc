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
#include "fedembed/models.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>

#include "fedembed/error.h"

namespace fedembed {
namespace {

double Sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

void RequireFiniteVector(const Vector& v, const std::string& term) {
  if (!v.allFinite()) throw NumericError("non-finite " + term + " term");
}

void CheckBatch(const Matrix& x, std::span<const int> y, int dim) {
  if (x.rows() < 1) throw ShapeError("empty batch");
  if (static_cast<Eigen::Index>(y.size()) != x.rows()) {
    throw ShapeError(std::to_string(y.size()) + " labels for " +
                     std::to_string(x.rows()) + " rows");
  }
  if (x.cols() != dim) {
    throw ShapeError("batch width " + std::to_string(x.cols()) +
                     ", model expects " + std::to_string(dim));
  }
}

}  // namespace

MlpStack CvaeParams::CreateEncoder(const CvaeDims& dims, RngStream& rng) {
  const int widths[] = {dims.input_dim + dims.num_classes, dims.hidden1,
                        dims.hidden2, 2 * dims.latent_dim};
  return MlpStack::Create(widths, Activation::kRelu, Activation::kIdentity,
                          rng);
}

MlpStack CvaeParams::CreateDecoder(const CvaeDims& dims, RngStream& rng) {
  const int widths[] = {dims.latent_dim + dims.num_classes, dims.hidden2,
                        dims.hidden1, dims.input_dim};
  return MlpStack::Create(widths, Activation::kRelu, Activation::kIdentity,
                          rng);
}

CvaeParams CvaeParams::Create(const CvaeDims& dims, RngStream& rng) {
  CvaeParams p;
  p.dims = dims;
  p.encoder = CreateEncoder(dims, rng);
  p.decoder = CreateDecoder(dims, rng);
  return p;
}

std::int64_t CvaeParams::ParameterCount() const {
  return encoder.ParameterCount() + decoder.ParameterCount();
}

ParamRefs CvaeParams::Params() {
  ParamRefs refs = encoder.Params();
  for (Layer* layer : decoder.Params()) refs.push_back(layer);
  return refs;
}

namespace {

struct CvaeForward {
  ForwardCache encoder_cache;
  ForwardCache decoder_cache;
  Matrix raw_logvar;
  CvaeEncoding encoding;
  Matrix reconstruction;
};

CvaeForward RunCvae(const CvaeParams& p, const Matrix& x,
                    std::span<const int> y, const Matrix& noise) {
  const int latent = p.dims.latent_dim;
  CheckBatch(x, y, p.dims.input_dim);
  if (noise.rows() != x.rows() || noise.cols() != latent) {
    throw ShapeError("latent noise " + ShapeString(noise.rows(), noise.cols()) +
                     ", expected " + ShapeString(x.rows(), latent));
  }
  CvaeForward f;
  const Matrix heads = p.encoder.Forward(ConcatOneHot(x, y, p.dims.num_classes),
                                         &f.encoder_cache);
  f.encoding.mu = heads.leftCols(latent);
  f.raw_logvar = heads.rightCols(latent);
  f.encoding.logvar = f.raw_logvar.cwiseMax(kLogvarMin).cwiseMin(kLogvarMax);
  const Matrix stddev = (0.5 * f.encoding.logvar.array()).exp().matrix();
  f.encoding.z = f.encoding.mu + stddev.cwiseProduct(noise);
  f.reconstruction = p.decoder.Forward(
      ConcatOneHot(f.encoding.z, y, p.dims.num_classes), &f.decoder_cache);
  return f;
}

CvaeLoss ScoreCvae(const CvaeForward& f, const Matrix& x, double beta) {
  CvaeLoss loss;
  const Matrix diff = f.reconstruction - x;
  loss.reconstruction =
      diff.rowwise().squaredNorm() / static_cast<double>(x.cols());
  const Matrix& mu = f.encoding.mu;
  const Matrix& lv = f.encoding.logvar;
  loss.kl = 0.5 * (mu.array().square() + lv.array().exp() - 1.0 - lv.array())
                      .rowwise()
                      .sum()
                      .matrix();
  RequireFiniteVector(loss.reconstruction, "reconstruction (MSE)");
  RequireFiniteVector(loss.kl, "KL");
  loss.per_sample = loss.reconstruction + beta * loss.kl;
  loss.loss = loss.per_sample.mean();
  return loss;
}

}  // namespace

CvaeEncoding CvaeEncodeWithNoise(const CvaeParams& params, const Matrix& x,
                                 std::span<const int> y, const Matrix& noise) {
  CheckBatch(x, y, params.dims.input_dim);
  const int latent = params.dims.latent_dim;
  const Matrix heads =
      params.encoder.Forward(ConcatOneHot(x, y, params.dims.num_classes));
  CvaeEncoding e;
  e.mu = heads.leftCols(latent);
  e.logvar = heads.rightCols(latent).cwiseMax(kLogvarMin).cwiseMin(kLogvarMax);
  if (noise.rows() != x.rows() || noise.cols() != latent) {
    throw ShapeError("latent noise has the wrong shape");
  }
  e.z = e.mu + (0.5 * e.logvar.array()).exp().matrix().cwiseProduct(noise);
  return e;
}

CvaeEncoding CvaeEncode(const CvaeParams& params, const Matrix& x,
                        std::span<const int> y, RngStream& rng) {
  const Matrix noise = GaussianSample(rng, x.rows(), params.dims.latent_dim);
  return CvaeEncodeWithNoise(params, x, y, noise);
}

double KlToStandardNormal(std::span<const double> mu,
                          std::span<const double> logvar) {
  if (mu.size() != logvar.size()) throw ShapeError("mu/logvar size mismatch");
  double kl = 0.0;
  for (size_t j = 0; j < mu.size(); ++j) {
    kl += mu[j] * mu[j] + std::exp(logvar[j]) - 1.0 - logvar[j];
  }
  return 0.5 * kl;
}

CvaeLoss CvaeLossValue(const CvaeParams& params, const Matrix& x,
                       std::span<const int> y, RngStream& rng, double beta) {
  const Matrix noise = GaussianSample(rng, x.rows(), params.dims.latent_dim);
  return ScoreCvae(RunCvae(params, x, y, noise), x, beta);
}

CvaeGradients CvaePerSampleGrads(const CvaeParams& params, const Matrix& x,
                                 std::span<const int> y, const Matrix& noise,
                                 double beta) {
  const CvaeForward f = RunCvae(params, x, y, noise);
  CvaeGradients out;
  out.loss = ScoreCvae(f, x, beta);

  const int latent = params.dims.latent_dim;
  const Matrix upstream =
      (2.0 / static_cast<double>(x.cols())) * (f.reconstruction - x);
  BackwardResult dec = params.decoder.Backward(f.decoder_cache, upstream);
  const Matrix dz = dec.input_grad.leftCols(latent);

  const Matrix& mu = f.encoding.mu;
  const Matrix& lv = f.encoding.logvar;
  const Matrix stddev = (0.5 * lv.array()).exp().matrix();
  Matrix heads_grad(x.rows(), 2 * latent);
  heads_grad.leftCols(latent) = dz + beta * mu;
  Matrix dlv = (0.5 * dz.array() * noise.array() * stddev.array() +
                0.5 * beta * (lv.array().exp() - 1.0))
                   .matrix();
  for (Eigen::Index i = 0; i < dlv.size(); ++i) {
    const double raw = f.raw_logvar.data()[i];
    if (raw < kLogvarMin || raw > kLogvarMax) dlv.data()[i] = 0.0;
  }
  heads_grad.rightCols(latent) = dlv;
  BackwardResult enc = params.encoder.Backward(f.encoder_cache, heads_grad);

  std::vector<LayerFactors> factors = std::move(enc.factors);
  for (LayerFactors& lf : dec.factors) factors.push_back(std::move(lf));
  out.grads = PerSampleGrads(std::move(factors));
  return out;
}

MlpStack CganParams::CreateGenerator(const CganDims& dims, RngStream& rng) {
  const int widths[] = {dims.noise_dim + dims.num_classes, dims.gen_hidden1,
                        dims.gen_hidden2, dims.input_dim};
  return MlpStack::Create(widths, Activation::kRelu, Activation::kIdentity,
                          rng);
}

MlpStack CganParams::CreateDiscriminator(const CganDims& dims, RngStream& rng) {
  const int widths[] = {dims.input_dim + dims.num_classes, dims.disc_hidden1,
                        dims.disc_hidden2, 1};
  return MlpStack::Create(widths, Activation::kRelu, Activation::kIdentity,
                          rng);
}

CganParams CganParams::Create(const CganDims& dims, RngStream& rng) {
  CganParams p;
  p.dims = dims;
  p.generator = CreateGenerator(dims, rng);
  p.discriminator = CreateDiscriminator(dims, rng);
  return p;
}

std::int64_t CganParams::ParameterCount() const {
  return generator.ParameterCount() + discriminator.ParameterCount();
}

double Softplus(double t) {
  return std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t)));
}

CganNoise DrawCganNoise(const CganDims& dims, int real_count,
                        int generator_count, RngStream& rng) {
  CganNoise n;
  n.fake_labels.resize(real_count);
  for (int& label : n.fake_labels) {
    label = static_cast<int>(rng.UniformIndex(dims.num_classes));
  }
  n.fake_noise = GaussianSample(rng, real_count, dims.noise_dim);
  n.generator_labels.resize(generator_count);
  for (int& label : n.generator_labels) {
    label = static_cast<int>(rng.UniformIndex(dims.num_classes));
  }
  n.generator_noise = GaussianSample(rng, generator_count, dims.noise_dim);
  return n;
}

DiscriminatorGradients CganDiscriminatorGrads(
    const CganParams& params, const Matrix& x, std::span<const int> y,
    const Matrix& fake_noise, std::span<const int> fake_labels) {
  const CganDims& dims = params.dims;
  CheckBatch(x, y, dims.input_dim);
  const Eigen::Index b = x.rows();
  if (fake_noise.rows() != b ||
      static_cast<Eigen::Index>(fake_labels.size()) != b) {
    throw ShapeError("one generated row per real row required");
  }
  const Matrix fake_x = params.generator.Forward(
      ConcatOneHot(fake_noise, fake_labels, dims.num_classes));

  Matrix stacked(2 * b, dims.input_dim + dims.num_classes);
  stacked.topRows(b) = ConcatOneHot(x, y, dims.num_classes);
  stacked.bottomRows(b) = ConcatOneHot(fake_x, fake_labels, dims.num_classes);

  ForwardCache cache;
  const Matrix logits = params.discriminator.Forward(stacked, &cache);
  DiscriminatorGradients out;
  out.per_sample_loss.resize(b);
  Matrix upstream(2 * b, 1);
  for (Eigen::Index i = 0; i < b; ++i) {
    const double real = logits(i, 0);
    const double fake = logits(b + i, 0);
    out.per_sample_loss[i] = Softplus(-real) + Softplus(fake);
    upstream(i, 0) = Sigmoid(real) - 1.0;
    upstream(b + i, 0) = Sigmoid(fake);
  }
  RequireFiniteVector(out.per_sample_loss, "discriminator BCE");
  std::vector<int> row_to_sample(2 * b);
  for (Eigen::Index r = 0; r < 2 * b; ++r) {
    row_to_sample[r] = static_cast<int>(r % b);
  }
  out.grads =
      PerSampleGrads(params.discriminator.Backward(cache, upstream).factors,
                     std::move(row_to_sample), static_cast<int>(b));
  return out;
}

GeneratorGradients CganGeneratorGrads(const CganParams& params,
                                      const Matrix& noise,
                                      std::span<const int> labels) {
  const CganDims& dims = params.dims;
  if (noise.rows() < 1 ||
      static_cast<Eigen::Index>(labels.size()) != noise.rows()) {
    throw ShapeError("generator batch: noise rows and labels disagree");
  }
  ForwardCache gen_cache;
  const Matrix fake_x = params.generator.Forward(
      ConcatOneHot(noise, labels, dims.num_classes), &gen_cache);
  ForwardCache disc_cache;
  const Matrix logits = params.discriminator.Forward(
      ConcatOneHot(fake_x, labels, dims.num_classes), &disc_cache);
  GeneratorGradients out;
  out.per_sample_loss.resize(noise.rows());
  Matrix upstream(noise.rows(), 1);
  for (Eigen::Index i = 0; i < noise.rows(); ++i) {
    out.per_sample_loss[i] = Softplus(-logits(i, 0));
    upstream(i, 0) = Sigmoid(logits(i, 0)) - 1.0;
  }
  RequireFiniteVector(out.per_sample_loss, "generator");
  const BackwardResult disc =
      params.discriminator.Backward(disc_cache, upstream);
  const Matrix fake_grad = disc.input_grad.leftCols(dims.input_dim);
  out.grads =
      PerSampleGrads(params.generator.Backward(gen_cache, fake_grad).factors);
  return out;
}

CganLosses CganLossValues(const CganParams& params, const Matrix& x,
                          std::span<const int> y, const CganNoise& noise) {
  CganLosses out;
  out.discriminator_per_sample =
      CganDiscriminatorGrads(params, x, y, noise.fake_noise, noise.fake_labels)
          .per_sample_loss;
  out.generator_loss =
      CganGeneratorGrads(params, noise.generator_noise, noise.generator_labels)
          .per_sample_loss.mean();
  return out;
}

CganLosses CganLossValues(const CganParams& params, const Matrix& x,
                          std::span<const int> y, RngStream& rng) {
  const CganNoise noise = DrawCganNoise(params.dims, static_cast<int>(x.rows()),
                                        static_cast<int>(x.rows()), rng);
  return CganLossValues(params, x, y, noise);
}

LinearParams LinearParams::Zeros(int input_dim, int num_classes) {
  return FromWeights(Matrix::Zero(num_classes, input_dim),
                     Vector::Zero(num_classes));
}

LinearParams LinearParams::FromWeights(Matrix weight, Vector bias) {
  std::vector<Layer> layers(1);
  layers[0].weight = std::move(weight);
  layers[0].bias = std::move(bias);
  layers[0].activation = Activation::kIdentity;
  return LinearParams{MlpStack(std::move(layers))};
}

Matrix Softmax(const Matrix& logits) {
  Matrix p = logits;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    const double m = p.row(i).maxCoeff();
    p.row(i) = (p.row(i).array() - m).exp();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

Matrix ClassifierPredictProba(const LinearParams& params, const Matrix& x) {
  return Softmax(params.stack.Forward(x));
}

CrossEntropyGradients CrossEntropyPerSampleGrads(const LinearParams& params,
                                                 const Matrix& x,
                                                 std::span<const int> y) {
  CheckBatch(x, y, params.input_dim());
  ForwardCache cache;
  const Matrix logits = params.stack.Forward(x, &cache);
  const int classes = params.num_classes();
  Matrix upstream = Softmax(logits);
  CrossEntropyGradients out;
  out.per_sample_loss.resize(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const int label = y[i];
    if (label < 0 || label >= classes) {
      throw ValidationError("label " + std::to_string(label) + " outside [0, " +
                            std::to_string(classes) + ")");
    }
    const double m = logits.row(i).maxCoeff();
    const double lse = m + std::log((logits.row(i).array() - m).exp().sum());
    out.per_sample_loss[i] = lse - logits(i, label);
    upstream(i, label) -= 1.0;
  }
  out.grads = PerSampleGrads(params.stack.Backward(cache, upstream).factors);
  return out;
}

ClassDistribution ClassDistribution::Uniform(int num_classes) {
  if (num_classes < 1) throw ValidationError("need at least one class");
  ClassDistribution d;
  d.kind = Kind::kUniform;
  d.probabilities.assign(num_classes, 1.0 / num_classes);
  return d;
}

ClassDistribution ClassDistribution::Empirical(std::span<const int> labels,
                                               int num_classes) {
  std::vector<double> counts(num_classes, 0.0);
  for (int label : labels) {
    if (label < 0 || label >= num_classes) {
      throw ValidationError("label outside class range");
    }
    counts[label] += 1.0;
  }
  ClassDistribution d = Explicit(std::move(counts));
  d.kind = Kind::kLocalEmpirical;
  return d;
}

ClassDistribution ClassDistribution::Explicit(std::vector<double> weights) {
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw ValidationError("class weights must be finite and non-negative");
    }
    total += w;
  }
  if (weights.empty() || total <= 0.0) {
    throw ValidationError("class weights must have positive mass");
  }
  ClassDistribution d;
  d.kind = Kind::kExplicit;
  for (double& w : weights) w /= total;
  d.probabilities = std::move(weights);
  return d;
}

int ClassDistribution::Sample(RngStream& rng) const {
  const double u = rng.Uniform();
  double cumulative = 0.0;
  int last_positive = 0;
  for (int c = 0; c < num_classes(); ++c) {
    if (probabilities[c] <= 0.0) continue;
    cumulative += probabilities[c];
    last_positive = c;
    if (u < cumulative) return c;
  }
  return last_positive;
}

EmbeddingDataset GenerateEmbeddings(const MlpStack& decoder, int latent_dim,
                                    int count, const ClassDistribution& dist,
                                    RngStream& rng) {
  if (count < 1) throw ValidationError("synthetic dataset size must be >= 1");
  const int classes = dist.num_classes();
  if (decoder.input_dim() != latent_dim + classes) {
    throw ShapeError("decoder input width " +
                     std::to_string(decoder.input_dim()) + " != latent " +
                     std::to_string(latent_dim) + " + classes " +
                     std::to_string(classes));
  }
  EmbeddingDataset out;
  out.y.resize(count);
  for (int& label : out.y) label = dist.Sample(rng);
  const Matrix z = GaussianSample(rng, count, latent_dim);
  out.x = decoder.Forward(ConcatOneHot(z, out.y, classes));
  RequireFinite(out.x, "generated embeddings");
  out.meta.source = "synthetic";
  out.meta.num_classes = classes;
  return out;
}

}  // namespace fedembed
