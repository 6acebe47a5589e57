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
#ifndef FEDEMBED_MODELS_H_
#define FEDEMBED_MODELS_H_

#include <cstdint>
#include <span>
#include <vector>

#include "fedembed/data.h"
#include "fedembed/matrix.h"
#include "fedembed/mlp.h"
#include "fedembed/rng.h"

namespace fedembed {

inline constexpr double kLogvarMin = -20.0;
inline constexpr double kLogvarMax = 20.0;

struct CvaeDims {
  int input_dim = 0;
  int num_classes = 0;
  int latent_dim = 32;
  int hidden1 = 128;
  int hidden2 = 64;
};

// Encoder [d+K] -> h1 -> h2 -> 2L (mu, logvar); decoder [L+K] -> h2 -> h1
// -> d. ReLU hidden layers, identity outputs.
struct CvaeParams {
  CvaeDims dims;
  MlpStack encoder;
  MlpStack decoder;

  static CvaeParams Create(const CvaeDims& dims, RngStream& rng);
  static MlpStack CreateDecoder(const CvaeDims& dims, RngStream& rng);
  static MlpStack CreateEncoder(const CvaeDims& dims, RngStream& rng);
  std::int64_t ParameterCount() const;
  // Encoder layers followed by decoder layers.
  ParamRefs Params();
};

struct CvaeEncoding {
  Matrix z;
  Matrix mu;
  Matrix logvar;  // clamped to [kLogvarMin, kLogvarMax]
};

// z = mu + exp(logvar / 2) * eps with eps drawn from `rng`.
CvaeEncoding CvaeEncode(const CvaeParams& params, const Matrix& x,
                        std::span<const int> y, RngStream& rng);
CvaeEncoding CvaeEncodeWithNoise(const CvaeParams& params, const Matrix& x,
                                 std::span<const int> y, const Matrix& noise);

// 0.5 * sum_j (mu_j^2 + exp(logvar_j) - 1 - logvar_j).
double KlToStandardNormal(std::span<const double> mu,
                          std::span<const double> logvar);

struct CvaeLoss {
  double loss = 0.0;  // batch mean
  Vector per_sample;
  Vector reconstruction;  // per-sample MSE averaged over dimensions
  Vector kl;              // per-sample KL
};

struct CvaeGradients {
  CvaeLoss loss;
  PerSampleGrads grads;  // encoder layers then decoder layers
};

// Per-sample loss = MSE(x_hat, x) + beta * KL.
CvaeLoss CvaeLossValue(const CvaeParams& params, const Matrix& x,
                       std::span<const int> y, RngStream& rng,
                       double beta = 1.0);
CvaeGradients CvaePerSampleGrads(const CvaeParams& params, const Matrix& x,
                                 std::span<const int> y, const Matrix& noise,
                                 double beta = 1.0);

struct CganDims {
  int input_dim = 0;
  int num_classes = 0;
  int noise_dim = 100;
  int gen_hidden1 = 256;
  int gen_hidden2 = 512;
  int disc_hidden1 = 512;
  int disc_hidden2 = 256;
};

// Generator [z+K] -> g1 -> g2 -> d; discriminator [d+K] -> f1 -> f2 -> 1
// (a logit).
struct CganParams {
  CganDims dims;
  MlpStack generator;
  MlpStack discriminator;

  static CganParams Create(const CganDims& dims, RngStream& rng);
  static MlpStack CreateGenerator(const CganDims& dims, RngStream& rng);
  static MlpStack CreateDiscriminator(const CganDims& dims, RngStream& rng);
  std::int64_t ParameterCount() const;
};

// Numerically stable log(1 + exp(t)).
double Softplus(double t);

// Randomness consumed by one CGAN step. Generated rows are conditioned on
// labels drawn uniformly, never on real labels.
struct CganNoise {
  Matrix fake_noise;  // one row per real sample
  std::vector<int> fake_labels;
  Matrix generator_noise;
  std::vector<int> generator_labels;
};

CganNoise DrawCganNoise(const CganDims& dims, int real_count,
                        int generator_count, RngStream& rng);

struct CganLosses {
  // Sample i pairs real row i (target 1) with generated row i (target 0).
  Vector discriminator_per_sample;
  // Non-saturating -log D(G(z) | y), averaged.
  double generator_loss = 0.0;
};

CganLosses CganLossValues(const CganParams& params, const Matrix& x,
                          std::span<const int> y, const CganNoise& noise);
CganLosses CganLossValues(const CganParams& params, const Matrix& x,
                          std::span<const int> y, RngStream& rng);

struct DiscriminatorGradients {
  Vector per_sample_loss;
  PerSampleGrads grads;  // one sample = (real row, generated row)
};
DiscriminatorGradients CganDiscriminatorGrads(const CganParams& params,
                                              const Matrix& x,
                                              std::span<const int> y,
                                              const Matrix& fake_noise,
                                              std::span<const int> fake_labels);

struct GeneratorGradients {
  Vector per_sample_loss;
  PerSampleGrads grads;  // generator layers only
};
GeneratorGradients CganGeneratorGrads(const CganParams& params,
                                      const Matrix& noise,
                                      std::span<const int> labels);

// Single linear layer x -> W x + b producing K logits.
struct LinearParams {
  MlpStack stack;

  static LinearParams Zeros(int input_dim, int num_classes);
  static LinearParams FromWeights(Matrix weight, Vector bias);
  const Matrix& weight() const { return stack.layers()[0].weight; }
  const Vector& bias() const { return stack.layers()[0].bias; }
  int input_dim() const { return static_cast<int>(stack.input_dim()); }
  int num_classes() const { return static_cast<int>(stack.output_dim()); }
};

// Row-wise softmax, shifted by the row max.
Matrix Softmax(const Matrix& logits);
// One probability row per input row.
Matrix ClassifierPredictProba(const LinearParams& params, const Matrix& x);

struct CrossEntropyGradients {
  Vector per_sample_loss;
  PerSampleGrads grads;
};
CrossEntropyGradients CrossEntropyPerSampleGrads(const LinearParams& params,
                                                 const Matrix& x,
                                                 std::span<const int> y);

struct ClassDistribution {
  enum class Kind { kUniform, kLocalEmpirical, kExplicit };

  Kind kind = Kind::kUniform;
  std::vector<double> probabilities;

  static ClassDistribution Uniform(int num_classes);
  static ClassDistribution Empirical(std::span<const int> labels,
                                     int num_classes);
  // Normalizes; throws ValidationError on negative or all-zero weights.
  static ClassDistribution Explicit(std::vector<double> weights);
  int num_classes() const { return static_cast<int>(probabilities.size()); }
  int Sample(RngStream& rng) const;
};

// x_hat_i = decoder([z_i | onehot(y_i)]), z_i ~ N(0, I), y_i ~ dist. Labels
// are drawn first, then latents row by row.
EmbeddingDataset GenerateEmbeddings(const MlpStack& decoder, int latent_dim,
                                    int count, const ClassDistribution& dist,
                                    RngStream& rng);

}  // namespace fedembed

#endif  // FEDEMBED_MODELS_H_
