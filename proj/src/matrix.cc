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
#include "fedembed/matrix.h"

#include "fedembed/error.h"

namespace fedembed {

std::string ShapeString(Eigen::Index rows, Eigen::Index cols) {
  return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]";
}

Matrix LinearForward(const Matrix& x, const Matrix& weight,
                     const Vector& bias) {
  if (x.cols() != weight.cols() || weight.rows() != bias.size()) {
    throw ShapeError("linear layer: input " + ShapeString(x.rows(), x.cols()) +
                     ", weight " + ShapeString(weight.rows(), weight.cols()) +
                     ", bias " + std::to_string(bias.size()));
  }
  Matrix out = x * weight.transpose();
  out.rowwise() += bias.transpose();
  return out;
}

Matrix GaussianSample(RngStream& rng, Eigen::Index rows, Eigen::Index cols) {
  Matrix out(rows, cols);
  for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = rng.Normal();
  return out;
}

Matrix ConcatOneHot(const Matrix& x, std::span<const int> labels,
                    int num_classes) {
  if (static_cast<Eigen::Index>(labels.size()) != x.rows()) {
    throw ShapeError("one-hot: " + std::to_string(labels.size()) +
                     " labels for " + std::to_string(x.rows()) + " rows");
  }
  Matrix out = Matrix::Zero(x.rows(), x.cols() + num_classes);
  out.leftCols(x.cols()) = x;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const int label = labels[i];
    if (label < 0 || label >= num_classes) {
      throw ValidationError("label " + std::to_string(label) + " outside [0, " +
                            std::to_string(num_classes) + ")");
    }
    out(i, x.cols() + label) = 1.0;
  }
  return out;
}

bool AllFinite(const Matrix& m) { return m.allFinite(); }

void RequireFinite(const Matrix& m, const std::string& what) {
  if (!m.allFinite()) throw NumericError("non-finite values in " + what);
}

}  // namespace fedembed
