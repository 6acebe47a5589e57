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
#ifndef FEDEMBED_MATRIX_H_
#define FEDEMBED_MATRIX_H_

#include <Eigen/Dense>
#include <span>
#include <string>

#include "fedembed/rng.h"

namespace fedembed {

// Row-major so that row i is sample i, matching the on-disk layout.
using Matrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

// Returns x * W^T + 1 b^T. W is [out x in]; throws ShapeError when the
// shapes do not chain.
Matrix LinearForward(const Matrix& x, const Matrix& weight, const Vector& bias);

// i.i.d. N(0, 1) entries, filled row-major from `rng`.
Matrix GaussianSample(RngStream& rng, Eigen::Index rows, Eigen::Index cols);

// [x | onehot(labels, num_classes)]. Throws ValidationError for labels
// outside [0, num_classes).
Matrix ConcatOneHot(const Matrix& x, std::span<const int> labels,
                    int num_classes);

bool AllFinite(const Matrix& m);
void RequireFinite(const Matrix& m, const std::string& what);

std::string ShapeString(Eigen::Index rows, Eigen::Index cols);

}  // namespace fedembed

#endif  // FEDEMBED_MATRIX_H_
