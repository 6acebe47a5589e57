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
#ifndef FEDEMBED_OPTIM_H_
#define FEDEMBED_OPTIM_H_

#include <cstdint>
#include <span>

#include "fedembed/mlp.h"

namespace fedembed {

enum class OptimizerKind { kSgd, kAdam };

struct OptimizerState {
  OptimizerKind kind = OptimizerKind::kSgd;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Adam first and second moments, shaped like the parameters. Allocated
  // lazily on the first step.
  Gradients first_moment;
  Gradients second_moment;
  std::int64_t step = 0;

  static OptimizerState Sgd(double lr);
  static OptimizerState Adam(double lr);
};

// theta <- theta - lr * g.
void SgdStep(std::span<Layer* const> params, const Gradients& grads,
             double learning_rate);

// Bias-corrected Adam. Requires state.kind == kAdam.
void AdamStep(OptimizerState& state, std::span<Layer* const> params,
              const Gradients& grads);

// Dispatches on state.kind and advances state.step.
void ApplyStep(OptimizerState& state, std::span<Layer* const> params,
               const Gradients& grads);

}  // namespace fedembed

#endif  // FEDEMBED_OPTIM_H_
