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
#include "fedembed/optim.h"

#include <cmath>

#include "fedembed/error.h"

namespace fedembed {

OptimizerState OptimizerState::Sgd(double lr) {
  OptimizerState s;
  s.kind = OptimizerKind::kSgd;
  s.learning_rate = lr;
  return s;
}

OptimizerState OptimizerState::Adam(double lr) {
  OptimizerState s;
  s.kind = OptimizerKind::kAdam;
  s.learning_rate = lr;
  return s;
}

void SgdStep(std::span<Layer* const> params, const Gradients& grads,
             double learning_rate) {
  CheckGradientShapes(params, grads);
  for (size_t l = 0; l < params.size(); ++l) {
    params[l]->weight -= learning_rate * grads[l].weight;
    params[l]->bias -= learning_rate * grads[l].bias;
  }
}

void AdamStep(OptimizerState& state, std::span<Layer* const> params,
              const Gradients& grads) {
  if (state.kind != OptimizerKind::kAdam) {
    throw Error("AdamStep called with a non-Adam optimizer state");
  }
  CheckGradientShapes(params, grads);
  if (state.first_moment.empty()) {
    state.first_moment = ZeroGradients(params);
    state.second_moment = ZeroGradients(params);
  }
  CheckGradientShapes(params, state.first_moment);
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  const double b1 = state.beta1;
  const double b2 = state.beta2;
  auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
    param.array() -= state.learning_rate * (m.array() / correction1) /
                     ((v.array() / correction2).sqrt() + state.epsilon);
  };
  for (size_t l = 0; l < params.size(); ++l) {
    update(params[l]->weight, state.first_moment[l].weight,
           state.second_moment[l].weight, grads[l].weight);
    update(params[l]->bias, state.first_moment[l].bias,
           state.second_moment[l].bias, grads[l].bias);
  }
}

void ApplyStep(OptimizerState& state, std::span<Layer* const> params,
               const Gradients& grads) {
  if (state.kind == OptimizerKind::kAdam) {
    AdamStep(state, params, grads);
    return;
  }
  SgdStep(params, grads, state.learning_rate);
  ++state.step;
}

}  // namespace fedembed
