/*
 * Copyright (c) The FedSim Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cmath>
#include <vector>

#include "fedsim/data.hpp"
#include "fedsim/model.hpp"

namespace fedsim::test {

// Scalar model yhat = w (a single weight on a constant input of 1, no bias).
// With the sample (x=1, y=0) and squared error, the loss is w^2/2 and the
// gradient is w, which makes SGD trajectories checkable by hand.
inline ModelSpec scalar_model() {
  ModelSpec m;
  m.kind = ModelKind::logistic_regression;
  m.layer_sizes = {1, 1};
  m.loss = Loss::squared_error;
  m.bias = false;
  return m;
}

inline Dataset scalar_dataset() {
  Dataset ds;
  ds.n_features = 1;
  ds.n_classes = 2;
  ds.features = {1.0};
  ds.labels = {0};
  return ds;
}

// Independent oracle: central finite differences of the mean batch loss.
inline ParamVector finite_difference_gradient(const ModelSpec& model, const ParamVector& w,
                                              const Dataset& ds,
                                              const std::vector<int>& rows,
                                              double h = 1e-6) {
  ParamVector g(w.size());
  ParamVector wp = w;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double orig = wp[i];
    wp[i] = orig + h;
    const double lp = evaluate_loss(model, wp, ds, rows);
    wp[i] = orig - h;
    const double lm = evaluate_loss(model, wp, ds, rows);
    wp[i] = orig;
    g[i] = (lp - lm) / (2.0 * h);
  }
  return g;
}

// 1e-5 relative tolerance, relaxed for near-zero coordinates.
inline bool gradients_match(const ParamVector& analytic, const ParamVector& fd) {
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double denom = std::max(std::fabs(analytic[i]), std::fabs(fd[i]));
    const double diff = std::fabs(analytic[i] - fd[i]);
    if (denom >= 1e-3) {
      if (diff / denom > 1e-5) return false;
    } else if (diff > 1e-4 * 1e-3) {
      return false;
    }
  }
  return true;
}

}  // namespace fedsim::test
