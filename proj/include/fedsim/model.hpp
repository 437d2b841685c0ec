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

#include <cstdint>
#include <string>
#include <vector>

#include "fedsim/data.hpp"
#include "fedsim/param_vector.hpp"

namespace fedsim {

enum class ModelKind { logistic_regression, mlp };
enum class Loss { cross_entropy, squared_error };

// Small differentiable models over flat parameter vectors. layer_sizes runs
// input -> hidden... -> output; hidden layers use tanh, the output layer is
// linear and the loss supplies the head (softmax / sigmoid / identity).
//
// Squared error uses the 1/2 (yhat - y)^2 convention, so the scalar gradient
// is (yhat - y). L2 regularization adds (l2_reg / 2) * ||w||^2.
struct ModelSpec {
  ModelKind kind = ModelKind::logistic_regression;
  std::vector<int> layer_sizes;  // logistic_regression: exactly {in, out}
  Loss loss = Loss::cross_entropy;
  double l2_reg = 0.0;
  bool bias = true;
  double init_scale = 0.0;  // 0: zero init; otherwise N(0, init_scale) entries

  std::size_t param_count() const;
  int n_inputs() const { return layer_sizes.front(); }
  int n_outputs() const { return layer_sizes.back(); }
  void validate() const;
};

ParamVector init_params(const ModelSpec& model, std::uint64_t seed);

// Mean loss over the given rows (plus the L2 term).
double evaluate_loss(const ModelSpec& model, const ParamVector& w, const Dataset& ds,
                     const std::vector<int>& rows);

// Gradient of the mean loss over the given rows. The rows are the minibatch;
// callers draw them with their own rng stream.
ParamVector evaluate_gradient(const ModelSpec& model, const ParamVector& w,
                              const Dataset& ds, const std::vector<int>& rows);

// One pass computing both; loss_out/grad_out may be null.
void evaluate_loss_grad(const ModelSpec& model, const ParamVector& w, const Dataset& ds,
                        const std::vector<int>& rows, double* loss_out,
                        ParamVector* grad_out);

double evaluate_accuracy(const ModelSpec& model, const ParamVector& w, const Dataset& ds);

std::vector<int> all_rows(const Dataset& ds);

// Local SGD configuration (Q steps at rates eta_l, minibatches of batch_size
// drawn without replacement per epoch and reshuffled between epochs).
// prox_mu > 0 adds the proximal pull mu * (y - w_g) to every step's gradient.
struct LocalTrainConfig {
  int steps = 1;                       // Q >= 1
  std::vector<double> eta_l = {0.01};  // length 1 (constant) or length Q
  int batch_size = 32;
  double prox_mu = 0.0;
  std::uint64_t rng_seed = 0;

  void validate() const;
  double eta_at(int q) const {  // q in [0, steps)
    return eta_l.size() == 1 ? eta_l[0] : eta_l[static_cast<std::size_t>(q)];
  }
  double eta_sum() const;
  double eta_sq_sum() const;
};

struct LocalTrainResult {
  ParamVector w_l;
  ParamVector delta;  // w_l - w_g, computed coordinatewise from the same values
  int steps_run = 0;
};

// Runs y_0 = w_g; y_q = y_{q-1} - eta_l^(q) * g(y_{q-1}) for q = 1..Q and
// returns y_Q together with the difference from the starting point.
LocalTrainResult local_train(const ModelSpec& model, const ParamVector& w_g,
                             const Dataset& ds, const std::vector<int>& shard,
                             const LocalTrainConfig& cfg);

}  // namespace fedsim
