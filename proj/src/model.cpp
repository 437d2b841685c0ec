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

#include "fedsim/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fedsim/errors.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

std::size_t ModelSpec::param_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    n += static_cast<std::size_t>(layer_sizes[l]) * layer_sizes[l + 1];
    if (bias) n += layer_sizes[l + 1];
  }
  return n;
}

void ModelSpec::validate() const {
  if (layer_sizes.size() < 2) {
    throw ConfigError("model: layer_sizes needs at least input and output");
  }
  for (int s : layer_sizes) {
    if (s <= 0) throw ConfigError("model: layer sizes must be positive");
  }
  if (kind == ModelKind::logistic_regression && layer_sizes.size() != 2) {
    throw ConfigError("model: logistic_regression takes exactly {inputs, outputs}");
  }
  if (l2_reg < 0.0) throw ConfigError("model: l2_reg must be >= 0");
  if (init_scale < 0.0) throw ConfigError("model: init_scale must be >= 0");
}

ParamVector init_params(const ModelSpec& model, std::uint64_t seed) {
  model.validate();
  ParamVector w(model.param_count(), 0.0);
  if (model.init_scale > 0.0) {
    Rng rng(seed, derive_stream(seed, {0x1417u}));
    for (double& x : w) x = model.init_scale * rng.normal();
  }
  return w;
}

std::vector<int> all_rows(const Dataset& ds) {
  std::vector<int> rows(ds.size());
  std::iota(rows.begin(), rows.end(), 0);
  return rows;
}

namespace {

struct Workspace {
  // Activations per layer (post-nonlinearity), plus the deltas flowing back.
  std::vector<std::vector<double>> act;
  std::vector<std::vector<double>> grad;
};

void check_model_inputs(const ModelSpec& model, const ParamVector& w, const Dataset& ds,
                        const std::vector<int>& rows) {
  model.validate();
  if (w.size() != model.param_count()) {
    throw ConfigError("model: parameter vector dim " + std::to_string(w.size()) +
                      " does not match model (" + std::to_string(model.param_count()) + ")");
  }
  if (ds.n_features != model.n_inputs()) {
    throw ConfigError("model: dataset has " + std::to_string(ds.n_features) +
                      " features, model expects " + std::to_string(model.n_inputs()));
  }
  if (rows.empty()) throw ConfigError("model: empty batch");
}

// Forward through the affine stack; returns the output-layer logits in
// ws.act.back(). Hidden layers use tanh.
void forward(const ModelSpec& model, const ParamVector& w, const double* x,
             Workspace& ws) {
  const auto& sizes = model.layer_sizes;
  ws.act.resize(sizes.size());
  ws.act[0].assign(x, x + sizes[0]);
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const int in = sizes[l];
    const int out = sizes[l + 1];
    ws.act[l + 1].assign(out, 0.0);
    const double* W = w.data() + off;
    const double* b = model.bias ? w.data() + off + static_cast<std::size_t>(in) * out : nullptr;
    for (int o = 0; o < out; ++o) {
      double z = b ? b[o] : 0.0;
      const double* Wrow = W + static_cast<std::size_t>(o) * in;
      for (int i = 0; i < in; ++i) z += Wrow[i] * ws.act[l][i];
      ws.act[l + 1][o] = z;
    }
    if (l + 2 < sizes.size()) {
      for (double& v : ws.act[l + 1]) v = std::tanh(v);
    }
    off += static_cast<std::size_t>(in) * out + (model.bias ? out : 0);
  }
}

// Loss and d(loss)/d(logits) for one sample.
double loss_head(const ModelSpec& model, const std::vector<double>& logits, int label,
                 std::vector<double>* dz) {
  const int out = static_cast<int>(logits.size());
  if (dz) dz->assign(out, 0.0);
  if (model.loss == Loss::cross_entropy) {
    if (out == 1) {
      // Sigmoid + binary cross-entropy, written via log1p for stability.
      const double z = logits[0];
      const double y = label > 0 ? 1.0 : 0.0;
      const double p = 1.0 / (1.0 + std::exp(-z));
      const double loss = (z >= 0 ? std::log1p(std::exp(-z)) + (1.0 - y) * z
                                  : std::log1p(std::exp(z)) - y * z);
      if (dz) (*dz)[0] = p - y;
      return loss;
    }
    const double zmax = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double z : logits) sum += std::exp(z - zmax);
    const double log_sum = std::log(sum) + zmax;
    if (dz) {
      for (int c = 0; c < out; ++c) (*dz)[c] = std::exp(logits[c] - log_sum);
      (*dz)[label] -= 1.0;
    }
    return log_sum - logits[label];
  }
  // Squared error against the one-hot target (or the scalar label when the
  // output is one-dimensional).
  double loss = 0.0;
  for (int c = 0; c < out; ++c) {
    const double target = (out == 1) ? static_cast<double>(label) : (c == label ? 1.0 : 0.0);
    const double d = logits[c] - target;
    loss += 0.5 * d * d;
    if (dz) (*dz)[c] = d;
  }
  return loss;
}

// Backprop through the stack, accumulating parameter gradients into grad_acc.
void backward(const ModelSpec& model, const ParamVector& w, Workspace& ws,
              const std::vector<double>& dz_out, ParamVector& grad_acc) {
  const auto& sizes = model.layer_sizes;
  const std::size_t n_layers = sizes.size() - 1;

  std::vector<std::size_t> offsets(n_layers);
  std::size_t off = 0;
  for (std::size_t l = 0; l < n_layers; ++l) {
    offsets[l] = off;
    off += static_cast<std::size_t>(sizes[l]) * sizes[l + 1] + (model.bias ? sizes[l + 1] : 0);
  }

  std::vector<double> delta = dz_out;
  for (std::size_t l = n_layers; l-- > 0;) {
    const int in = sizes[l];
    const int out = sizes[l + 1];
    const double* W = w.data() + offsets[l];
    double* gW = grad_acc.data() + offsets[l];
    double* gb = model.bias ? grad_acc.data() + offsets[l] + static_cast<std::size_t>(in) * out
                            : nullptr;
    for (int o = 0; o < out; ++o) {
      const double d = delta[o];
      double* gWrow = gW + static_cast<std::size_t>(o) * in;
      for (int i = 0; i < in; ++i) gWrow[i] += d * ws.act[l][i];
      if (gb) gb[o] += d;
    }
    if (l == 0) break;
    std::vector<double> prev(in, 0.0);
    for (int i = 0; i < in; ++i) {
      double s = 0.0;
      for (int o = 0; o < out; ++o) s += W[static_cast<std::size_t>(o) * in + i] * delta[o];
      // ws.act[l] holds tanh(z) for hidden layers.
      const double a = ws.act[l][i];
      prev[i] = s * (1.0 - a * a);
    }
    delta = std::move(prev);
  }
}

}  // namespace

void evaluate_loss_grad(const ModelSpec& model, const ParamVector& w, const Dataset& ds,
                        const std::vector<int>& rows, double* loss_out,
                        ParamVector* grad_out) {
  check_model_inputs(model, w, ds, rows);
  Workspace ws;
  double loss_sum = 0.0;
  if (grad_out) grad_out->assign(w.size(), 0.0);
  std::vector<double> dz;
  for (int r : rows) {
    forward(model, w, ds.row(r), ws);
    loss_sum += loss_head(model, ws.act.back(), ds.labels[r], grad_out ? &dz : nullptr);
    if (grad_out) backward(model, w, ws, dz, *grad_out);
  }
  const double inv = 1.0 / static_cast<double>(rows.size());
  if (loss_out) {
    double loss = loss_sum * inv;
    if (model.l2_reg > 0.0) loss += 0.5 * model.l2_reg * squared_norm(w);
    *loss_out = loss;
    if (!std::isfinite(*loss_out)) throw DivergenceError("evaluate_loss: non-finite loss");
  }
  if (grad_out) {
    for (std::size_t i = 0; i < grad_out->size(); ++i) {
      (*grad_out)[i] *= inv;
      if (model.l2_reg > 0.0) (*grad_out)[i] += model.l2_reg * w[i];
    }
    check_finite(*grad_out, "evaluate_gradient");
  }
}

double evaluate_loss(const ModelSpec& model, const ParamVector& w, const Dataset& ds,
                     const std::vector<int>& rows) {
  double loss = 0.0;
  evaluate_loss_grad(model, w, ds, rows, &loss, nullptr);
  return loss;
}

ParamVector evaluate_gradient(const ModelSpec& model, const ParamVector& w,
                              const Dataset& ds, const std::vector<int>& rows) {
  ParamVector grad;
  evaluate_loss_grad(model, w, ds, rows, nullptr, &grad);
  return grad;
}

double evaluate_accuracy(const ModelSpec& model, const ParamVector& w, const Dataset& ds) {
  const auto rows = all_rows(ds);
  check_model_inputs(model, w, ds, rows);
  Workspace ws;
  std::size_t correct = 0;
  for (int r : rows) {
    forward(model, w, ds.row(r), ws);
    const auto& z = ws.act.back();
    int pred;
    if (z.size() == 1) {
      pred = z[0] >= 0.0 ? 1 : 0;  // sigmoid(z) >= 0.5
      if (model.loss == Loss::squared_error) pred = z[0] >= 0.5 ? 1 : 0;
    } else {
      pred = static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
    }
    if (pred == ds.labels[r]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

void LocalTrainConfig::validate() const {
  if (steps < 1) throw ConfigError("local_train: Q must be >= 1");
  if (batch_size < 1) throw ConfigError("local_train: batch_size must be >= 1");
  if (eta_l.empty()) throw ConfigError("local_train: eta_l schedule is empty");
  if (eta_l.size() != 1 && eta_l.size() != static_cast<std::size_t>(steps)) {
    throw ConfigError("local_train: eta_l must have length 1 or Q");
  }
  for (double e : eta_l) {
    if (!(e >= 0.0) || !std::isfinite(e)) {
      throw ConfigError("local_train: eta_l entries must be finite and >= 0");
    }
  }
  if (prox_mu < 0.0) throw ConfigError("local_train: prox_mu must be >= 0");
}

double LocalTrainConfig::eta_sum() const {
  double s = 0.0;
  for (int q = 0; q < steps; ++q) s += eta_at(q);
  return s;
}

double LocalTrainConfig::eta_sq_sum() const {
  double s = 0.0;
  for (int q = 0; q < steps; ++q) s += eta_at(q) * eta_at(q);
  return s;
}

LocalTrainResult local_train(const ModelSpec& model, const ParamVector& w_g,
                             const Dataset& ds, const std::vector<int>& shard,
                             const LocalTrainConfig& cfg) {
  cfg.validate();
  if (shard.empty()) throw ConfigError("local_train: empty shard");
  check_finite(w_g, "local_train: starting point");

  Rng rng(cfg.rng_seed, derive_stream(cfg.rng_seed, {0x10ca1u}));
  std::vector<int> order = shard;
  rng.shuffle(order);
  std::size_t cursor = 0;

  ParamVector y = w_g;
  std::vector<int> batch;
  ParamVector grad;
  for (int q = 0; q < cfg.steps; ++q) {
    // Without-replacement minibatches; reshuffle when the epoch is exhausted.
    if (cursor >= order.size()) {
      rng.shuffle(order);
      cursor = 0;
    }
    batch.clear();
    for (int i = 0; i < cfg.batch_size && cursor < order.size(); ++i, ++cursor) {
      batch.push_back(order[cursor]);
    }
    evaluate_loss_grad(model, y, ds, batch, nullptr, &grad);
    if (cfg.prox_mu > 0.0) {
      for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += cfg.prox_mu * (y[i] - w_g[i]);
    }
    const double eta = cfg.eta_at(q);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] -= eta * grad[i];
    if (!all_finite(y)) {
      throw DivergenceError("local_train: non-finite parameters at step " +
                            std::to_string(q + 1));
    }
  }

  LocalTrainResult res;
  res.steps_run = cfg.steps;
  res.delta.resize(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) res.delta[i] = y[i] - w_g[i];
  res.w_l = std::move(y);
  return res;
}

}  // namespace fedsim
