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

#include "fedsim/bounds.hpp"

#include <algorithm>
#include <cmath>

#include "fedsim/errors.hpp"

namespace fedsim {

void BoundInputs::validate() const {
  auto nonneg = [](double v, const char* name) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw ConfigError(std::string("bound inputs: ") + name + " must be finite and >= 0");
    }
  };
  nonneg(L_hat, "L_hat");
  nonneg(sigma_l_hat, "sigma_l_hat");
  nonneg(sigma_g_hat, "sigma_g_hat");
  nonneg(G_hat, "G_hat");
  nonneg(eta_g, "eta_g");
  if (tau_max < 0) throw ConfigError("bound inputs: tau_max must be >= 0");
  if (rounds < 1) throw ConfigError("bound inputs: T must be >= 1");
  if (local_steps < 1) throw ConfigError("bound inputs: Q must be >= 1");
  if (buffer_k < 1) throw ConfigError("bound inputs: K must be >= 1");
  if (eta_l_schedule.empty() ||
      (eta_l_schedule.size() != 1 &&
       eta_l_schedule.size() != static_cast<std::size_t>(local_steps))) {
    throw ConfigError("bound inputs: eta_l schedule must have length 1 or Q");
  }
  for (double e : eta_l_schedule) nonneg(e, "eta_l");
}

double BoundInputs::eta_sum() const {
  if (eta_l_schedule.size() == 1) return eta_l_schedule[0] * local_steps;
  double s = 0.0;
  for (double e : eta_l_schedule) s += e;
  return s;
}

double BoundInputs::eta_sq_sum() const {
  if (eta_l_schedule.size() == 1) return eta_l_schedule[0] * eta_l_schedule[0] * local_steps;
  double s = 0.0;
  for (double e : eta_l_schedule) s += e * e;
  return s;
}

std::vector<ParamVector> make_probe_points(const ParamVector& w0, int n_perturbations,
                                           double scale,
                                           const std::vector<ParamVector>& checkpoints,
                                           Rng& rng) {
  std::vector<ParamVector> probes;
  probes.push_back(w0);
  for (int i = 0; i < n_perturbations; ++i) {
    ParamVector w = w0;
    for (double& x : w) x += scale * rng.normal();
    probes.push_back(std::move(w));
  }
  for (const auto& c : checkpoints) probes.push_back(c);
  return probes;
}

BoundInputs estimate_bound_inputs(const ModelSpec& model, const Dataset& train,
                                  const PartitionPlan& partition,
                                  const std::vector<ParamVector>& probes,
                                  int minibatch_draws, int batch_size, Rng& rng) {
  if (probes.size() < 2) throw ConfigError("estimate_bound_inputs: need >= 2 probe points");
  if (minibatch_draws < 1) throw ConfigError("estimate_bound_inputs: need >= 1 draws");
  const int m = partition.n_clients();
  const auto full = all_rows(train);

  BoundInputs b;
  // Per-probe gradients: pooled objective and every client objective.
  std::vector<ParamVector> grad_f(probes.size());
  std::vector<std::vector<ParamVector>> grad_k(probes.size(),
                                               std::vector<ParamVector>(m));
  for (std::size_t p = 0; p < probes.size(); ++p) {
    grad_f[p] = evaluate_gradient(model, probes[p], train, full);
    for (int k = 0; k < m; ++k) {
      grad_k[p][k] =
          evaluate_gradient(model, probes[p], train, partition.assignments[k]);
    }
  }

  for (std::size_t p = 0; p < probes.size(); ++p) {
    for (int k = 0; k < m; ++k) {
      b.G_hat = std::max(b.G_hat, squared_norm(grad_k[p][k]));
      ParamVector diff = grad_k[p][k];
      for (std::size_t i = 0; i < diff.size(); ++i) diff[i] -= grad_f[p][i];
      b.sigma_g_hat = std::max(b.sigma_g_hat, squared_norm(diff));
    }
  }

  // Smoothness: max slope over probe pairs, per client and pooled. Degenerate
  // pairs (w == w') are skipped.
  for (std::size_t p = 0; p < probes.size(); ++p) {
    for (std::size_t q = p + 1; q < probes.size(); ++q) {
      const double dist = l2_distance(probes[p], probes[q]);
      if (dist == 0.0) continue;
      b.L_hat = std::max(b.L_hat, l2_distance(grad_f[p], grad_f[q]) / dist);
      for (int k = 0; k < m; ++k) {
        b.L_hat = std::max(b.L_hat, l2_distance(grad_k[p][k], grad_k[q][k]) / dist);
      }
    }
  }

  // Local variance: empirical E ||g - grad F_k||^2 over minibatch draws.
  std::vector<int> batch;
  for (std::size_t p = 0; p < probes.size(); ++p) {
    for (int k = 0; k < m; ++k) {
      const auto& shard = partition.assignments[k];
      if (static_cast<int>(shard.size()) <= batch_size) continue;  // full batch: zero variance
      double acc = 0.0;
      for (int d = 0; d < minibatch_draws; ++d) {
        batch.clear();
        for (int i = 0; i < batch_size; ++i) {
          batch.push_back(shard[rng.uniform_int(shard.size())]);
        }
        const ParamVector g = evaluate_gradient(model, probes[p], train, batch);
        double sq = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double dgi = g[i] - grad_k[p][k][i];
          sq += dgi * dgi;
        }
        acc += sq;
      }
      b.sigma_l_hat = std::max(b.sigma_l_hat, acc / minibatch_draws);
    }
  }
  return b;
}

bool sufficient_step_size(double eta_g, const std::vector<double>& eta_l, int steps,
                          double L) {
  if (L <= 0.0) return true;
  for (int q = 0; q < steps; ++q) {
    const double e = eta_l.size() == 1 ? eta_l[0] : eta_l[static_cast<std::size_t>(q)];
    if (eta_g * e * static_cast<double>(steps) > 1.0 / L) return false;
  }
  return true;
}

BoundValue convergence_rate_bound(const BoundInputs& b, double f_w0, double f_star_lower) {
  b.validate();
  const double eta_sum = b.eta_sum();
  const double eta_sq = b.eta_sq_sum();
  if (eta_sum <= 0.0) throw ConfigError("convergence_rate_bound: learning-rate sum is zero");

  const double sigma_sq = b.sigma_l_hat + b.sigma_g_hat + b.G_hat;
  const double tau = static_cast<double>(b.tau_max);

  BoundValue out;
  out.term_init = 2.0 * (f_w0 - f_star_lower) /
                  (b.eta_g * eta_sum * static_cast<double>(b.rounds));
  out.term_variance = 3.0 * b.L_hat * b.L_hat * static_cast<double>(b.local_steps) *
                      eta_sq * (b.eta_g * b.eta_g * tau * tau + 1.0) * sigma_sq;
  out.term_sgd_noise = 0.5 * b.L_hat * b.eta_g * (eta_sq / eta_sum) * b.sigma_l_hat;
  out.value = out.term_init + out.term_variance + out.term_sgd_noise;
  out.step_size_ok =
      sufficient_step_size(b.eta_g, b.eta_l_schedule, b.local_steps, b.L_hat);
  return out;
}

RateScalingTable rate_scaling_check(const BoundInputs& b,
                                       const std::vector<double>& T_grid, double f_w0,
                                       double f_star_lower, double c_eta) {
  if (T_grid.size() < 2) throw ConfigError("rate_scaling_check: need >= 2 grid points");
  if (!(c_eta > 0.0)) throw ConfigError("rate_scaling_check: c_eta must be > 0");

  RateScalingTable table;
  const double Q = static_cast<double>(b.local_steps);
  const double K = static_cast<double>(b.buffer_k);
  for (double T : T_grid) {
    if (!(T >= 1.0)) throw ConfigError("rate_scaling_check: T grid entries must be >= 1");
    BoundInputs bt = b;
    bt.rounds = static_cast<long>(T);
    bt.eta_g = K;
    bt.eta_l_schedule = {c_eta / (K * std::sqrt(T * Q))};
    const BoundValue v = convergence_rate_bound(bt, f_w0, f_star_lower);
    RateScalingRow row;
    row.T = T;
    row.eta_l = bt.eta_l_schedule[0];
    row.term1 = v.term_init;
    row.term2 = v.term_variance;
    row.term3 = v.term_sgd_noise;
    // term_init uses the integer round count; recompute with the exact grid
    // value so the fitted slope reflects the formula, not rounding.
    row.term1 = 2.0 * (f_w0 - f_star_lower) / (bt.eta_g * bt.eta_l_schedule[0] * Q * T);
    row.bound = row.term1 + row.term2 + row.term3;
    table.rows.push_back(row);
  }

  // Least squares on (log T, log bound).
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  const double n = static_cast<double>(table.rows.size());
  for (const auto& r : table.rows) {
    const double x = std::log(r.T);
    const double y = std::log(r.bound);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  table.fitted_slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  return table;
}

}  // namespace fedsim
