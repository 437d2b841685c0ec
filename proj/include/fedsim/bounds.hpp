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
#include <vector>

#include "fedsim/data.hpp"
#include "fedsim/model.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

// Measured stand-ins for the smoothness / variance / staleness constants the
// convergence bound is written in.
//
// The smoothness assumption is stated with squared norms,
// ||grad F(w) - grad F(w')||^2 <= L ||w - w'||^2; L_hat below is estimated
// from the un-squared ratio ||grad F(w) - grad F(w')|| / ||w - w'||, and the
// bound squares it wherever L^2 appears.
struct BoundInputs {
  double L_hat = 0.0;
  double sigma_l_hat = 0.0;  // max per-client minibatch gradient variance
  double sigma_g_hat = 0.0;  // max_k ||grad F_k - grad f||^2
  double G_hat = 0.0;        // max_k ||grad F_k||^2
  long tau_max = 0;
  double eta_g = 1.0;
  std::vector<double> eta_l_schedule = {0.01};  // length 1 or Q
  int local_steps = 1;                          // Q
  std::size_t buffer_k = 1;                     // K
  long rounds = 1;                              // T

  void validate() const;
  double eta_sum() const;
  double eta_sq_sum() const;
};

// Estimates the constants from probe points (>= 2; pairs with w == w' are
// skipped) using full-shard client gradients, the pooled full-data gradient,
// and `minibatch_draws` minibatch gradients per (client, probe).
BoundInputs estimate_bound_inputs(const ModelSpec& model, const Dataset& train,
                                  const PartitionPlan& partition,
                                  const std::vector<ParamVector>& probes,
                                  int minibatch_draws, int batch_size, Rng& rng);

// Default probe set: `n_perturbations` random perturbations of w0 plus any
// provided trajectory checkpoints.
std::vector<ParamVector> make_probe_points(const ParamVector& w0, int n_perturbations,
                                           double scale,
                                           const std::vector<ParamVector>& checkpoints,
                                           Rng& rng);

struct BoundValue {
  double value = 0.0;
  double term_init = 0.0;      // 2 (f(w0) - f*) / (eta_g * sum_q eta_l * T)
  double term_variance = 0.0;  // 3 L^2 Q sum_q eta_l^2 (eta_g^2 tau^2 + 1) sigma^2
  double term_sgd_noise = 0.0; // (L/2) eta_g (sum_q eta_l^2 / sum_q eta_l) sigma_l^2
  bool step_size_ok = true;    // eta_g * eta_l^(q) * Q <= 1 / L for all q
};

// Three-term convergence-rate bound on (1/T) sum_t ||grad f(w^t)||^2.
// A violated step-size condition flips step_size_ok but the value is still
// computed.
BoundValue convergence_rate_bound(const BoundInputs& b, double f_w0, double f_star_lower);

// eta_g * eta_l^(q) * Q <= 1 / L for every q.
bool sufficient_step_size(double eta_g, const std::vector<double>& eta_l, int steps,
                          double L);

struct RateScalingRow {
  double T = 0.0;
  double eta_l = 0.0;
  double term1 = 0.0;
  double term2 = 0.0;
  double term3 = 0.0;
  double bound = 0.0;
};

struct RateScalingTable {
  std::vector<RateScalingRow> rows;
  double fitted_slope = 0.0;  // least-squares slope of log(bound) vs log(T)
};

// Substitutes the asymptotic regime eta_l = c_eta / (K sqrt(T Q)), eta_g = K
// into the bound over a T grid and fits the log-log decay slope. The leading
// term decays as 1/sqrt(T Q); the fit approaches -1/2 wherever the variance
// terms are subdominant.
RateScalingTable rate_scaling_check(const BoundInputs& b, const std::vector<double>& T_grid,
                                       double f_w0, double f_star_lower,
                                       double c_eta = 1.0);

}  // namespace fedsim
