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

#include <doctest.h>

#include <cmath>

#include "fedsim/bounds.hpp"
#include "fedsim/errors.hpp"
#include "support/helpers.hpp"

using namespace fedsim;
using namespace fedsim::test;

namespace {

// Independent arithmetic oracle for the three-term bound, coded as a straight
// transcription in long double with its own grouping of factors.
long double bound_oracle(long double L, long double sl2, long double sg2, long double G,
                         long double tau, long double eta_g, long double eta_l,
                         long double Q, long double T, long double f_w0,
                         long double f_star) {
  const long double sum_eta = eta_l * Q;
  const long double sum_eta_sq = eta_l * eta_l * Q;
  const long double t1 = 2.0L * (f_w0 - f_star) / (eta_g * sum_eta * T);
  const long double t2 =
      3.0L * L * L * Q * sum_eta_sq * (eta_g * eta_g * tau * tau + 1.0L) * (sl2 + sg2 + G);
  const long double t3 = 0.5L * L * eta_g * (sum_eta_sq / sum_eta) * sl2;
  return t1 + t2 + t3;
}

BoundInputs sample_inputs() {
  BoundInputs b;
  b.L_hat = 1.0;
  b.sigma_l_hat = 0.04;
  b.sigma_g_hat = 0.09;
  b.G_hat = 0.25;
  b.tau_max = 4;
  b.eta_g = 1.0;
  b.eta_l_schedule = {0.01};
  b.local_steps = 5;
  b.buffer_k = 4;
  b.rounds = 200;
  return b;
}

}  // namespace

TEST_SUITE("bounds") {

TEST_CASE("estimate on a quadratic: unit smoothness, no noise, no drift") {
  // Loss w^2/2 on every client: grad = w, so L = 1 exactly, full-batch
  // minibatches have zero variance and identical shards have zero
  // client-vs-global gap.
  const ModelSpec m = scalar_model();
  Dataset ds;
  ds.n_features = 1;
  ds.n_classes = 2;
  for (int i = 0; i < 8; ++i) {
    ds.features.push_back(1.0);
    ds.labels.push_back(0);
  }
  PartitionPlan plan;
  plan.assignments = {{0, 1, 2, 3}, {4, 5, 6, 7}};
  Rng rng(3);
  const std::vector<ParamVector> probes{{0.5}, {1.5}, {-1.0}};
  const BoundInputs b = estimate_bound_inputs(m, ds, plan, probes, 16, 8, rng);
  CHECK(b.L_hat == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(b.sigma_l_hat == 0.0);  // batch covers the shard
  CHECK(b.sigma_g_hat == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(b.G_hat == doctest::Approx(2.25).epsilon(1e-9));  // at w = 1.5
}

TEST_CASE("degenerate probe pairs are skipped") {
  const ModelSpec m = scalar_model();
  Dataset ds;
  ds.n_features = 1;
  ds.n_classes = 2;
  ds.features = {1.0, 1.0};
  ds.labels = {0, 0};
  PartitionPlan plan;
  plan.assignments = {{0}, {1}};
  Rng rng(5);
  // Two identical probes plus one distinct: the w == w' pair must not poison
  // the smoothness estimate.
  const std::vector<ParamVector> probes{{1.0}, {1.0}, {2.0}};
  const BoundInputs b = estimate_bound_inputs(m, ds, plan, probes, 4, 4, rng);
  CHECK(std::isfinite(b.L_hat));
  CHECK(b.L_hat == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("rate bound vanishes when every term is zero") {
  BoundInputs b = sample_inputs();
  b.sigma_l_hat = b.sigma_g_hat = b.G_hat = 0.0;
  const BoundValue v = convergence_rate_bound(b, 1.0, 1.0);  // f(w0) == f*
  CHECK(v.value == 0.0);
}

TEST_CASE("doubling T halves exactly the initialization term") {
  BoundInputs b = sample_inputs();
  const BoundValue v1 = convergence_rate_bound(b, 2.0, 0.5);
  b.rounds *= 2;
  const BoundValue v2 = convergence_rate_bound(b, 2.0, 0.5);
  CHECK(v2.term_init == doctest::Approx(v1.term_init / 2.0).epsilon(1e-12));
  CHECK(v2.term_variance == v1.term_variance);
  CHECK(v2.term_sgd_noise == v1.term_sgd_noise);
}

TEST_CASE("full numeric instance matches the independent oracle to 1e-12") {
  const BoundInputs b = sample_inputs();
  const double f_w0 = 2.302585;
  const double f_star = 0.05;
  const BoundValue v = convergence_rate_bound(b, f_w0, f_star);
  const long double expect = bound_oracle(1.0L, 0.04L, 0.09L, 0.25L, 4.0L, 1.0L, 0.01L,
                                          5.0L, 200.0L, f_w0, f_star);
  CHECK(std::fabs(v.value - static_cast<double>(expect)) <=
        1e-12 * static_cast<double>(expect));

  // A second instance with a per-step schedule.
  BoundInputs s = b;
  s.eta_l_schedule = {0.02, 0.01, 0.01, 0.005, 0.005};
  const BoundValue vs = convergence_rate_bound(s, f_w0, f_star);
  const long double sum_eta = 0.02L + 0.01L + 0.01L + 0.005L + 0.005L;
  const long double sum_sq = 0.02L * 0.02L + 0.01L * 0.01L + 0.01L * 0.01L +
                             0.005L * 0.005L + 0.005L * 0.005L;
  const long double t1 = 2.0L * (f_w0 - (long double)f_star) / (1.0L * sum_eta * 200.0L);
  const long double t2 = 3.0L * 1.0L * 5.0L * sum_sq * (16.0L + 1.0L) * 0.38L;
  const long double t3 = 0.5L * 1.0L * (sum_sq / sum_eta) * 0.04L;
  CHECK(std::fabs(vs.value - static_cast<double>(t1 + t2 + t3)) <=
        1e-12 * static_cast<double>(t1 + t2 + t3));
}

TEST_CASE("zero learning-rate sum is rejected") {
  BoundInputs b = sample_inputs();
  b.eta_l_schedule = {0.0};
  CHECK_THROWS_AS(convergence_rate_bound(b, 1.0, 0.0), ConfigError);
}

TEST_CASE("bound is monotone in T and in each variance input") {
  Rng rng(41);
  for (int trial = 0; trial < 50; ++trial) {
    BoundInputs b;
    b.L_hat = 0.1 + 2.0 * rng.uniform01();
    b.sigma_l_hat = rng.uniform01();
    b.sigma_g_hat = rng.uniform01();
    b.G_hat = rng.uniform01();
    b.tau_max = static_cast<long>(rng.uniform_int(10));
    b.eta_g = 0.5 + rng.uniform01();
    b.eta_l_schedule = {0.001 + 0.05 * rng.uniform01()};
    b.local_steps = 1 + static_cast<int>(rng.uniform_int(8));
    b.buffer_k = 1 + rng.uniform_int(8);
    b.rounds = 10 + static_cast<long>(rng.uniform_int(1000));
    const double f_w0 = 1.0 + rng.uniform01();
    const double base = convergence_rate_bound(b, f_w0, 0.0).value;

    BoundInputs t = b;
    t.rounds *= 3;
    CHECK(convergence_rate_bound(t, f_w0, 0.0).value <= base + 1e-15);

    BoundInputs sl = b;
    sl.sigma_l_hat += 0.5;
    CHECK(convergence_rate_bound(sl, f_w0, 0.0).value >= base);
    BoundInputs sg = b;
    sg.sigma_g_hat += 0.5;
    CHECK(convergence_rate_bound(sg, f_w0, 0.0).value >= base);
    BoundInputs gg = b;
    gg.G_hat += 0.5;
    CHECK(convergence_rate_bound(gg, f_w0, 0.0).value >= base);
    BoundInputs tt = b;
    tt.tau_max += 3;
    CHECK(convergence_rate_bound(tt, f_w0, 0.0).value >= base);
  }
}

TEST_CASE("sufficient step-size condition") {
  CHECK(sufficient_step_size(1.0, {0.01}, 5, 1.0));        // 0.05 <= 1
  CHECK_FALSE(sufficient_step_size(1.0, {0.3}, 5, 1.0));   // 1.5 > 1
  CHECK(sufficient_step_size(1.0, {0.3}, 5, 0.0));         // no L estimate
  BoundInputs b = sample_inputs();
  b.eta_l_schedule = {0.5};
  CHECK_FALSE(convergence_rate_bound(b, 1.0, 0.0).step_size_ok);
}

TEST_CASE("asymptotic regime: structural scalings") {
  BoundInputs b = sample_inputs();
  const std::vector<double> grid{100, 400};
  const RateScalingTable t = rate_scaling_check(b, grid, 2.0, 0.0);
  REQUIRE(t.rows.size() == 2);
  // T quadrupled halves the leading 1/sqrt(TQ) term.
  CHECK(t.rows[1].term1 == doctest::Approx(t.rows[0].term1 / 2.0).epsilon(1e-12));
  CHECK(t.rows[1].term3 == doctest::Approx(t.rows[0].term3 / 2.0).epsilon(1e-12));

  // With tau_max = 0 the variance term is exactly proportional to 1/K^2
  // under eta_g = K, eta_l = 1/(K sqrt(TQ)).
  BoundInputs z = b;
  z.tau_max = 0;
  const RateScalingTable tk = rate_scaling_check(z, grid, 2.0, 0.0);
  z.buffer_k *= 2;
  const RateScalingTable tk2 = rate_scaling_check(z, grid, 2.0, 0.0);
  CHECK(tk2.rows[0].term2 == doctest::Approx(tk.rows[0].term2 / 4.0).epsilon(1e-12));
}

TEST_CASE("scaling slope fit recovers -1/2 when variance terms are subdominant") {
  BoundInputs b = sample_inputs();
  b.sigma_l_hat = 1e-6;
  b.sigma_g_hat = 1e-6;
  b.G_hat = 1e-6;
  const std::vector<double> grid{1e2, 3.16e2, 1e3, 3.16e3, 1e4, 3.16e4, 1e5};
  const RateScalingTable t = rate_scaling_check(b, grid, 2.0, 0.0);
  CHECK(t.fitted_slope == doctest::Approx(-0.5).epsilon(0.1));
  CHECK(std::fabs(t.fitted_slope + 0.5) < 0.05);
}

}  // TEST_SUITE
