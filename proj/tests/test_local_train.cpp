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

#include <string>

#include "fedsim/errors.hpp"
#include "fedsim/model.hpp"
#include "support/helpers.hpp"

using namespace fedsim;
using namespace fedsim::test;

namespace {

LocalTrainConfig scalar_cfg(int steps, double eta) {
  LocalTrainConfig cfg;
  cfg.steps = steps;
  cfg.eta_l = {eta};
  cfg.batch_size = 1;
  cfg.rng_seed = 7;
  return cfg;
}

}  // namespace

TEST_SUITE("local_train") {

TEST_CASE("one explicit SGD step on g(w) = w") {
  const auto res = local_train(scalar_model(), {1.0}, scalar_dataset(), {0},
                               scalar_cfg(1, 0.1));
  CHECK(res.w_l[0] == doctest::Approx(0.9).epsilon(1e-14));
  CHECK(res.delta[0] == doctest::Approx(-0.1).epsilon(1e-14));
}

TEST_CASE("Q must be at least one; eta = 0 freezes the iterate") {
  CHECK_THROWS_AS(local_train(scalar_model(), {1.0}, scalar_dataset(), {0},
                              scalar_cfg(0, 0.1)),
                  ConfigError);
  for (int q : {1, 3, 10}) {
    const auto res = local_train(scalar_model(), {1.0}, scalar_dataset(), {0},
                                 scalar_cfg(q, 0.0));
    CHECK(res.w_l == ParamVector{1.0});
    CHECK(res.delta == ParamVector{0.0});
  }
}

TEST_CASE("three steps contract the scalar iterate to 0.9^3") {
  const auto res = local_train(scalar_model(), {1.0}, scalar_dataset(), {0},
                               scalar_cfg(3, 0.1));
  CHECK(res.w_l[0] == doctest::Approx(0.729).epsilon(1e-12));
}

TEST_CASE("same seed replays bit-identically") {
  ModelSpec m;
  m.layer_sizes = {4, 3};
  m.loss = Loss::cross_entropy;
  Dataset ds = synth_classification(40, 4, 3, 0.4, 11);
  LocalTrainConfig cfg;
  cfg.steps = 9;
  cfg.eta_l = {0.05};
  cfg.batch_size = 8;
  cfg.rng_seed = 321;
  ParamVector w0(m.param_count(), 0.1);
  const auto shard = all_rows(ds);
  const auto a = local_train(m, w0, ds, shard, cfg);
  const auto b = local_train(m, w0, ds, shard, cfg);
  CHECK(a.w_l == b.w_l);
  CHECK(a.delta == b.delta);

  // And the delta is exactly w_l - w_g, same arithmetic path.
  for (std::size_t i = 0; i < a.w_l.size(); ++i) {
    CHECK(a.delta[i] == a.w_l[i] - w0[i]);
  }
}

TEST_CASE("per-step schedule is honored") {
  LocalTrainConfig cfg;
  cfg.steps = 2;
  cfg.eta_l = {0.1, 0.5};
  cfg.batch_size = 1;
  cfg.rng_seed = 1;
  const auto res = local_train(scalar_model(), {1.0}, scalar_dataset(), {0}, cfg);
  // w: 1 -> 0.9 -> 0.9 - 0.5*0.9 = 0.45
  CHECK(res.w_l[0] == doctest::Approx(0.45).epsilon(1e-14));
  cfg.eta_l = {0.1, 0.5, 0.2};
  CHECK_THROWS_AS(local_train(scalar_model(), {1.0}, scalar_dataset(), {0}, cfg),
                  ConfigError);
}

TEST_CASE("prox_mu = 0 reproduces plain training exactly") {
  ModelSpec m;
  m.layer_sizes = {3, 2};
  m.loss = Loss::cross_entropy;
  Dataset ds = synth_classification(30, 3, 2, 0.5, 5);
  LocalTrainConfig cfg;
  cfg.steps = 6;
  cfg.eta_l = {0.1};
  cfg.batch_size = 4;
  cfg.rng_seed = 8;
  ParamVector w0(m.param_count(), -0.2);
  const auto shard = all_rows(ds);
  const auto plain = local_train(m, w0, ds, shard, cfg);
  cfg.prox_mu = 0.0;
  const auto proxed = local_train(m, w0, ds, shard, cfg);
  CHECK(plain.w_l == proxed.w_l);
}

TEST_CASE("a strong proximal term pins the iterate near its anchor") {
  ModelSpec m;
  m.layer_sizes = {3, 2};
  m.loss = Loss::cross_entropy;
  Dataset ds = synth_classification(30, 3, 2, 0.5, 5);
  LocalTrainConfig cfg;
  cfg.steps = 10;
  cfg.eta_l = {0.05};
  cfg.batch_size = 4;
  cfg.rng_seed = 8;
  ParamVector w0(m.param_count(), 0.5);
  const auto shard = all_rows(ds);
  const auto free_run = local_train(m, w0, ds, shard, cfg);
  cfg.prox_mu = 10.0;
  const auto pinned = local_train(m, w0, ds, shard, cfg);
  CHECK(squared_norm(pinned.delta) < squared_norm(free_run.delta));
}

TEST_CASE("empty shard is rejected") {
  CHECK_THROWS_AS(local_train(scalar_model(), {1.0}, scalar_dataset(), {},
                              scalar_cfg(1, 0.1)),
                  ConfigError);
}

TEST_CASE("divergence reports the failing step") {
  LocalTrainConfig cfg = scalar_cfg(5, 1e200);
  try {
    local_train(scalar_model(), {1.0}, scalar_dataset(), {0}, cfg);
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(std::string(e.what()).find("step") != std::string::npos);
  }
}

}  // TEST_SUITE
