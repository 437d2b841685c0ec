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

#include "fedsim/param_vector.hpp"
#include "fedsim/rng.hpp"

using namespace fedsim;

TEST_SUITE("param_vector") {

TEST_CASE("vec_mean on hand-checked inputs") {
  CHECK(vec_mean({{1, 2}, {3, 4}}) == ParamVector{2, 3});
  CHECK(vec_mean({{5, -1}}) == ParamVector{5, -1});
  CHECK(vec_mean({{0, 0}, {3, 3}, {6, 3}}) == ParamVector{3, 2});
}

TEST_CASE("vec_mean rejects empty lists and dimension mismatches") {
  CHECK_THROWS_AS(vec_mean(std::vector<ParamVector>{}), ConfigError);
  CHECK_THROWS_AS(vec_mean({{1, 2}, {1}}), ConfigError);
}

TEST_CASE("vec_axpy on hand-checked inputs") {
  CHECK(vec_axpy({1, 1}, {2, 0}, 0.5) == ParamVector{2, 1});
  CHECK(vec_axpy({3, 4}, {9, 9}, 0.0) == ParamVector{3, 4});
  CHECK(vec_axpy({0}, {1}, -1.0) == ParamVector{-1});
  CHECK_THROWS_AS(vec_axpy({1}, {1, 2}, 1.0), ConfigError);
}

TEST_CASE("vec_mean is permutation invariant and idempotent on copies") {
  Rng rng(404);
  for (int round = 0; round < 20; ++round) {
    std::vector<ParamVector> vs;
    const std::size_t n = 2 + rng.uniform_int(5);
    for (std::size_t i = 0; i < n; ++i) {
      ParamVector v(6);
      for (double& x : v) x = rng.normal();
      vs.push_back(std::move(v));
    }
    const ParamVector base = vec_mean(vs);
    std::vector<ParamVector> shuffled = vs;
    rng.shuffle(shuffled);
    const ParamVector permuted = vec_mean(shuffled);
    for (std::size_t i = 0; i < base.size(); ++i) {
      CHECK(base[i] == doctest::Approx(permuted[i]).epsilon(1e-13));
    }
    // Mean of N copies of one vector is that vector.
    std::vector<ParamVector> copies(4, vs[0]);
    const ParamVector same = vec_mean(copies);
    for (std::size_t i = 0; i < same.size(); ++i) {
      CHECK(same[i] == doctest::Approx(vs[0][i]).epsilon(1e-13));
    }
  }
}

TEST_CASE("finiteness guard") {
  CHECK(all_finite({1.0, -2.0}));
  CHECK_FALSE(all_finite({1.0, std::nan("")}));
  CHECK_THROWS_AS(check_finite({std::numeric_limits<double>::infinity()}, "t"),
                  DivergenceError);
}

}  // TEST_SUITE
