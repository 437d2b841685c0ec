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

#include <algorithm>
#include <cmath>

#include "fedsim/delay.hpp"

using namespace fedsim;

TEST_SUITE("delay") {

TEST_CASE("all kinds draw positive finite delays normalized to the mean") {
  Rng rng(2);
  for (DelayKind kind : {DelayKind::lognormal, DelayKind::pareto, DelayKind::fixed}) {
    DelayModel dm;
    dm.kind = kind;
    dm.mean_seconds = 8.0;
    double sum = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
      const double d = dm.sample_base(rng);
      REQUIRE(d > 0.0);
      REQUIRE(std::isfinite(d));
      sum += d;
    }
    CHECK(sum / n == doctest::Approx(8.0).epsilon(0.05));
  }
}

TEST_CASE("long-tailed draws put most mass below the mean") {
  Rng rng(3);
  DelayModel dm;
  dm.mean_seconds = 10.0;
  int below = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    if (dm.sample_base(rng) < 10.0) ++below;
  }
  // More fast draws than slow ones; the tail carries the rest of the mass.
  CHECK(below > n / 2);
}

TEST_CASE("client multipliers: explicit table wins, drawn ones have median 1") {
  DelayModel dm;
  dm.client_multipliers = {1.0, 2.0, 5.0};
  CHECK(make_client_multipliers(dm, 3, 1) == std::vector<double>{1.0, 2.0, 5.0});
  CHECK_THROWS_AS(make_client_multipliers(dm, 4, 1), ConfigError);

  DelayModel drawn;
  drawn.client_speed_sigma = 0.7;
  auto mult = make_client_multipliers(drawn, 1001, 7);
  CHECK(make_client_multipliers(drawn, 1001, 7) == mult);  // deterministic
  std::sort(mult.begin(), mult.end());
  CHECK(mult[500] == doctest::Approx(1.0).epsilon(0.15));
  CHECK(mult.back() > 2.0);  // a slow tail exists

  DelayModel off;
  off.client_speed_sigma = 0.0;
  for (double m : make_client_multipliers(off, 5, 1)) CHECK(m == 1.0);
}

TEST_CASE("validation rejects bad parameters") {
  DelayModel dm;
  dm.mean_seconds = 0.0;
  CHECK_THROWS_AS(dm.validate(), ConfigError);
  dm.mean_seconds = 1.0;
  dm.kind = DelayKind::pareto;
  dm.pareto_shape = 1.0;  // infinite mean
  CHECK_THROWS_AS(dm.validate(), ConfigError);
}

}  // TEST_SUITE
