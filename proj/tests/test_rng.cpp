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
#include <numeric>
#include <set>

#include "fedsim/rng.hpp"

using namespace fedsim;

TEST_SUITE("rng") {

TEST_CASE("identical seed and stream replay bit for bit") {
  Rng a(42, 7), b(42, 7);
  for (int i = 0; i < 100; ++i) {
    CHECK(a.next_u64() == b.next_u64());
  }
  Rng c(42, 8);
  bool all_equal = true;
  Rng a2(42, 7);
  for (int i = 0; i < 100; ++i) {
    if (a2.next_u64() != c.next_u64()) all_equal = false;
  }
  CHECK_FALSE(all_equal);
}

TEST_CASE("derive_stream separates tag tuples") {
  const auto s1 = derive_stream(1, {2, 3});
  const auto s2 = derive_stream(1, {3, 2});
  const auto s3 = derive_stream(2, {2, 3});
  CHECK(s1 != s2);
  CHECK(s1 != s3);
  CHECK(derive_stream(1, {2, 3}) == s1);
}

TEST_CASE("uniform01 stays in [0,1) and uniform_int in range") {
  Rng rng(9);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform01();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
  for (int i = 0; i < 10000; ++i) {
    CHECK(rng.uniform_int(7) < 7);
  }
}

TEST_CASE("normal moments are roughly standard") {
  Rng rng(123);
  double sum = 0.0, sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    sum += z;
    sq += z * z;
  }
  CHECK(std::fabs(sum / n) < 0.02);
  CHECK(std::fabs(sq / n - 1.0) < 0.03);
}

TEST_CASE("lognormal and pareto draws are positive and finite") {
  Rng rng(5);
  for (int i = 0; i < 20000; ++i) {
    const double ln = rng.lognormal(0.0, 1.0);
    const double pa = rng.pareto(2.0, 1.0);
    CHECK(ln > 0.0);
    CHECK(std::isfinite(ln));
    CHECK(pa >= 1.0);
    CHECK(std::isfinite(pa));
  }
}

TEST_CASE("gamma mean matches alpha") {
  Rng rng(77);
  for (double alpha : {0.3, 1.0, 4.5}) {
    double sum = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) sum += rng.gamma(alpha);
    CHECK(sum / n == doctest::Approx(alpha).epsilon(0.05));
  }
}

TEST_CASE("dirichlet draws are a probability vector") {
  Rng rng(31);
  for (double alpha : {0.05, 0.5, 50.0}) {
    const auto p = rng.dirichlet(alpha, 8);
    double sum = 0.0;
    for (double v : p) {
      CHECK(v >= 0.0);
      sum += v;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("shuffle is a permutation") {
  Rng rng(900);
  std::vector<int> v(50);
  std::iota(v.begin(), v.end(), 0);
  rng.shuffle(v);
  std::set<int> seen(v.begin(), v.end());
  CHECK(seen.size() == 50);
}

}  // TEST_SUITE
