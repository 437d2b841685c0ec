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

#include "fedsim/errors.hpp"
#include "fedsim/metrics.hpp"
#include "support/helpers.hpp"

using namespace fedsim;
using namespace fedsim::test;

namespace {

RunLog log_with(const std::vector<std::pair<double, double>>& time_acc) {
  RunLog log;
  long v = 0;
  for (const auto& [t, acc] : time_acc) {
    EvalRecord r;
    r.virtual_time = t;
    r.version = ++v;
    r.eval_accuracy = acc;
    log.records.push_back(r);
  }
  return log;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("time_to_target returns the first crossing record") {
  const RunLog log = log_with({{100, 0.4}, {200, 0.72}, {300, 0.9}});
  const auto hit = time_to_target(log, 0.7);
  REQUIRE(hit.has_value());
  CHECK(hit->virtual_time == 200);
  CHECK(hit->rounds == 2);

  CHECK_FALSE(time_to_target(log, 0.95).has_value());  // above best: failed

  const RunLog paper_style = log_with({{500, 0.5}, {855, 0.7}, {1200, 0.74}});
  const auto t = time_to_target(paper_style, 0.7);
  REQUIRE(t.has_value());
  CHECK(t->virtual_time == 855);
}

TEST_CASE("best_accuracy takes the pointwise maximum") {
  CHECK(best_accuracy(log_with({{1, 0.2}, {2, 0.5}, {3, 0.8}})) == 0.8);
  CHECK(best_accuracy(log_with({{1, 0.2}, {2, 0.9}, {3, 0.6}})) == 0.9);
  RunLog empty;
  CHECK_THROWS_AS(best_accuracy(empty), ConfigError);
}

TEST_CASE("speedup_table ratios against the fastest strategy") {
  const RunLog fast = log_with({{50, 0.5}, {100, 0.8}});
  const RunLog slow = log_with({{200, 0.5}, {600, 0.8}});
  const RunLog never = log_with({{200, 0.5}, {600, 0.6}});
  const auto rows = speedup_table(
      {{"fast", &fast}, {"slow", &slow}, {"never", &never}}, 0.75);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].time_ratio == 1.0);
  CHECK(rows[1].time_ratio == 6.0);
  CHECK(rows[2].failed);
  CHECK_FALSE(rows[0].failed);

  // Pure function: recomputing yields the identical table.
  const auto again = speedup_table(
      {{"fast", &fast}, {"slow", &slow}, {"never", &never}}, 0.75);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].time == again[i].time);
    CHECK(rows[i].time_ratio == again[i].time_ratio);
  }
}

TEST_CASE("speedup ratios are invariant under a global time rescale") {
  const RunLog a = log_with({{10, 0.9}});
  const RunLog b = log_with({{40, 0.9}});
  const RunLog a3 = log_with({{30, 0.9}});
  const RunLog b3 = log_with({{120, 0.9}});
  const auto base = speedup_table({{"a", &a}, {"b", &b}}, 0.5);
  const auto scaled = speedup_table({{"a", &a3}, {"b", &b3}}, 0.5);
  CHECK(base[1].time_ratio == scaled[1].time_ratio);
}

TEST_CASE("gradient_norm_series on checkpoints") {
  const ModelSpec m = scalar_model();
  const Dataset ds = scalar_dataset();
  RunLog log;
  EvalRecord r1;
  r1.version = 1;
  r1.checkpoint = ParamVector{2.0};  // grad = 2, squared norm 4
  log.records.push_back(r1);
  EvalRecord r2;
  r2.version = 2;
  r2.checkpoint = ParamVector{0.0};  // stationary point
  log.records.push_back(r2);
  const auto series = gradient_norm_series(log, m, ds);
  REQUIRE(series.size() == 2);
  CHECK(series[0] == doctest::Approx(4.0));
  CHECK(series[1] == doctest::Approx(2.0));  // running average (4 + 0) / 2

  RunLog stuck;
  EvalRecord s;
  s.checkpoint = ParamVector{0.0};
  stuck.records.assign(3, s);
  for (double v : gradient_norm_series(stuck, m, ds)) CHECK(v == 0.0);

  RunLog missing;
  missing.records.push_back(EvalRecord{});
  CHECK_THROWS_AS(gradient_norm_series(missing, m, ds), ConfigError);
}

TEST_CASE("accuracy_std_tail measures late-window oscillation") {
  const RunLog flat = log_with({{1, 0.5}, {2, 0.8}, {3, 0.8}, {4, 0.8}, {5, 0.8}});
  CHECK(accuracy_std_tail(flat, 0.6) == doctest::Approx(0.0));
  const RunLog wobble = log_with({{1, 0.5}, {2, 0.9}, {3, 0.1}, {4, 0.9}, {5, 0.1}});
  CHECK(accuracy_std_tail(wobble, 0.8) > 0.3);
}

}  // TEST_SUITE
