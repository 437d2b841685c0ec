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

#include <sstream>
#include <string>

#include <json.hpp>

#include "fedsim/errors.hpp"
#include "fedsim/experiment.hpp"

using namespace fedsim;
using nlohmann::json;

namespace {

json base_doc() {
  return json{
      {"name", "t"},
      {"seeds", {4}},
      {"model", {{"layer_sizes", {3, 2}}}},
      {"data",
       {{"n_samples", 120}, {"n_features", 3}, {"n_classes", 2}, {"cluster_spread", 0.4}}},
      {"local", {{"steps", 2}, {"eta_l", 0.05}, {"batch_size", 4}}},
      {"sim", {{"n_clients", 6}, {"concurrency", 2}, {"max_versions", 10}}},
      {"strategies", json::array({{{"name", "fedfa_delta"}, {"buffer_k", 2}}})},
  };
}

}  // namespace

TEST_SUITE("experiment") {

TEST_CASE("defaults fill unspecified sections") {
  const ExperimentConfig cfg = ExperimentConfig::parse(base_doc());
  CHECK(cfg.alpha == 0.5);
  CHECK_FALSE(cfg.iid);
  CHECK(cfg.sim.eval_every == 5);
  CHECK(cfg.sim.delay.kind == DelayKind::lognormal);
  CHECK(cfg.strategies.front().label == "fedfa_delta");
}

TEST_CASE("field-level errors carry the offending path") {
  auto expect_path = [](json doc, const std::string& needle) {
    try {
      ExperimentConfig::parse(doc);
      FAIL_CHECK("expected ConfigError mentioning " << needle);
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find(needle) != std::string::npos);
    }
  };
  json bad_strategy = base_doc();
  bad_strategy["strategies"][0]["name"] = "fedsomething";
  expect_path(bad_strategy, "strategies[0].name");

  json bad_partition = base_doc();
  bad_partition["partition"] = {{"mode", "striped"}};
  expect_path(bad_partition, "partition.mode");

  json bad_axis = base_doc();
  bad_axis["sweep"] = {{"axis", "Z"}, {"values", {1.0}}};
  expect_path(bad_axis, "sweep.axis");

  json bad_beta = base_doc();
  bad_beta["strategies"][0] = {{"name", "fedasync"}, {"beta", 2.0}};
  expect_path(bad_beta, "strategies[0]");

  json no_csv = base_doc();
  no_csv["data"]["source"] = "csv";
  expect_path(no_csv, "data.csv_path");
}

TEST_CASE("resolved run config round-trips into an identical experiment") {
  ExperimentConfig cfg = ExperimentConfig::parse(base_doc());
  const StrategyEntry& entry = cfg.strategies.front();
  const json resolved = cfg.resolved_run_config(entry, 4);
  std::uint64_t seed = 0;
  auto [back, back_entry] = experiment_from_resolved(resolved, &seed);
  CHECK(seed == 4);
  CHECK(back.resolved_run_config(back_entry, seed) == resolved);
}

TEST_CASE("prox override is folded into the resolved local section") {
  ExperimentConfig cfg = ExperimentConfig::parse(base_doc());
  StrategyEntry entry = cfg.strategies.front();
  entry.prox_mu = 0.25;
  const json resolved = cfg.resolved_run_config(entry, 1);
  CHECK(resolved.at("local").at("prox_mu").get<double>() == 0.25);
  CHECK_FALSE(resolved.at("strategy").contains("prox_mu"));
}

TEST_CASE("execute_run honors the experiment seed end to end") {
  const ExperimentConfig cfg = ExperimentConfig::parse(base_doc());
  const RunLog a = execute_run(cfg, cfg.strategies.front(), 4);
  const RunLog b = execute_run(cfg, cfg.strategies.front(), 4);
  std::ostringstream sa, sb;
  a.write_ndjson(sa);
  b.write_ndjson(sb);
  CHECK(sa.str() == sb.str());
  CHECK(a.summary.versions == 10);
}

TEST_CASE("truncated run logs are rejected") {
  std::istringstream empty("");
  CHECK_THROWS_AS(RunLog::read_ndjson(empty), ConfigError);
  std::istringstream junk("{\"schema\":\"fedsim.runlog.v1\",\"strategy\":\"x\",\"seed\":1,"
                          "\"config\":{}}\n");
  CHECK_THROWS_AS(RunLog::read_ndjson(junk), ConfigError);  // missing summary
}

}  // TEST_SUITE
