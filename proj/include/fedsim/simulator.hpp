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
#include <string>
#include <vector>

#include "fedsim/data.hpp"
#include "fedsim/delay.hpp"
#include "fedsim/model.hpp"
#include "fedsim/rng.hpp"
#include "fedsim/run_log.hpp"
#include "fedsim/strategies.hpp"

namespace fedsim {

struct SimConfig {
  int n_clients = 100;
  // Clients training simultaneously (M_c). For fedavg this is the per-round
  // cohort size.
  int concurrency = 10;
  StrategyConfig strategy;
  LocalTrainConfig local;
  DelayModel delay;
  int eval_every = 5;            // aggregation events between test evaluations
  long max_versions = 0;         // 0 = unset
  double max_virtual_time = 0.0; // 0 = unset; at least one cap is required
  bool log_checkpoints = false;
  bool trace_events = false;
  bool track_residence = false;
  std::uint64_t seed = 1;

  // Throws ConfigError on hard violations; returns soft warnings.
  std::vector<std::string> validate() const;
};

// Deterministic discrete-event run: dispatch `concurrency` clients, pop the
// earliest completion, apply the strategy step, resample a replacement that
// trains from the currently published model, until a stop condition fires.
// Identical (config, seed) produce byte-identical logs.
RunLog run_simulation(const SimConfig& cfg, const ModelSpec& model,
                      const Dataset& train, const PartitionPlan& partition,
                      const Dataset& test);

// Uniform draw from the clients not currently active.
int sample_replacement(int pool_size, const std::vector<char>& active, Rng& rng);

// Barrier idle time for synchronous strategies; identically zero for the
// per-arrival strategies, whose servers never wait.
double server_wait_accounting(const RunLog& log);

}  // namespace fedsim
