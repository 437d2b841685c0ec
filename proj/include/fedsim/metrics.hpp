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

#include <optional>
#include <string>
#include <vector>

#include "fedsim/data.hpp"
#include "fedsim/model.hpp"
#include "fedsim/run_log.hpp"

namespace fedsim {

struct TargetCrossing {
  double virtual_time = 0.0;
  long rounds = 0;
};

// First eval record reaching the target accuracy; nullopt means "failed".
std::optional<TargetCrossing> time_to_target(const RunLog& log, double target_accuracy);

// Max accuracy over eval records; throws if the log has none.
double best_accuracy(const RunLog& log);

struct SpeedupRow {
  std::string strategy;
  bool failed = false;
  double time = 0.0;
  long rounds = 0;
  double time_ratio = 0.0;    // vs. the fastest non-failed strategy
  double rounds_ratio = 0.0;  // vs. the fewest rounds among non-failed
};

// Per-strategy time/rounds to target with ratios against the fastest entry.
// Failed strategies are marked and excluded from the ratio base.
std::vector<SpeedupRow> speedup_table(
    const std::vector<std::pair<std::string, const RunLog*>>& logs, double target_accuracy);

// Running average of the squared full-gradient norm at the logged
// checkpoints: series[i] = (1/(i+1)) * sum_{j<=i} ||grad f(w_j)||^2.
// Requires checkpoints in the log.
std::vector<double> gradient_norm_series(const RunLog& log, const ModelSpec& model,
                                         const Dataset& train);

// Standard deviation of eval accuracy over the trailing fraction of records.
// Used as the oscillation measure for trajectory stability comparisons.
double accuracy_std_tail(const RunLog& log, double fraction);

}  // namespace fedsim
