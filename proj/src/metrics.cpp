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

#include "fedsim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fedsim/errors.hpp"

namespace fedsim {

std::optional<TargetCrossing> time_to_target(const RunLog& log, double target_accuracy) {
  for (const auto& r : log.records) {
    if (r.eval_accuracy >= target_accuracy) {
      return TargetCrossing{r.virtual_time, r.version};
    }
  }
  return std::nullopt;
}

double best_accuracy(const RunLog& log) {
  if (log.records.empty()) throw ConfigError("best_accuracy: log has no eval records");
  double best = 0.0;
  for (const auto& r : log.records) best = std::max(best, r.eval_accuracy);
  return best;
}

std::vector<SpeedupRow> speedup_table(
    const std::vector<std::pair<std::string, const RunLog*>>& logs,
    double target_accuracy) {
  std::vector<SpeedupRow> rows;
  double best_time = std::numeric_limits<double>::infinity();
  long best_rounds = std::numeric_limits<long>::max();
  for (const auto& [name, log] : logs) {
    SpeedupRow row;
    row.strategy = name;
    const auto crossing = time_to_target(*log, target_accuracy);
    if (!crossing) {
      row.failed = true;
    } else {
      row.time = crossing->virtual_time;
      row.rounds = crossing->rounds;
      best_time = std::min(best_time, row.time);
      best_rounds = std::min(best_rounds, row.rounds);
    }
    rows.push_back(std::move(row));
  }
  for (auto& row : rows) {
    if (row.failed) continue;
    row.time_ratio = best_time > 0.0 ? row.time / best_time : 1.0;
    row.rounds_ratio = best_rounds > 0 ? static_cast<double>(row.rounds) /
                                             static_cast<double>(best_rounds)
                                       : 1.0;
  }
  return rows;
}

std::vector<double> gradient_norm_series(const RunLog& log, const ModelSpec& model,
                                         const Dataset& train) {
  if (log.records.empty()) throw ConfigError("gradient_norm_series: log has no records");
  const auto rows = all_rows(train);
  std::vector<double> series;
  double running = 0.0;
  for (const auto& r : log.records) {
    if (!r.checkpoint) {
      throw ConfigError("gradient_norm_series: log is missing checkpoints; rerun with "
                        "log_checkpoints enabled");
    }
    const ParamVector g = evaluate_gradient(model, *r.checkpoint, train, rows);
    running += squared_norm(g);
    series.push_back(running / static_cast<double>(series.size() + 1));
  }
  return series;
}

double accuracy_std_tail(const RunLog& log, double fraction) {
  if (log.records.empty()) throw ConfigError("accuracy_std_tail: log has no records");
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw ConfigError("accuracy_std_tail: fraction must lie in (0, 1]");
  }
  const std::size_t n = log.records.size();
  const std::size_t start = n - std::max<std::size_t>(1, static_cast<std::size_t>(fraction * n));
  double mean = 0.0;
  std::size_t count = 0;
  for (std::size_t i = start; i < n; ++i) {
    mean += log.records[i].eval_accuracy;
    ++count;
  }
  mean /= static_cast<double>(count);
  double var = 0.0;
  for (std::size_t i = start; i < n; ++i) {
    const double d = log.records[i].eval_accuracy - mean;
    var += d * d;
  }
  return std::sqrt(var / static_cast<double>(count));
}

}  // namespace fedsim
