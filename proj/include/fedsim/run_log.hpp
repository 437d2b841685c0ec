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

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fedsim/param_vector.hpp"

namespace fedsim {

// One evaluation point: written at aggregation events on the eval cadence.
struct EvalRecord {
  double virtual_time = 0.0;
  long version = 0;
  double eval_loss = 0.0;
  double eval_accuracy = 0.0;
  long staleness = 0;  // of the update that triggered this aggregation
  double cum_wait = 0.0;
  int active_clients = 0;
  std::optional<ParamVector> checkpoint;  // w_g snapshot, when enabled
};

// Arrival trace, enabled on demand; lets tests replay the exact event order.
struct EventTraceEntry {
  long seq = 0;
  int client_id = -1;
  double dispatch_time = 0.0;
  double fire_time = 0.0;
  long base_version = 0;
};

struct RunSummary {
  long versions = 0;   // server aggregation phases completed
  long arrivals = 0;   // client updates processed
  double end_time = 0.0;
  double best_accuracy = 0.0;
  double final_loss = 0.0;
  long tau_max = 0;
  double tau_mean = 0.0;
  std::map<long, long> tau_histogram;
  double barrier_wait = 0.0;    // synchronous barrier idle time (client-seconds)
  double buffer_latency = 0.0;  // arrival-to-first-aggregation wait (client-seconds)
  bool aborted = false;
  std::string stop_reason;
};

// Newline-delimited JSON on disk: a header object carrying the fully resolved
// configuration and seed, then one object per eval record, then a summary
// object. Byte-identical for identical (config, seed).
struct RunLog {
  std::string strategy;
  std::uint64_t seed = 0;
  std::string header_json;  // resolved config, serialized once at run start
  std::vector<EvalRecord> records;
  RunSummary summary;
  std::vector<EventTraceEntry> trace;

  void write_ndjson(std::ostream& os) const;
  static RunLog read_ndjson(std::istream& is);

  void write_csv(std::ostream& os) const;
};

}  // namespace fedsim
