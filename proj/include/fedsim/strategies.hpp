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

#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "fedsim/param_vector.hpp"

namespace fedsim {

enum class Strategy { fedavg, fedasync, fedbuff, fedfa_param, fedfa_delta };
enum class StalenessKind { constant, polynomial };

// How fedfa_delta turns the buffered deltas into a server step. window_mean
// applies the mean of the whole window at every arrival, so a delta that
// stays in the window for r steps contributes eta_g * r / K of itself in
// total. one_shot applies only the newly arrived delta, scaled by 1 / K.
// Both coincide for K = 1.
enum class FedfaDeltaMode { window_mean, one_shot };

std::string strategy_name(Strategy s);
Strategy strategy_from_name(const std::string& name);

// One client's contribution. Exactly one of params / delta is set, matching
// the strategy's transmission mode.
struct ClientUpdate {
  int client_id = -1;
  long base_version = 0;  // server version the client trained from
  std::optional<ParamVector> params;
  std::optional<ParamVector> delta;
  int local_steps = 0;
  long update_id = 0;         // dispatch sequence number, unique per run
  double arrival_time = 0.0;  // set by the simulator
};

// Bounded FIFO holding the K most recent updates. Eviction happens only at
// the front, insertion only at the back, and size never exceeds capacity.
class SlidingBuffer {
 public:
  explicit SlidingBuffer(std::size_t capacity);

  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool full() const { return entries_.size() == capacity_; }
  void push(ClientUpdate u);
  ClientUpdate pop_front();
  void clear() { entries_.clear(); }
  const std::deque<ClientUpdate>& entries() const { return entries_; }

 private:
  std::size_t capacity_;
  std::deque<ClientUpdate> entries_;
};

struct StrategyConfig {
  Strategy strategy = Strategy::fedfa_delta;
  std::size_t buffer_k = 5;
  double eta_g = 1.0;
  double fedasync_beta = 0.5;
  StalenessKind staleness = StalenessKind::polynomial;
  double staleness_a = 0.5;
  FedfaDeltaMode fedfa_delta_mode = FedfaDeltaMode::window_mean;

  // s(tau): 1 for constant, (1 + tau)^-a for polynomial.
  double staleness_weight(long tau) const;
  void validate() const;
};

// Residence bookkeeping for the window_mean ledger: how many aggregation
// steps an update spent inside the window.
struct ResidenceRecord {
  long update_id = 0;
  long steps_in_window = 0;
  ParamVector delta;  // only filled when track_residence_deltas is on
};

struct StepResult {
  bool aggregated = false;
  long staleness = 0;                    // of the triggering update
  std::vector<long> applied_staleness;   // all updates applied this step
};

// Single-writer server state machine. One logical thread mutates it; readers
// take immutable copies of w_g.
struct ServerState {
  StrategyConfig cfg;
  ParamVector w_g;
  long version = 0;
  SlidingBuffer buffer;
  bool track_residence_deltas = false;

  std::vector<ResidenceRecord> residence_ledger;  // evicted / consumed entries
  std::deque<long> residence_steps;               // aligned with buffer entries

  ServerState(StrategyConfig c, ParamVector w0);
};

ServerState make_server(const StrategyConfig& cfg, ParamVector w0);

// version - base_version at arrival; never negative for a well-formed update.
long staleness_of(const ServerState& state, const ClientUpdate& update);

// Synchronous round: every update must carry the same payload mode and share
// base_version == state.version.
StepResult fedavg_aggregate(ServerState& state, const std::vector<ClientUpdate>& updates);

// w <- (1 - beta_t) w + beta_t w_l with beta_t = beta * s(tau).
StepResult fedasync_step(ServerState& state, const ClientUpdate& update);

// Buffers deltas; every K-th arrival applies w += eta_g * mean(deltas) and
// clears the buffer.
StepResult fedbuff_step(ServerState& state, const ClientUpdate& update);

// Sliding window over transmitted parameters. The first K-1 arrivals only
// fill the window (the server keeps broadcasting its initialization); from
// the filling arrival on, every arrival evicts the oldest entry as needed and
// publishes the window mean.
StepResult fedfa_param_step(ServerState& state, const ClientUpdate& update);

// Sliding window over transmitted deltas; see FedfaDeltaMode.
StepResult fedfa_delta_step(ServerState& state, const ClientUpdate& update);

// Dispatch for the per-arrival strategies (everything except fedavg).
StepResult apply_update(ServerState& state, const ClientUpdate& update);

// Ledger plus the still-buffered entries with their current counts.
std::vector<ResidenceRecord> residence_snapshot(const ServerState& state);

}  // namespace fedsim
