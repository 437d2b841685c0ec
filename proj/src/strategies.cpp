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

#include "fedsim/strategies.hpp"

#include <cmath>

#include "fedsim/errors.hpp"

namespace fedsim {

std::string strategy_name(Strategy s) {
  switch (s) {
    case Strategy::fedavg: return "fedavg";
    case Strategy::fedasync: return "fedasync";
    case Strategy::fedbuff: return "fedbuff";
    case Strategy::fedfa_param: return "fedfa_param";
    case Strategy::fedfa_delta: return "fedfa_delta";
  }
  return "?";
}

Strategy strategy_from_name(const std::string& name) {
  if (name == "fedavg") return Strategy::fedavg;
  if (name == "fedasync") return Strategy::fedasync;
  if (name == "fedbuff") return Strategy::fedbuff;
  if (name == "fedfa_param") return Strategy::fedfa_param;
  if (name == "fedfa_delta") return Strategy::fedfa_delta;
  throw ConfigError("unknown strategy '" + name + "'");
}

SlidingBuffer::SlidingBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) throw ConfigError("sliding buffer: capacity must be >= 1");
}

void SlidingBuffer::push(ClientUpdate u) {
  if (entries_.size() >= capacity_) {
    throw ConfigError("sliding buffer: push would exceed capacity");
  }
  entries_.push_back(std::move(u));
}

ClientUpdate SlidingBuffer::pop_front() {
  if (entries_.empty()) throw ConfigError("sliding buffer: pop from empty buffer");
  ClientUpdate u = std::move(entries_.front());
  entries_.pop_front();
  return u;
}

double StrategyConfig::staleness_weight(long tau) const {
  if (staleness == StalenessKind::constant) return 1.0;
  return std::pow(1.0 + static_cast<double>(tau), -staleness_a);
}

void StrategyConfig::validate() const {
  if (buffer_k < 1) throw ConfigError("strategy: K must be >= 1");
  if (!(eta_g >= 0.0) || !std::isfinite(eta_g)) {
    throw ConfigError("strategy: eta_g must be finite and >= 0");
  }
  if (strategy == Strategy::fedasync &&
      !(fedasync_beta > 0.0 && fedasync_beta <= 1.0)) {
    throw ConfigError("strategy: fedasync beta must lie in (0, 1]");
  }
  if (staleness_a < 0.0) throw ConfigError("strategy: staleness exponent must be >= 0");
}

ServerState::ServerState(StrategyConfig c, ParamVector w0)
    : cfg(c), w_g(std::move(w0)), buffer(c.buffer_k) {
  cfg.validate();
  check_finite(w_g, "server init");
}

ServerState make_server(const StrategyConfig& cfg, ParamVector w0) {
  return ServerState(cfg, std::move(w0));
}

long staleness_of(const ServerState& state, const ClientUpdate& update) {
  if (update.base_version > state.version) {
    throw ConfigError("update base_version is ahead of the server");
  }
  return state.version - update.base_version;
}

namespace {

const ParamVector& require_params(const ClientUpdate& u, const char* who) {
  if (!u.params || u.delta) {
    throw ConfigError(std::string(who) + ": update must carry parameters only");
  }
  return *u.params;
}

const ParamVector& require_delta(const ClientUpdate& u, const char* who) {
  if (!u.delta || u.params) {
    throw ConfigError(std::string(who) + ": update must carry a delta only");
  }
  return *u.delta;
}

ParamVector buffered_mean(const SlidingBuffer& buf, bool params_mode) {
  std::vector<const ParamVector*> vs;
  vs.reserve(buf.size());
  for (const auto& e : buf.entries()) {
    vs.push_back(params_mode ? &*e.params : &*e.delta);
  }
  return vec_mean(vs);
}

void record_eviction(ServerState& state, const ClientUpdate& evicted, long steps) {
  ResidenceRecord rec;
  rec.update_id = evicted.update_id;
  rec.steps_in_window = steps;
  if (state.track_residence_deltas && evicted.delta) rec.delta = *evicted.delta;
  state.residence_ledger.push_back(std::move(rec));
}

}  // namespace

StepResult fedavg_aggregate(ServerState& state, const std::vector<ClientUpdate>& updates) {
  if (updates.empty()) throw ConfigError("fedavg: empty update list");
  const bool params_mode = updates.front().params.has_value();
  for (const auto& u : updates) {
    if (u.base_version != state.version) {
      throw ConfigError("fedavg: barrier violation, update from version " +
                        std::to_string(u.base_version) + " at server version " +
                        std::to_string(state.version));
    }
    if (params_mode) {
      require_params(u, "fedavg");
    } else {
      require_delta(u, "fedavg");
    }
  }
  std::vector<const ParamVector*> vs;
  vs.reserve(updates.size());
  for (const auto& u : updates) vs.push_back(params_mode ? &*u.params : &*u.delta);
  const ParamVector mean = vec_mean(vs);
  if (params_mode) {
    state.w_g = mean;
  } else {
    vec_axpy_inplace(state.w_g, mean, 1.0);
  }
  check_finite(state.w_g, "fedavg");
  state.version += 1;

  StepResult res;
  res.aggregated = true;
  res.staleness = 0;
  res.applied_staleness.assign(updates.size(), 0);
  return res;
}

StepResult fedasync_step(ServerState& state, const ClientUpdate& update) {
  const ParamVector& w_l = require_params(update, "fedasync");
  check_same_dim(state.w_g, w_l, "fedasync");
  const long tau = staleness_of(state, update);
  const double beta_t = state.cfg.fedasync_beta * state.cfg.staleness_weight(tau);
  for (std::size_t i = 0; i < state.w_g.size(); ++i) {
    state.w_g[i] = (1.0 - beta_t) * state.w_g[i] + beta_t * w_l[i];
  }
  check_finite(state.w_g, "fedasync");
  state.version += 1;

  StepResult res;
  res.aggregated = true;
  res.staleness = tau;
  res.applied_staleness = {tau};
  return res;
}

StepResult fedbuff_step(ServerState& state, const ClientUpdate& update) {
  require_delta(update, "fedbuff");
  const long tau = staleness_of(state, update);
  state.buffer.push(update);

  StepResult res;
  res.staleness = tau;
  if (!state.buffer.full()) return res;

  // K-th arrival: apply the mean of the buffered deltas and start over.
  for (const auto& e : state.buffer.entries()) {
    res.applied_staleness.push_back(state.version - e.base_version);
  }
  const ParamVector mean = buffered_mean(state.buffer, /*params_mode=*/false);
  vec_axpy_inplace(state.w_g, mean, state.cfg.eta_g);
  check_finite(state.w_g, "fedbuff");
  state.buffer.clear();
  state.version += 1;
  res.aggregated = true;
  return res;
}

StepResult fedfa_param_step(ServerState& state, const ClientUpdate& update) {
  require_params(update, "fedfa_param");
  const long tau = staleness_of(state, update);
  const bool was_full = state.buffer.full();

  StepResult res;
  res.staleness = tau;
  if (was_full) state.buffer.pop_front();
  state.buffer.push(update);
  if (!state.buffer.full()) {
    // Warm-up: the server keeps publishing its initialization until the
    // window holds K updates; the filling arrival performs the first
    // aggregation, which is what makes the window equal FedBuff whenever it
    // holds one homogeneous round.
    state.version += 1;
    return res;
  }
  if (was_full) {
    res.applied_staleness = {tau};
  } else {
    // Filling aggregation: every buffered warm-up update is applied for the
    // first time here.
    for (const auto& e : state.buffer.entries()) {
      res.applied_staleness.push_back(state.version - e.base_version);
    }
  }
  state.w_g = buffered_mean(state.buffer, /*params_mode=*/true);
  check_finite(state.w_g, "fedfa_param");
  state.version += 1;
  res.aggregated = true;
  return res;
}

StepResult fedfa_delta_step(ServerState& state, const ClientUpdate& update) {
  require_delta(update, "fedfa_delta");
  const long tau = staleness_of(state, update);
  const bool was_full = state.buffer.full();

  StepResult res;
  res.staleness = tau;
  if (was_full) {
    const ClientUpdate evicted = state.buffer.pop_front();
    record_eviction(state, evicted, state.residence_steps.front());
    state.residence_steps.pop_front();
  }
  state.buffer.push(update);
  state.residence_steps.push_back(0);
  if (!state.buffer.full()) {
    state.version += 1;
    return res;
  }
  if (was_full) {
    res.applied_staleness = {tau};
  } else {
    for (const auto& e : state.buffer.entries()) {
      res.applied_staleness.push_back(state.version - e.base_version);
    }
  }

  if (state.cfg.fedfa_delta_mode == FedfaDeltaMode::window_mean) {
    const ParamVector mean = buffered_mean(state.buffer, /*params_mode=*/false);
    vec_axpy_inplace(state.w_g, mean, state.cfg.eta_g);
    for (auto& r : state.residence_steps) r += 1;
  } else {
    const double scale = state.cfg.eta_g / static_cast<double>(state.cfg.buffer_k);
    vec_axpy_inplace(state.w_g, *update.delta, scale);
    state.residence_steps.back() += 1;
  }
  check_finite(state.w_g, "fedfa_delta");
  state.version += 1;
  res.aggregated = true;
  return res;
}

StepResult apply_update(ServerState& state, const ClientUpdate& update) {
  switch (state.cfg.strategy) {
    case Strategy::fedasync: return fedasync_step(state, update);
    case Strategy::fedbuff: return fedbuff_step(state, update);
    case Strategy::fedfa_param: return fedfa_param_step(state, update);
    case Strategy::fedfa_delta: return fedfa_delta_step(state, update);
    case Strategy::fedavg:
      throw ConfigError("fedavg aggregates whole rounds; use fedavg_aggregate");
  }
  throw ConfigError("unknown strategy");
}

std::vector<ResidenceRecord> residence_snapshot(const ServerState& state) {
  std::vector<ResidenceRecord> all = state.residence_ledger;
  std::size_t i = 0;
  for (const auto& e : state.buffer.entries()) {
    ResidenceRecord rec;
    rec.update_id = e.update_id;
    rec.steps_in_window = i < state.residence_steps.size() ? state.residence_steps[i] : 0;
    if (state.track_residence_deltas && e.delta) rec.delta = *e.delta;
    all.push_back(std::move(rec));
    ++i;
  }
  return all;
}

}  // namespace fedsim
