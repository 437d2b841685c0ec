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

#include "fedsim/simulator.hpp"

#include <algorithm>
#include <queue>

#include "fedsim/errors.hpp"

namespace fedsim {

namespace {

constexpr std::uint64_t kSelectTag = 0x5e1ecu;
constexpr std::uint64_t kTrainTag = 0x7124u;
constexpr std::uint64_t kDelayTag = 0xde1au;

struct PendingEvent {
  double fire_time = 0.0;
  int client_id = -1;
  long seq = 0;
  ClientUpdate update;
};

// Total order: earliest fire time first, ties broken by client id then
// dispatch sequence, so the event order is reproducible.
struct LaterEvent {
  bool operator()(const PendingEvent& a, const PendingEvent& b) const {
    if (a.fire_time != b.fire_time) return a.fire_time > b.fire_time;
    if (a.client_id != b.client_id) return a.client_id > b.client_id;
    return a.seq > b.seq;
  }
};

using EventQueue = std::priority_queue<PendingEvent, std::vector<PendingEvent>, LaterEvent>;

class SimRun {
 public:
  SimRun(const SimConfig& cfg, const ModelSpec& model, const Dataset& train,
         const PartitionPlan& partition, const Dataset& test)
      : cfg_(cfg),
        model_(model),
        train_(train),
        partition_(partition),
        test_(test),
        server_(cfg.strategy, init_params(model, cfg.seed)),
        select_rng_(cfg.seed, derive_stream(cfg.seed, {kSelectTag})),
        multipliers_(make_client_multipliers(cfg.delay, cfg.n_clients, cfg.seed)),
        active_(cfg.n_clients, 0) {
    server_.track_residence_deltas = cfg.track_residence;
    log_.strategy = strategy_name(cfg.strategy.strategy);
    log_.seed = cfg.seed;
  }

  RunLog run() {
    try {
      if (cfg_.strategy.strategy == Strategy::fedavg) {
        run_fedavg();
      } else {
        run_async();
      }
    } catch (const DivergenceError& e) {
      log_.summary.aborted = true;
      log_.summary.stop_reason = std::string("divergence: ") + e.what();
    }
    finalize();
    return std::move(log_);
  }

  const ServerState& server() const { return server_; }

 private:
  void dispatch(int client, double now) {
    if (partition_.assignments[client].empty()) {
      throw ConfigError("simulator: sampled client " + std::to_string(client) +
                        " has no local data");
    }
    PendingEvent ev;
    ev.seq = next_seq_++;
    ev.client_id = client;

    LocalTrainConfig local = cfg_.local;
    local.rng_seed = derive_stream(cfg_.seed, {kTrainTag, static_cast<std::uint64_t>(client),
                                               static_cast<std::uint64_t>(ev.seq)});
    const LocalTrainResult res =
        local_train(model_, server_.w_g, train_, partition_.assignments[client], local);

    ClientUpdate u;
    u.client_id = client;
    u.base_version = server_.version;
    u.local_steps = res.steps_run;
    u.update_id = ev.seq;
    if (sends_params()) {
      u.params = std::move(res.w_l);
    } else {
      u.delta = std::move(res.delta);
    }
    ev.update = std::move(u);

    Rng delay_rng(cfg_.seed, derive_stream(cfg_.seed, {kDelayTag, static_cast<std::uint64_t>(client),
                                                       static_cast<std::uint64_t>(ev.seq)}));
    const double delay = cfg_.delay.sample_base(delay_rng) * multipliers_[client];
    ev.fire_time = now + delay;

    if (cfg_.trace_events) {
      log_.trace.push_back({ev.seq, client, now, ev.fire_time, ev.update.base_version});
    }
    queue_.push(std::move(ev));
  }

  bool sends_params() const {
    switch (cfg_.strategy.strategy) {
      case Strategy::fedavg:
      case Strategy::fedasync:
      case Strategy::fedfa_param:
        return true;
      case Strategy::fedbuff:
      case Strategy::fedfa_delta:
        return false;
    }
    return true;
  }

  int draw_inactive() { return sample_replacement(cfg_.n_clients, active_, select_rng_); }

  void note_staleness(const std::vector<long>& taus) {
    for (long tau : taus) {
      log_.summary.tau_max = std::max(log_.summary.tau_max, tau);
      log_.summary.tau_histogram[tau] += 1;
      tau_sum_ += static_cast<double>(tau);
      tau_count_ += 1;
    }
  }

  void eval_record(double now, long staleness) {
    EvalRecord r;
    r.virtual_time = now;
    r.version = server_.version;
    r.eval_loss = evaluate_loss(model_, server_.w_g, test_, test_rows_cache());
    r.eval_accuracy = evaluate_accuracy(model_, server_.w_g, test_);
    r.staleness = staleness;
    r.cum_wait = log_.summary.barrier_wait;
    r.active_clients = cfg_.concurrency;
    if (cfg_.log_checkpoints) r.checkpoint = server_.w_g;
    log_.records.push_back(std::move(r));
    last_recorded_version_ = server_.version;
  }

  const std::vector<int>& test_rows_cache() {
    if (test_rows_.empty()) test_rows_ = all_rows(test_);
    return test_rows_;
  }

  bool version_cap_reached() const {
    return cfg_.max_versions > 0 && server_.version >= cfg_.max_versions;
  }

  void run_async() {
    for (int i = 0; i < cfg_.concurrency; ++i) {
      const int c = draw_inactive();
      active_[c] = 1;
      dispatch(c, 0.0);
    }

    std::vector<double> fedbuff_waiting;
    std::vector<double> warmup_waiting;
    bool first_aggregation_done = false;

    while (true) {
      if (queue_.empty()) {
        log_.summary.stop_reason = "event queue exhausted";
        break;
      }
      if (cfg_.max_virtual_time > 0.0 && queue_.top().fire_time > cfg_.max_virtual_time) {
        log_.summary.stop_reason = "max_virtual_time";
        break;
      }
      PendingEvent ev = queue_.top();
      queue_.pop();
      const double now = ev.fire_time;
      now_ = now;
      ev.update.arrival_time = now;
      log_.summary.arrivals += 1;

      const StepResult step = apply_update(server_, ev.update);
      note_staleness(step.applied_staleness);

      if (!step.aggregated) {
        if (cfg_.strategy.strategy == Strategy::fedbuff) fedbuff_waiting.push_back(now);
        if (cfg_.strategy.strategy == Strategy::fedfa_param ||
            cfg_.strategy.strategy == Strategy::fedfa_delta) {
          warmup_waiting.push_back(now);
        }
      } else {
        for (double t : fedbuff_waiting) log_.summary.buffer_latency += now - t;
        fedbuff_waiting.clear();
        if (!first_aggregation_done) {
          for (double t : warmup_waiting) log_.summary.buffer_latency += now - t;
          warmup_waiting.clear();
          first_aggregation_done = true;
        }
        if (cfg_.eval_every > 0 && server_.version % cfg_.eval_every == 0) {
          eval_record(now, step.staleness);
        }
      }

      if (version_cap_reached()) {
        log_.summary.stop_reason = "max_versions";
        break;
      }

      // Maintain the concurrency level: the finished slot is refilled from the
      // idle pool, and the newcomer trains from the published model.
      active_[ev.client_id] = 0;
      const int replacement = draw_inactive();
      active_[replacement] = 1;
      dispatch(replacement, now);
      check_in_flight();
    }
  }

  // Invariant: exactly M_c clients are in flight between warm-up completion
  // and the stop condition.
  void check_in_flight() const {
    int active = 0;
    for (char a : active_) active += a;
    if (active != cfg_.concurrency || queue_.size() != static_cast<std::size_t>(active)) {
      throw std::logic_error("simulator: concurrency invariant violated");
    }
  }

  void run_fedavg() {
    const int cohort = cfg_.concurrency;
    while (true) {
      if (version_cap_reached()) {
        log_.summary.stop_reason = "max_versions";
        break;
      }
      if (cfg_.max_virtual_time > 0.0 && now_ >= cfg_.max_virtual_time) {
        log_.summary.stop_reason = "max_virtual_time";
        break;
      }
      std::fill(active_.begin(), active_.end(), 0);
      for (int i = 0; i < cohort; ++i) {
        const int c = draw_inactive();
        active_[c] = 1;
        dispatch(c, now_);
      }
      std::vector<ClientUpdate> updates;
      std::vector<double> arrivals;
      updates.reserve(cohort);
      double round_end = now_;
      for (int i = 0; i < cohort; ++i) {
        PendingEvent ev = queue_.top();
        queue_.pop();
        round_end = ev.fire_time;
        arrivals.push_back(ev.fire_time);
        ev.update.arrival_time = ev.fire_time;
        updates.push_back(std::move(ev.update));
      }
      if (cfg_.max_virtual_time > 0.0 && round_end > cfg_.max_virtual_time) {
        // The straggler would finish past the budget; the round does not
        // complete inside it.
        log_.summary.stop_reason = "max_virtual_time";
        break;
      }
      for (double t : arrivals) log_.summary.barrier_wait += round_end - t;
      log_.summary.arrivals += cohort;
      now_ = round_end;

      const StepResult step = fedavg_aggregate(server_, updates);
      note_staleness(step.applied_staleness);
      if (cfg_.eval_every > 0 && server_.version % cfg_.eval_every == 0) {
        eval_record(now_, step.staleness);
      }
    }
  }

  void finalize() {
    log_.summary.versions = server_.version;
    log_.summary.end_time = now_;
    if (!log_.summary.aborted && last_recorded_version_ != server_.version &&
        server_.version > 0) {
      eval_record(now_, 0);
    }
    double best = 0.0;
    for (const auto& r : log_.records) best = std::max(best, r.eval_accuracy);
    log_.summary.best_accuracy = best;
    log_.summary.final_loss = log_.records.empty() ? 0.0 : log_.records.back().eval_loss;
    log_.summary.tau_mean = tau_count_ > 0 ? tau_sum_ / static_cast<double>(tau_count_) : 0.0;
  }

  const SimConfig& cfg_;
  const ModelSpec& model_;
  const Dataset& train_;
  const PartitionPlan& partition_;
  const Dataset& test_;
  ServerState server_;
  Rng select_rng_;
  std::vector<double> multipliers_;
  std::vector<char> active_;
  EventQueue queue_;
  RunLog log_;
  std::vector<int> test_rows_;
  double now_ = 0.0;
  long next_seq_ = 0;
  long last_recorded_version_ = -1;
  double tau_sum_ = 0.0;
  long tau_count_ = 0;
};

}  // namespace

std::vector<std::string> SimConfig::validate() const {
  std::vector<std::string> warnings;
  if (n_clients < 1) throw ConfigError("sim: n_clients must be >= 1");
  if (concurrency < 1 || concurrency > n_clients) {
    throw ConfigError("sim: concurrency must satisfy 1 <= M_c <= n_clients");
  }
  if (eval_every < 1) throw ConfigError("sim: eval_every must be >= 1");
  if (max_versions <= 0 && max_virtual_time <= 0.0) {
    throw ConfigError("sim: set max_versions and/or max_virtual_time");
  }
  strategy.validate();
  local.validate();
  delay.validate();
  if (strategy.strategy != Strategy::fedavg &&
      strategy.buffer_k > static_cast<std::size_t>(concurrency)) {
    warnings.push_back("buffer size K=" + std::to_string(strategy.buffer_k) +
                       " exceeds concurrency M_c=" + std::to_string(concurrency) +
                       "; the window will span multiple client generations");
  }
  return warnings;
}

RunLog run_simulation(const SimConfig& cfg, const ModelSpec& model, const Dataset& train,
                      const PartitionPlan& partition, const Dataset& test) {
  cfg.validate();
  model.validate();
  train.validate();
  test.validate();
  if (partition.n_clients() != cfg.n_clients) {
    throw ConfigError("sim: partition has " + std::to_string(partition.n_clients()) +
                      " clients, config expects " + std::to_string(cfg.n_clients));
  }
  partition.validate(train.size());

  SimRun run(cfg, model, train, partition, test);
  return run.run();
}

int sample_replacement(int pool_size, const std::vector<char>& active, Rng& rng) {
  int idle = 0;
  for (int c = 0; c < pool_size; ++c) {
    if (!active[c]) ++idle;
  }
  if (idle == 0) throw ConfigError("sample_replacement: no idle clients available");
  int pick = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(idle)));
  for (int c = 0; c < pool_size; ++c) {
    if (!active[c]) {
      if (pick == 0) return c;
      --pick;
    }
  }
  throw ConfigError("sample_replacement: internal scan failure");
}

double server_wait_accounting(const RunLog& log) { return log.summary.barrier_wait; }

}  // namespace fedsim
