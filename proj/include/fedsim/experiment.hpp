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
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedsim/bounds.hpp"
#include "fedsim/data.hpp"
#include "fedsim/model.hpp"
#include "fedsim/run_log.hpp"
#include "fedsim/simulator.hpp"

namespace fedsim {

enum class DataSource { synthetic, csv };

// One strategy row in an experiment; label disambiguates repeated names.
struct StrategyEntry {
  std::string label;
  StrategyConfig cfg;
  std::optional<double> prox_mu;  // overrides local.prox_mu for this strategy
};

struct BoundsSection {
  bool enabled = false;
  int n_probes = 8;
  double probe_scale = 0.5;
  int minibatch_draws = 64;
  int variance_batch_size = 8;
  std::vector<double> T_grid = {1e2, 3.16e2, 1e3, 3.16e3, 1e4, 3.16e4, 1e5};
  double c_eta = 1.0;
};

// Declarative experiment document: model, data source, partitioning, local
// training, simulation caps, strategy list, targets and sweep axes. Parsed
// from a single JSON file; unknown strategy names and malformed fields raise
// ConfigError with the offending field path.
struct ExperimentConfig {
  std::string name = "experiment";
  std::vector<std::uint64_t> seeds = {1};
  std::string output_dir;  // optional; resolved against FEDSIM_OUT_ROOT

  ModelSpec model;

  DataSource source = DataSource::synthetic;
  int n_samples = 4000;
  int n_features = 20;
  int n_classes = 10;
  double cluster_spread = 0.5;
  double test_fraction = 0.2;
  std::string csv_path;
  std::string label_column = "label";
  bool csv_has_header = true;

  bool iid = false;
  double alpha = 0.5;

  LocalTrainConfig local;
  SimConfig sim;  // strategy/seed fields overwritten per run

  std::vector<StrategyEntry> strategies;
  double target_accuracy = 0.8;

  std::string sweep_axis;  // one of K, M_c, alpha, eta_l, eta_g
  std::vector<double> sweep_values;

  BoundsSection bounds;

  static ExperimentConfig parse(const nlohmann::json& j);
  static ExperimentConfig load(const std::string& path);
  void validate() const;

  // Fully resolved single-run config, echoed into the log header; feeding it
  // back through replay reproduces the identical run.
  nlohmann::json resolved_run_config(const StrategyEntry& entry, std::uint64_t seed) const;
};

// Rebuilds an ExperimentConfig holding exactly one strategy and one seed from
// a resolved_run_config document.
std::pair<ExperimentConfig, StrategyEntry> experiment_from_resolved(const nlohmann::json& j,
                                                                    std::uint64_t* seed);

struct PreparedData {
  Dataset train;
  Dataset test;
  PartitionPlan partition;
};

PreparedData prepare_data(const ExperimentConfig& cfg, std::uint64_t seed);

// Runs one (strategy, seed) cell; header_json is filled with the resolved
// config.
RunLog execute_run(const ExperimentConfig& cfg, const StrategyEntry& entry,
                   std::uint64_t seed);

// Measured-vs-theoretical convergence diagnostics for one finished run.
struct BoundsReport {
  BoundInputs inputs;
  double f_w0 = 0.0;
  double f_star = 0.0;
  BoundValue bound;
  double measured_avg_grad_sq = 0.0;
  bool satisfied = false;
  RateScalingTable scaling;
  std::vector<double> series;
};

// Long centralized SGD run; its best loss serves as the f* lower estimate.
double centralized_best_loss(const ModelSpec& model, const Dataset& train,
                             std::uint64_t seed);

BoundsReport compute_bounds_report(const ExperimentConfig& cfg, const StrategyEntry& entry,
                                   std::uint64_t seed, const RunLog& log);

struct CliOptions {
  std::optional<std::string> out;
  bool force = false;
  int jobs = 1;
  bool recompute = false;
  std::vector<std::uint64_t> seed_override;
};

// Subcommand entry points; return process exit codes (0 ok, 2 config error,
// 3 divergence).
int cmd_run(const std::string& config_path, const CliOptions& opts);
int cmd_compare(const std::string& config_path, const CliOptions& opts);
int cmd_sweep(const std::string& config_path, const std::string& axis,
              const CliOptions& opts);
int cmd_replay(const std::string& log_path);

// Output root resolution: --out flag, then config output_dir, then
// $FEDSIM_OUT_ROOT/<name>, then ./out/<name>.
std::filesystem::path resolve_output_dir(const ExperimentConfig& cfg,
                                         const CliOptions& opts);

}  // namespace fedsim
