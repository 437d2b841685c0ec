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

#include "fedsim/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "fedsim/errors.hpp"
#include "fedsim/metrics.hpp"

namespace fedsim {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kDataTag = 0xda7au;
constexpr std::uint64_t kSplitTag = 0x5b117u;
constexpr std::uint64_t kPartTag = 0xbea7u;
constexpr std::uint64_t kSimTag = 0x51au;
constexpr std::uint64_t kProbeTag = 0xb0bu;

[[noreturn]] void field_error(const std::string& path, const std::string& what) {
  throw ConfigError(path + ": " + what);
}

template <typename T>
T require_field(const json& j, const std::string& path, const char* key) {
  if (!j.contains(key)) field_error(path + "." + key, "missing required field");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    field_error(path + "." + key, e.what());
  }
}

template <typename T>
T field_or(const json& j, const std::string& path, const char* key, T def) {
  if (!j.contains(key)) return def;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    field_error(path + "." + key, e.what());
  }
}

std::vector<double> eta_field(const json& j, const std::string& path, const char* key,
                              std::vector<double> def) {
  if (!j.contains(key)) return def;
  const json& v = j.at(key);
  if (v.is_number()) return {v.get<double>()};
  if (v.is_array()) {
    try {
      return v.get<std::vector<double>>();
    } catch (const json::exception& e) {
      field_error(path + "." + key, e.what());
    }
  }
  field_error(path + "." + key, "expected a number or an array of numbers");
}

ModelSpec parse_model(const json& j, const std::string& path) {
  ModelSpec m;
  const std::string kind = field_or<std::string>(j, path, "kind", "logistic_regression");
  if (kind == "logistic_regression") {
    m.kind = ModelKind::logistic_regression;
  } else if (kind == "mlp") {
    m.kind = ModelKind::mlp;
  } else {
    field_error(path + ".kind", "unknown model kind '" + kind + "'");
  }
  m.layer_sizes = require_field<std::vector<int>>(j, path, "layer_sizes");
  const std::string loss = field_or<std::string>(j, path, "loss", "cross_entropy");
  if (loss == "cross_entropy") {
    m.loss = Loss::cross_entropy;
  } else if (loss == "squared_error") {
    m.loss = Loss::squared_error;
  } else {
    field_error(path + ".loss", "unknown loss '" + loss + "'");
  }
  m.l2_reg = field_or<double>(j, path, "l2_reg", 0.0);
  m.bias = field_or<bool>(j, path, "bias", true);
  m.init_scale = field_or<double>(j, path, "init_scale", 0.0);
  try {
    m.validate();
  } catch (const ConfigError& e) {
    field_error(path, e.what());
  }
  return m;
}

json model_to_json(const ModelSpec& m) {
  return json{{"kind", m.kind == ModelKind::mlp ? "mlp" : "logistic_regression"},
              {"layer_sizes", m.layer_sizes},
              {"loss", m.loss == Loss::cross_entropy ? "cross_entropy" : "squared_error"},
              {"l2_reg", m.l2_reg},
              {"bias", m.bias},
              {"init_scale", m.init_scale}};
}

LocalTrainConfig parse_local(const json& j, const std::string& path) {
  LocalTrainConfig l;
  l.steps = field_or<int>(j, path, "steps", 5);
  l.eta_l = eta_field(j, path, "eta_l", {0.05});
  l.batch_size = field_or<int>(j, path, "batch_size", 32);
  l.prox_mu = field_or<double>(j, path, "prox_mu", 0.0);
  try {
    l.validate();
  } catch (const ConfigError& e) {
    field_error(path, e.what());
  }
  return l;
}

json local_to_json(const LocalTrainConfig& l) {
  return json{{"steps", l.steps},
              {"eta_l", l.eta_l},
              {"batch_size", l.batch_size},
              {"prox_mu", l.prox_mu}};
}

DelayModel parse_delay(const json& j, const std::string& path) {
  DelayModel d;
  d.kind = DelayModel::kind_from_name(field_or<std::string>(j, path, "kind", "lognormal"));
  d.mean_seconds = field_or<double>(j, path, "mean_seconds", 10.0);
  d.sigma = field_or<double>(j, path, "sigma", 1.0);
  d.pareto_shape = field_or<double>(j, path, "pareto_shape", 2.0);
  d.client_speed_sigma = field_or<double>(j, path, "client_speed_sigma", 0.5);
  d.client_multipliers =
      field_or<std::vector<double>>(j, path, "client_multipliers", {});
  try {
    d.validate();
  } catch (const ConfigError& e) {
    field_error(path, e.what());
  }
  return d;
}

json delay_to_json(const DelayModel& d) {
  return json{{"kind", DelayModel::kind_name(d.kind)},
              {"mean_seconds", d.mean_seconds},
              {"sigma", d.sigma},
              {"pareto_shape", d.pareto_shape},
              {"client_speed_sigma", d.client_speed_sigma},
              {"client_multipliers", d.client_multipliers}};
}

StrategyEntry parse_strategy_entry(const json& j, const std::string& path) {
  StrategyEntry e;
  const std::string name = require_field<std::string>(j, path, "name");
  try {
    e.cfg.strategy = strategy_from_name(name);
  } catch (const ConfigError& err) {
    field_error(path + ".name", err.what());
  }
  e.label = field_or<std::string>(j, path, "label", name);
  e.cfg.buffer_k = field_or<std::size_t>(j, path, "buffer_k", 5);
  e.cfg.eta_g = field_or<double>(j, path, "eta_g", 1.0);
  e.cfg.fedasync_beta = field_or<double>(j, path, "beta", 0.5);
  const std::string st = field_or<std::string>(j, path, "staleness", "polynomial");
  if (st == "constant") {
    e.cfg.staleness = StalenessKind::constant;
  } else if (st == "polynomial") {
    e.cfg.staleness = StalenessKind::polynomial;
  } else {
    field_error(path + ".staleness", "expected 'constant' or 'polynomial'");
  }
  e.cfg.staleness_a = field_or<double>(j, path, "staleness_a", 0.5);
  const std::string dm = field_or<std::string>(j, path, "delta_mode", "window_mean");
  if (dm == "window_mean") {
    e.cfg.fedfa_delta_mode = FedfaDeltaMode::window_mean;
  } else if (dm == "one_shot") {
    e.cfg.fedfa_delta_mode = FedfaDeltaMode::one_shot;
  } else {
    field_error(path + ".delta_mode", "expected 'window_mean' or 'one_shot'");
  }
  if (j.contains("prox_mu")) e.prox_mu = require_field<double>(j, path, "prox_mu");
  try {
    e.cfg.validate();
  } catch (const ConfigError& err) {
    field_error(path, err.what());
  }
  return e;
}

json strategy_entry_to_json(const StrategyEntry& e) {
  json j{{"name", strategy_name(e.cfg.strategy)},
         {"label", e.label},
         {"buffer_k", e.cfg.buffer_k},
         {"eta_g", e.cfg.eta_g},
         {"beta", e.cfg.fedasync_beta},
         {"staleness", e.cfg.staleness == StalenessKind::constant ? "constant" : "polynomial"},
         {"staleness_a", e.cfg.staleness_a},
         {"delta_mode",
          e.cfg.fedfa_delta_mode == FedfaDeltaMode::window_mean ? "window_mean" : "one_shot"}};
  if (e.prox_mu) j["prox_mu"] = *e.prox_mu;
  return j;
}

std::string sanitize(const std::string& s) {
  std::string out;
  for (char c : s) {
    out.push_back(std::isalnum(static_cast<unsigned char>(c)) ? c : '_');
  }
  return out;
}

}  // namespace

ExperimentConfig ExperimentConfig::parse(const json& j) {
  ExperimentConfig cfg;
  cfg.name = field_or<std::string>(j, "", "name", "experiment");
  cfg.seeds = field_or<std::vector<std::uint64_t>>(j, "", "seeds", {1});
  cfg.output_dir = field_or<std::string>(j, "", "output_dir", "");

  cfg.model = parse_model(j.value("model", json::object()), "model");

  const json jd = j.value("data", json::object());
  const std::string src = field_or<std::string>(jd, "data", "source", "synthetic");
  if (src == "synthetic") {
    cfg.source = DataSource::synthetic;
  } else if (src == "csv") {
    cfg.source = DataSource::csv;
  } else {
    field_error("data.source", "expected 'synthetic' or 'csv'");
  }
  cfg.n_samples = field_or<int>(jd, "data", "n_samples", 4000);
  cfg.n_features = field_or<int>(jd, "data", "n_features", 20);
  cfg.n_classes = field_or<int>(jd, "data", "n_classes", 10);
  cfg.cluster_spread = field_or<double>(jd, "data", "cluster_spread", 0.5);
  cfg.test_fraction = field_or<double>(jd, "data", "test_fraction", 0.2);
  cfg.csv_path = field_or<std::string>(jd, "data", "csv_path", "");
  cfg.label_column = field_or<std::string>(jd, "data", "label_column", "label");
  cfg.csv_has_header = field_or<bool>(jd, "data", "csv_has_header", true);
  if (cfg.source == DataSource::csv && cfg.csv_path.empty()) {
    field_error("data.csv_path", "required when source is 'csv'");
  }

  const json jp = j.value("partition", json::object());
  const std::string mode = field_or<std::string>(jp, "partition", "mode", "dirichlet");
  if (mode == "iid") {
    cfg.iid = true;
  } else if (mode == "dirichlet") {
    cfg.iid = false;
  } else {
    field_error("partition.mode", "expected 'iid' or 'dirichlet'");
  }
  cfg.alpha = field_or<double>(jp, "partition", "alpha", 0.5);

  cfg.local = parse_local(j.value("local", json::object()), "local");

  const json js = j.value("sim", json::object());
  cfg.sim.n_clients = field_or<int>(js, "sim", "n_clients", 100);
  cfg.sim.concurrency = field_or<int>(js, "sim", "concurrency", 10);
  cfg.sim.eval_every = field_or<int>(js, "sim", "eval_every", 5);
  cfg.sim.max_versions = field_or<long>(js, "sim", "max_versions", 0);
  cfg.sim.max_virtual_time = field_or<double>(js, "sim", "max_virtual_time", 0.0);
  cfg.sim.log_checkpoints = field_or<bool>(js, "sim", "log_checkpoints", false);
  cfg.sim.trace_events = field_or<bool>(js, "sim", "trace_events", false);
  cfg.sim.delay = parse_delay(j.value("delay", json::object()), "delay");
  cfg.sim.local = cfg.local;

  const json jst = j.value("strategies", json::array());
  if (!jst.is_array()) field_error("strategies", "expected an array");
  for (std::size_t i = 0; i < jst.size(); ++i) {
    cfg.strategies.push_back(
        parse_strategy_entry(jst[i], "strategies[" + std::to_string(i) + "]"));
  }
  // Disambiguate repeated labels so output files stay disjoint.
  for (std::size_t i = 0; i < cfg.strategies.size(); ++i) {
    int dup = 0;
    for (std::size_t k = 0; k < i; ++k) {
      if (cfg.strategies[k].label == cfg.strategies[i].label) ++dup;
    }
    if (dup > 0) cfg.strategies[i].label += "_" + std::to_string(dup + 1);
  }

  cfg.target_accuracy = field_or<double>(j, "", "target_accuracy", 0.8);

  const json jsw = j.value("sweep", json::object());
  cfg.sweep_axis = field_or<std::string>(jsw, "sweep", "axis", "");
  cfg.sweep_values = field_or<std::vector<double>>(jsw, "sweep", "values", {});

  const json jb = j.value("bounds", json::object());
  cfg.bounds.enabled = field_or<bool>(jb, "bounds", "enabled", false);
  cfg.bounds.n_probes = field_or<int>(jb, "bounds", "n_probes", 8);
  cfg.bounds.probe_scale = field_or<double>(jb, "bounds", "probe_scale", 0.5);
  cfg.bounds.minibatch_draws = field_or<int>(jb, "bounds", "minibatch_draws", 64);
  cfg.bounds.variance_batch_size = field_or<int>(jb, "bounds", "variance_batch_size", 8);
  cfg.bounds.T_grid = field_or<std::vector<double>>(jb, "bounds", "T_grid", cfg.bounds.T_grid);
  cfg.bounds.c_eta = field_or<double>(jb, "bounds", "c_eta", 1.0);

  cfg.validate();
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return parse(j);
}

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw ConfigError("seeds: at least one seed is required");
  if (strategies.empty()) throw ConfigError("strategies: at least one strategy is required");
  if (!(target_accuracy > 0.0 && target_accuracy <= 1.0)) {
    throw ConfigError("target_accuracy: must lie in (0, 1]");
  }
  if (source == DataSource::synthetic) {
    if (n_samples <= 0 || n_features <= 0 || n_classes <= 0) {
      throw ConfigError("data: synthetic sample/feature/class counts must be positive");
    }
  }
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ConfigError("data.test_fraction: must lie in (0, 1)");
  }
  if (!iid && !(alpha > 0.0)) throw ConfigError("partition.alpha: must be positive");
  if (!sweep_axis.empty()) {
    static const char* axes[] = {"K", "M_c", "alpha", "eta_l", "eta_g"};
    if (std::find_if(std::begin(axes), std::end(axes), [&](const char* a) {
          return sweep_axis == a;
        }) == std::end(axes)) {
      throw ConfigError("sweep.axis: expected one of K, M_c, alpha, eta_l, eta_g");
    }
  }
  SimConfig probe = sim;
  probe.strategy = strategies.front().cfg;
  probe.seed = seeds.front();
  probe.validate();
}

json ExperimentConfig::resolved_run_config(const StrategyEntry& entry,
                                           std::uint64_t seed) const {
  LocalTrainConfig effective_local = local;
  if (entry.prox_mu) effective_local.prox_mu = *entry.prox_mu;
  json data{{"source", source == DataSource::csv ? "csv" : "synthetic"},
            {"n_samples", n_samples},
            {"n_features", n_features},
            {"n_classes", n_classes},
            {"cluster_spread", cluster_spread},
            {"test_fraction", test_fraction},
            {"csv_path", csv_path},
            {"label_column", label_column},
            {"csv_has_header", csv_has_header}};
  json part{{"mode", iid ? "iid" : "dirichlet"}, {"alpha", alpha}};
  json simj{{"n_clients", sim.n_clients},
            {"concurrency", sim.concurrency},
            {"eval_every", sim.eval_every},
            {"max_versions", sim.max_versions},
            {"max_virtual_time", sim.max_virtual_time},
            {"log_checkpoints", sim.log_checkpoints || bounds.enabled},
            {"trace_events", sim.trace_events}};
  StrategyEntry stripped = entry;
  stripped.prox_mu.reset();  // already folded into local
  return json{{"schema", "fedsim.run.v1"},
              {"experiment", name},
              {"seed", seed},
              {"target_accuracy", target_accuracy},
              {"model", model_to_json(model)},
              {"data", data},
              {"partition", part},
              {"local", local_to_json(effective_local)},
              {"sim", simj},
              {"delay", delay_to_json(sim.delay)},
              {"strategy", strategy_entry_to_json(stripped)}};
}

std::pair<ExperimentConfig, StrategyEntry> experiment_from_resolved(const json& j,
                                                                    std::uint64_t* seed) {
  if (j.value("schema", "") != "fedsim.run.v1") {
    throw ConfigError("resolved config: unrecognized schema");
  }
  json doc;
  doc["name"] = j.value("experiment", "replay");
  doc["seeds"] = json::array({j.at("seed").get<std::uint64_t>()});
  doc["target_accuracy"] = j.value("target_accuracy", 0.8);
  doc["model"] = j.at("model");
  doc["data"] = j.at("data");
  doc["partition"] = j.at("partition");
  doc["local"] = j.at("local");
  doc["sim"] = j.at("sim");
  doc["delay"] = j.at("delay");
  doc["strategies"] = json::array({j.at("strategy")});
  ExperimentConfig cfg = ExperimentConfig::parse(doc);
  if (seed) *seed = j.at("seed").get<std::uint64_t>();
  return {cfg, cfg.strategies.front()};
}

PreparedData prepare_data(const ExperimentConfig& cfg, std::uint64_t seed) {
  Dataset full;
  if (cfg.source == DataSource::synthetic) {
    full = synth_classification(cfg.n_samples, cfg.n_features, cfg.n_classes,
                                cfg.cluster_spread, derive_stream(seed, {kDataTag}));
  } else {
    full = load_csv(cfg.csv_path, cfg.label_column, cfg.csv_has_header);
  }
  auto [train, test] = train_test_split(full, cfg.test_fraction,
                                        derive_stream(seed, {kSplitTag}));
  PartitionPlan plan =
      cfg.iid ? iid_partition(train, cfg.sim.n_clients, derive_stream(seed, {kPartTag}))
              : dirichlet_partition(train, cfg.sim.n_clients, cfg.alpha,
                                    derive_stream(seed, {kPartTag}));
  return PreparedData{std::move(train), std::move(test), std::move(plan)};
}

RunLog execute_run(const ExperimentConfig& cfg, const StrategyEntry& entry,
                   std::uint64_t seed) {
  PreparedData data = prepare_data(cfg, seed);
  SimConfig sim = cfg.sim;
  sim.strategy = entry.cfg;
  sim.local = cfg.local;
  if (entry.prox_mu) sim.local.prox_mu = *entry.prox_mu;
  sim.seed = derive_stream(seed, {kSimTag});
  if (cfg.bounds.enabled) sim.log_checkpoints = true;

  RunLog log = run_simulation(sim, cfg.model, data.train, data.partition, data.test);
  log.seed = seed;
  log.strategy = entry.label;
  log.header_json = cfg.resolved_run_config(entry, seed).dump();
  return log;
}

// ---------------------------------------------------------------------------
// Output helpers
// ---------------------------------------------------------------------------

namespace {

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << content;
}

std::string fmt_double(double v) { return json(v).dump(); }

// Aligned-text rendering of a CSV-like cell grid.
std::string align_table(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> widths;
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c >= widths.size()) widths.push_back(0);
      widths[c] = std::max(widths[c], row[c].size());
    }
  }
  std::ostringstream os;
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      os << row[c];
      if (c + 1 < row.size()) os << std::string(widths[c] - row[c].size() + 2, ' ');
    }
    os << "\n";
  }
  return os.str();
}

std::string csv_line(const std::vector<std::string>& cells) {
  std::string line;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) line += ",";
    line += cells[i];
  }
  return line + "\n";
}

struct RunCell {
  std::string label;
  std::uint64_t seed = 0;
  fs::path path;
};

fs::path run_path(const fs::path& runs_dir, const std::string& label, std::uint64_t seed) {
  return runs_dir / (sanitize(label) + "__seed" + std::to_string(seed) + ".ndjson");
}

RunLog read_log(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open run log " + path.string());
  return RunLog::read_ndjson(in);
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];  // lower middle for even counts
}

// Medians per strategy across seeds. A strategy counts as failed when fewer
// than half its seeds reach the target.
struct StrategySummary {
  std::string label;
  bool failed = false;
  double median_time = 0.0;
  double median_rounds = 0.0;
  double median_best_acc = 0.0;
  int successes = 0;
  int runs = 0;
};

StrategySummary summarize_strategy(const std::string& label,
                                   const std::vector<const RunLog*>& logs, double target) {
  StrategySummary s;
  s.label = label;
  s.runs = static_cast<int>(logs.size());
  std::vector<double> times, rounds, bests;
  for (const RunLog* log : logs) {
    bests.push_back(best_accuracy(*log));
    if (auto c = time_to_target(*log, target)) {
      times.push_back(c->virtual_time);
      rounds.push_back(static_cast<double>(c->rounds));
      ++s.successes;
    }
  }
  s.median_best_acc = median_of(bests);
  if (s.successes * 2 < s.runs) {
    s.failed = true;
  } else {
    s.median_time = median_of(times);
    s.median_rounds = median_of(rounds);
  }
  return s;
}

const char* kPlotScript = R"PY(#!/usr/bin/env python3
# fedsim.plots.v1 -- renders every *.csv series in this directory to PNG.
# Each CSV holds a '# title' comment line, a header row, then x,y rows.
import csv
import glob
import os
import sys

try:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except ImportError:
    sys.exit("matplotlib is required: pip install matplotlib")

here = os.path.dirname(os.path.abspath(__file__))
for path in sorted(glob.glob(os.path.join(here, "*.csv"))):
    title = os.path.basename(path)[:-4]
    xs, ys, header = [], [], None
    with open(path) as fh:
        for row in csv.reader(fh):
            if not row or row[0].startswith("#"):
                continue
            if header is None:
                header = row
                continue
            xs.append(float(row[0]))
            ys.append(float(row[1]))
    if not xs:
        continue
    plt.figure(figsize=(6, 4))
    plt.plot(xs, ys, marker=".", linewidth=1)
    plt.xlabel(header[0])
    plt.ylabel(header[1])
    plt.title(title)
    plt.grid(True, alpha=0.3)
    plt.tight_layout()
    plt.savefig(os.path.join(here, title + ".png"), dpi=120)
    plt.close()
    print("wrote", title + ".png")
)PY";

void write_plot_series(const fs::path& path, const std::string& title,
                       const std::string& xname, const std::string& yname,
                       const std::vector<std::pair<double, double>>& xy) {
  std::ostringstream os;
  os << "# fedsim.plotdata.v1 " << title << "\n" << xname << "," << yname << "\n";
  for (const auto& [x, y] : xy) os << fmt_double(x) << "," << fmt_double(y) << "\n";
  write_file(path, os.str());
}

void emit_run_plot_data(const fs::path& plots_dir, const std::string& label,
                        std::uint64_t seed, const RunLog& log) {
  const std::string base = sanitize(label) + "__seed" + std::to_string(seed);
  std::vector<std::pair<double, double>> vs_time, vs_rounds, hist;
  for (const auto& r : log.records) {
    vs_time.emplace_back(r.virtual_time, r.eval_accuracy);
    vs_rounds.emplace_back(static_cast<double>(r.version), r.eval_accuracy);
  }
  for (const auto& [tau, count] : log.summary.tau_histogram) {
    hist.emplace_back(static_cast<double>(tau), static_cast<double>(count));
  }
  write_plot_series(plots_dir / ("acc_vs_time__" + base + ".csv"), "accuracy vs time " + base,
                    "virtual_time", "accuracy", vs_time);
  write_plot_series(plots_dir / ("acc_vs_rounds__" + base + ".csv"),
                    "accuracy vs rounds " + base, "round", "accuracy", vs_rounds);
  write_plot_series(plots_dir / ("staleness_hist__" + base + ".csv"),
                    "staleness histogram " + base, "staleness", "count", hist);
}

}  // namespace

// Long centralized SGD run; its best loss serves as the f* lower estimate.
double centralized_best_loss(const ModelSpec& model, const Dataset& train,
                             std::uint64_t seed) {
  LocalTrainConfig cfg;
  cfg.steps = 40;
  cfg.eta_l = {0.2};
  cfg.batch_size = 64;
  cfg.rng_seed = derive_stream(seed, {0xf57a4u});
  const auto rows = all_rows(train);
  ParamVector w = init_params(model, derive_stream(seed, {kSimTag}));
  double best = evaluate_loss(model, w, train, rows);
  for (int epoch = 0; epoch < 50; ++epoch) {
    cfg.eta_l = {0.2 / (1.0 + 0.05 * epoch)};
    cfg.rng_seed = derive_stream(seed, {0xf57a4u, static_cast<std::uint64_t>(epoch)});
    w = local_train(model, w, train, rows, cfg).w_l;
    best = std::min(best, evaluate_loss(model, w, train, rows));
  }
  return best;
}

BoundsReport compute_bounds_report(const ExperimentConfig& cfg, const StrategyEntry& entry,
                                   std::uint64_t seed, const RunLog& log) {
  PreparedData data = prepare_data(cfg, seed);
  const auto rows = all_rows(data.train);
  const ParamVector w0 = init_params(cfg.model, derive_stream(seed, {kSimTag}));

  std::vector<ParamVector> checkpoints;
  for (std::size_t i = 0; i < log.records.size();
       i += std::max<std::size_t>(1, log.records.size() / 8)) {
    if (log.records[i].checkpoint) checkpoints.push_back(*log.records[i].checkpoint);
  }
  Rng rng(seed, derive_stream(seed, {kProbeTag}));
  const auto probes = make_probe_points(w0, cfg.bounds.n_probes, cfg.bounds.probe_scale,
                                        checkpoints, rng);

  BoundsReport rep;
  rep.inputs = estimate_bound_inputs(cfg.model, data.train, data.partition, probes,
                                     cfg.bounds.minibatch_draws,
                                     cfg.bounds.variance_batch_size, rng);
  rep.inputs.tau_max = log.summary.tau_max;
  rep.inputs.eta_g = entry.cfg.eta_g;
  rep.inputs.eta_l_schedule = cfg.local.eta_l;
  rep.inputs.local_steps = cfg.local.steps;
  rep.inputs.buffer_k = entry.cfg.buffer_k;
  rep.inputs.rounds = std::max<long>(1, log.summary.versions);

  rep.f_w0 = evaluate_loss(cfg.model, w0, data.train, rows);
  double f_star = centralized_best_loss(cfg.model, data.train, seed);
  for (const auto& r : log.records) {
    if (r.checkpoint) {
      f_star = std::min(f_star, evaluate_loss(cfg.model, *r.checkpoint, data.train, rows));
    }
  }
  rep.f_star = f_star;
  rep.bound = convergence_rate_bound(rep.inputs, rep.f_w0, rep.f_star);
  rep.series = gradient_norm_series(log, cfg.model, data.train);
  rep.measured_avg_grad_sq = rep.series.back();
  rep.satisfied = rep.measured_avg_grad_sq <= rep.bound.value;
  rep.scaling = rate_scaling_check(rep.inputs, cfg.bounds.T_grid, rep.f_w0,
                                          rep.f_star, cfg.bounds.c_eta);
  return rep;
}

namespace {

struct OutputDirs {
  fs::path root, runs, tables, plots;
};

OutputDirs prepare_output(const ExperimentConfig& cfg, const CliOptions& opts) {
  OutputDirs dirs;
  dirs.root = resolve_output_dir(cfg, opts);
  dirs.runs = dirs.root / "runs";
  dirs.tables = dirs.root / "tables";
  dirs.plots = dirs.root / "plots";
  const bool has_runs = fs::exists(dirs.runs) && !fs::is_empty(dirs.runs);
  if (has_runs && !opts.force && !opts.recompute) {
    throw ConfigError("output directory " + dirs.root.string() +
                      " already contains runs; pass --force to overwrite or --recompute "
                      "to rebuild tables");
  }
  if (opts.recompute && !has_runs) {
    throw ConfigError("--recompute: no stored runs under " + dirs.runs.string());
  }
  fs::create_directories(dirs.runs);
  fs::create_directories(dirs.tables);
  fs::create_directories(dirs.plots);
  return dirs;
}

// Executes all (strategy x seed) cells, possibly across worker threads, and
// writes one NDJSON + CSV pair per run. Returns the cell list.
std::vector<RunCell> execute_all(const ExperimentConfig& cfg, const OutputDirs& dirs,
                                 int jobs, bool skip_execution) {
  std::vector<RunCell> cells;
  for (const auto& entry : cfg.strategies) {
    for (std::uint64_t seed : cfg.seeds) {
      cells.push_back({entry.label, seed, run_path(dirs.runs, entry.label, seed)});
    }
  }
  if (skip_execution) return cells;

  for (const auto& entry : cfg.strategies) {
    SimConfig probe = cfg.sim;
    probe.strategy = entry.cfg;
    probe.seed = cfg.seeds.front();
    for (const auto& w : probe.validate()) {
      std::cerr << "warning: [" << entry.label << "] " << w << "\n";
    }
  }

  std::atomic<std::size_t> next{0};
  std::mutex err_mutex;
  std::vector<std::string> errors;
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      const auto& cell = cells[i];
      try {
        const StrategyEntry* entry = nullptr;
        for (const auto& e : cfg.strategies) {
          if (e.label == cell.label) entry = &e;
        }
        RunLog log = execute_run(cfg, *entry, cell.seed);
        std::ostringstream nd;
        log.write_ndjson(nd);
        write_file(cell.path, nd.str());
        std::ostringstream csv;
        log.write_csv(csv);
        write_file(fs::path(cell.path).replace_extension(".csv"), csv.str());
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(err_mutex);
        errors.push_back(cell.label + " seed " + std::to_string(cell.seed) + ": " + e.what());
      }
    }
  };
  const int n_workers = std::max(1, std::min<int>(jobs, static_cast<int>(cells.size())));
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < n_workers; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (!errors.empty()) {
    std::string msg = "run failures:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }
  std::cout << "completed " << cells.size() << " runs -> " << dirs.runs.string() << "\n";
  return cells;
}

// Everything below postprocesses logs re-read from disk, so --recompute
// produces byte-identical tables.
int postprocess(const ExperimentConfig& cfg, const OutputDirs& dirs,
                const std::vector<RunCell>& cells, bool comparison_tables) {
  std::vector<std::pair<RunCell, RunLog>> logs;
  logs.reserve(cells.size());
  for (const auto& cell : cells) logs.emplace_back(cell, read_log(cell.path));

  bool any_aborted = false;
  std::vector<std::string> aborted_runs;

  {
    std::string csv = "# fedsim.table.v1 summary\n";
    const std::vector<std::string> header{
        "strategy", "seed", "versions", "arrivals", "end_time", "best_accuracy",
        "time_to_target", "rounds_to_target", "tau_max", "tau_mean", "barrier_wait",
        "buffer_latency", "stop_reason"};
    csv += csv_line(header);
    std::vector<std::vector<std::string>> txt{header};
    for (const auto& [cell, log] : logs) {
      const auto crossing = time_to_target(log, cfg.target_accuracy);
      if (log.summary.aborted) {
        any_aborted = true;
        aborted_runs.push_back(cell.label + " seed " + std::to_string(cell.seed));
      }
      const std::vector<std::string> row{
          cell.label, std::to_string(cell.seed), std::to_string(log.summary.versions),
          std::to_string(log.summary.arrivals), fmt_double(log.summary.end_time),
          fmt_double(log.summary.best_accuracy),
          crossing ? fmt_double(crossing->virtual_time) : "failed",
          crossing ? std::to_string(crossing->rounds) : "failed",
          std::to_string(log.summary.tau_max), fmt_double(log.summary.tau_mean),
          fmt_double(log.summary.barrier_wait), fmt_double(log.summary.buffer_latency),
          log.summary.stop_reason};
      csv += csv_line(row);
      txt.push_back(row);
    }
    write_file(dirs.tables / "summary.csv", csv);
    write_file(dirs.tables / "summary.txt", align_table(txt));
  }

  for (const auto& [cell, log] : logs) emit_run_plot_data(dirs.plots, cell.label, cell.seed, log);
  write_file(dirs.plots / "plot.py", kPlotScript);

  if (comparison_tables) {
    // Per-seed speedup tables plus a median table across seeds.
    for (std::uint64_t seed : cfg.seeds) {
      std::vector<std::pair<std::string, const RunLog*>> seed_logs;
      for (const auto& [cell, log] : logs) {
        if (cell.seed == seed) seed_logs.emplace_back(cell.label, &log);
      }
      const auto rows = speedup_table(seed_logs, cfg.target_accuracy);
      std::string csv = "# fedsim.table.v1 speedup seed=" + std::to_string(seed) + "\n";
      csv += csv_line({"strategy", "time", "time_ratio", "rounds", "rounds_ratio"});
      std::vector<std::vector<std::string>> txt{{"strategy", "time", "rounds"}};
      for (const auto& r : rows) {
        if (r.failed) {
          csv += csv_line({r.strategy, "failed", "", "failed", ""});
          txt.push_back({r.strategy, "failed", "failed"});
        } else {
          csv += csv_line({r.strategy, fmt_double(r.time), fmt_double(r.time_ratio),
                           std::to_string(r.rounds), fmt_double(r.rounds_ratio)});
          char tbuf[64], rbuf[64];
          std::snprintf(tbuf, sizeof tbuf, "%.1f (%.1fx)", r.time, r.time_ratio);
          std::snprintf(rbuf, sizeof rbuf, "%ld (%.1fx)", r.rounds, r.rounds_ratio);
          txt.push_back({r.strategy, tbuf, rbuf});
        }
      }
      write_file(dirs.tables / ("speedup_seed" + std::to_string(seed) + ".csv"), csv);
      write_file(dirs.tables / ("speedup_seed" + std::to_string(seed) + ".txt"),
                 align_table(txt));
    }

    std::string csv = "# fedsim.table.v1 comparison medians\n";
    csv += csv_line({"strategy", "median_time_to_target", "median_rounds_to_target",
                     "median_best_accuracy", "successes", "runs"});
    std::vector<std::vector<std::string>> txt{
        {"strategy", "time", "rounds", "best_acc", "reached"}};
    for (const auto& entry : cfg.strategies) {
      std::vector<const RunLog*> ls;
      for (const auto& [cell, log] : logs) {
        if (cell.label == entry.label) ls.push_back(&log);
      }
      const auto s = summarize_strategy(entry.label, ls, cfg.target_accuracy);
      csv += csv_line({s.label, s.failed ? "failed" : fmt_double(s.median_time),
                       s.failed ? "failed" : fmt_double(s.median_rounds),
                       fmt_double(s.median_best_acc), std::to_string(s.successes),
                       std::to_string(s.runs)});
      char acc[32];
      std::snprintf(acc, sizeof acc, "%.4f", s.median_best_acc);
      txt.push_back({s.label, s.failed ? "failed" : fmt_double(s.median_time),
                     s.failed ? "failed" : fmt_double(s.median_rounds), acc,
                     std::to_string(s.successes) + "/" + std::to_string(s.runs)});
    }
    write_file(dirs.tables / "comparison.csv", csv);
    write_file(dirs.tables / "comparison.txt", align_table(txt));
    {
      std::string c = "# fedsim.table.v1 best accuracy\n";
      c += csv_line({"strategy", "seed", "best_accuracy"});
      std::vector<std::vector<std::string>> btxt{{"strategy", "seed", "best_accuracy"}};
      for (const auto& [cell, log] : logs) {
        char acc[32];
        std::snprintf(acc, sizeof acc, "%.4f", log.summary.best_accuracy);
        c += csv_line({cell.label, std::to_string(cell.seed),
                       fmt_double(log.summary.best_accuracy)});
        btxt.push_back({cell.label, std::to_string(cell.seed), acc});
      }
      write_file(dirs.tables / "best_accuracy.csv", c);
      write_file(dirs.tables / "best_accuracy.txt", align_table(btxt));
    }
  }

  if (cfg.bounds.enabled) {
    std::string csv = "# fedsim.table.v1 bound diagnostics\n";
    csv += csv_line({"strategy", "seed", "L_hat", "sigma_l_sq", "sigma_g_sq", "G", "tau_max",
                     "f_w0", "f_star", "bound", "measured_avg_grad_sq", "satisfied",
                     "step_size_ok", "scaling_slope"});
    for (const auto& [cell, log] : logs) {
      const StrategyEntry* entry = nullptr;
      for (const auto& e : cfg.strategies) {
        if (e.label == cell.label) entry = &e;
      }
      const BoundsReport rep = compute_bounds_report(cfg, *entry, cell.seed, log);
      csv += csv_line({cell.label, std::to_string(cell.seed), fmt_double(rep.inputs.L_hat),
                       fmt_double(rep.inputs.sigma_l_hat), fmt_double(rep.inputs.sigma_g_hat),
                       fmt_double(rep.inputs.G_hat), std::to_string(rep.inputs.tau_max),
                       fmt_double(rep.f_w0), fmt_double(rep.f_star),
                       fmt_double(rep.bound.value), fmt_double(rep.measured_avg_grad_sq),
                       rep.satisfied ? "yes" : "no", rep.bound.step_size_ok ? "yes" : "no",
                       fmt_double(rep.scaling.fitted_slope)});
      std::vector<std::pair<double, double>> curve;
      for (std::size_t i = 0; i < rep.series.size(); ++i) {
        curve.emplace_back(static_cast<double>(log.records[i].version), rep.series[i]);
      }
      const std::string base = sanitize(cell.label) + "__seed" + std::to_string(cell.seed);
      write_plot_series(dirs.plots / ("bound_vs_measured__" + base + ".csv"),
                        "running avg grad norm " + base, "version", "avg_grad_norm_sq", curve);
      std::vector<std::pair<double, double>> ctab;
      for (const auto& r : rep.scaling.rows) ctab.emplace_back(r.T, r.bound);
      write_plot_series(dirs.plots / ("rate_bound_vs_T__" + base + ".csv"),
                        "rate bound vs T " + base, "T", "bound", ctab);
    }
    write_file(dirs.tables / "bounds.csv", csv);
  }

  std::cout << "tables -> " << dirs.tables.string() << ", plots -> " << dirs.plots.string()
            << "\n";
  if (any_aborted) {
    std::cerr << "diverged runs:\n";
    for (const auto& r : aborted_runs) std::cerr << "  " << r << "\n";
    return 3;
  }
  return 0;
}

void write_resolved_config(const ExperimentConfig& cfg, const OutputDirs& dirs) {
  json strategies = json::array();
  for (const auto& e : cfg.strategies) strategies.push_back(strategy_entry_to_json(e));
  json doc{{"schema", "fedsim.experiment.v1"},
           {"name", cfg.name},
           {"seeds", cfg.seeds},
           {"target_accuracy", cfg.target_accuracy},
           {"model", model_to_json(cfg.model)},
           {"local", local_to_json(cfg.local)},
           {"delay", delay_to_json(cfg.sim.delay)},
           {"strategies", strategies}};
  write_file(dirs.root / "config.resolved.json", doc.dump(2) + "\n");
}

ExperimentConfig apply_sweep_value(const ExperimentConfig& base, const std::string& axis,
                                   double value) {
  ExperimentConfig cfg = base;
  if (axis == "K") {
    for (auto& e : cfg.strategies) {
      if (e.cfg.strategy != Strategy::fedavg && e.cfg.strategy != Strategy::fedasync) {
        e.cfg.buffer_k = static_cast<std::size_t>(value);
      }
    }
  } else if (axis == "M_c") {
    cfg.sim.concurrency = static_cast<int>(value);
  } else if (axis == "alpha") {
    cfg.iid = false;
    cfg.alpha = value;
  } else if (axis == "eta_l") {
    cfg.local.eta_l = {value};
    cfg.sim.local = cfg.local;
  } else if (axis == "eta_g") {
    for (auto& e : cfg.strategies) e.cfg.eta_g = value;
  } else {
    throw ConfigError("sweep axis '" + axis + "' not in {K, M_c, alpha, eta_l, eta_g}");
  }
  return cfg;
}

std::string axis_value_name(double v) {
  std::ostringstream os;
  os << v;
  return sanitize(os.str());
}

}  // namespace

fs::path resolve_output_dir(const ExperimentConfig& cfg, const CliOptions& opts) {
  if (opts.out) return fs::path(*opts.out);
  if (!cfg.output_dir.empty()) return fs::path(cfg.output_dir);
  if (const char* root = std::getenv("FEDSIM_OUT_ROOT")) {
    return fs::path(root) / cfg.name;
  }
  return fs::path("out") / cfg.name;
}

int cmd_run(const std::string& config_path, const CliOptions& opts) {
  ExperimentConfig cfg = ExperimentConfig::load(config_path);
  if (!opts.seed_override.empty()) cfg.seeds = opts.seed_override;
  const OutputDirs dirs = prepare_output(cfg, opts);
  const auto cells = execute_all(cfg, dirs, opts.jobs, opts.recompute);
  write_resolved_config(cfg, dirs);
  return postprocess(cfg, dirs, cells, cfg.strategies.size() > 1);
}

int cmd_compare(const std::string& config_path, const CliOptions& opts) {
  ExperimentConfig cfg = ExperimentConfig::load(config_path);
  if (!opts.seed_override.empty()) cfg.seeds = opts.seed_override;
  if (cfg.strategies.size() < 2) {
    throw ConfigError("compare: at least two strategies are required");
  }
  const OutputDirs dirs = prepare_output(cfg, opts);
  const auto cells = execute_all(cfg, dirs, opts.jobs, opts.recompute);
  write_resolved_config(cfg, dirs);
  return postprocess(cfg, dirs, cells, true);
}

int cmd_sweep(const std::string& config_path, const std::string& axis,
              const CliOptions& opts) {
  ExperimentConfig base = ExperimentConfig::load(config_path);
  if (!opts.seed_override.empty()) base.seeds = opts.seed_override;
  const std::string effective_axis = axis.empty() ? base.sweep_axis : axis;
  if (effective_axis.empty()) throw ConfigError("sweep: no axis given");
  if (!axis.empty() && base.sweep_axis != axis && !base.sweep_axis.empty() &&
      base.sweep_values.empty()) {
    throw ConfigError("sweep: config provides no values for axis " + axis);
  }
  const std::vector<double>& values = base.sweep_values;
  if (values.empty()) throw ConfigError("sweep.values: empty axis value list");

  CliOptions root_opts = opts;
  OutputDirs root_dirs;
  {
    ExperimentConfig named = base;
    named.name = base.name + "_sweep_" + sanitize(effective_axis);
    root_dirs = prepare_output(named, root_opts);
  }

  struct ValueResult {
    double value;
    std::vector<StrategySummary> rows;
  };
  std::vector<ValueResult> results;
  int exit_code = 0;
  for (double v : values) {
    ExperimentConfig cfg = apply_sweep_value(base, effective_axis, v);
    OutputDirs dirs;
    dirs.root = root_dirs.root / (sanitize(effective_axis) + "_" + axis_value_name(v));
    dirs.runs = dirs.root / "runs";
    dirs.tables = dirs.root / "tables";
    dirs.plots = dirs.root / "plots";
    const bool has_runs = fs::exists(dirs.runs) && !fs::is_empty(dirs.runs);
    if (has_runs && !opts.force && !opts.recompute) {
      throw ConfigError("output directory " + dirs.root.string() +
                        " already contains runs; pass --force");
    }
    fs::create_directories(dirs.runs);
    fs::create_directories(dirs.tables);
    fs::create_directories(dirs.plots);
    const auto cells = execute_all(cfg, dirs, opts.jobs, opts.recompute);
    exit_code = std::max(exit_code, postprocess(cfg, dirs, cells, true));

    ValueResult res;
    res.value = v;
    for (const auto& entry : cfg.strategies) {
      std::vector<RunLog> stored;
      std::vector<const RunLog*> ls;
      for (const auto& cell : cells) {
        if (cell.label == entry.label) stored.push_back(read_log(cell.path));
      }
      for (const auto& log : stored) ls.push_back(&log);
      res.rows.push_back(summarize_strategy(entry.label, ls, cfg.target_accuracy));
    }
    results.push_back(std::move(res));
  }

  std::string csv = "# fedsim.table.v1 sweep axis=" + effective_axis + "\n";
  csv += csv_line({effective_axis, "strategy", "median_best_accuracy",
                   "median_time_to_target", "median_rounds_to_target"});
  std::vector<std::vector<std::string>> txt{
      {effective_axis, "strategy", "best_acc", "time", "rounds"}};
  for (const auto& res : results) {
    for (const auto& s : res.rows) {
      csv += csv_line({fmt_double(res.value), s.label, fmt_double(s.median_best_acc),
                       s.failed ? "failed" : fmt_double(s.median_time),
                       s.failed ? "failed" : fmt_double(s.median_rounds)});
      char acc[32];
      std::snprintf(acc, sizeof acc, "%.4f", s.median_best_acc);
      txt.push_back({axis_value_name(res.value), s.label, acc,
                     s.failed ? "failed" : fmt_double(s.median_time),
                     s.failed ? "failed" : fmt_double(s.median_rounds)});
    }
  }
  write_file(root_dirs.tables / ("sweep_" + sanitize(effective_axis) + ".csv"), csv);
  write_file(root_dirs.tables / ("sweep_" + sanitize(effective_axis) + ".txt"),
             align_table(txt));
  return exit_code;
}

int cmd_replay(const std::string& log_path) {
  std::ifstream in(log_path);
  if (!in) throw ConfigError("cannot open " + log_path);
  RunLog stored = RunLog::read_ndjson(in);

  std::uint64_t seed = 0;
  auto [cfg, entry] = experiment_from_resolved(json::parse(stored.header_json), &seed);
  RunLog fresh = execute_run(cfg, entry, seed);

  std::ostringstream a, b;
  stored.write_ndjson(a);
  fresh.write_ndjson(b);
  if (a.str() == b.str()) {
    std::cout << "replay OK: " << log_path << " reproduces byte-identically ("
              << fresh.records.size() << " records)\n";
    return 0;
  }
  std::cerr << "replay MISMATCH: regenerated log differs from " << log_path << "\n";
  return 1;
}

}  // namespace fedsim
