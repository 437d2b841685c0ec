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

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fedsim/errors.hpp"
#include "fedsim/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"fedsim: discrete-event simulator for asynchronous federated learning"};
  app.require_subcommand(1);

  std::string config_path;
  std::string axis;
  std::string log_path;
  fedsim::CliOptions opts;
  std::string out_flag;
  std::vector<std::uint64_t> seeds;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("config", config_path, "experiment config (JSON)")->required();
    sub->add_option("--out", out_flag, "output directory (overrides config and env)");
    sub->add_flag("--force", opts.force, "overwrite existing run outputs");
    sub->add_option("--jobs", opts.jobs, "parallel (strategy x seed) workers")
        ->check(CLI::PositiveNumber);
    sub->add_flag("--recompute", opts.recompute,
                  "rebuild tables/plots from stored runs without re-running");
    sub->add_option("--seed", seeds, "override the config seed list");
  };

  CLI::App* run = app.add_subcommand("run", "execute each (strategy x seed) cell");
  add_common(run);
  CLI::App* compare =
      app.add_subcommand("compare", "run >= 2 strategies and emit comparison tables");
  add_common(compare);
  CLI::App* sweep = app.add_subcommand("sweep", "run a parameter sweep axis");
  add_common(sweep);
  sweep->add_option("--axis", axis, "sweep axis: K, M_c, alpha, eta_l, eta_g");
  CLI::App* replay =
      app.add_subcommand("replay", "re-execute a stored log and verify byte-identity");
  replay->add_option("log", log_path, "run log (.ndjson)")->required();

  CLI11_PARSE(app, argc, argv);

  if (!out_flag.empty()) opts.out = out_flag;
  opts.seed_override = seeds;

  try {
    if (run->parsed()) return fedsim::cmd_run(config_path, opts);
    if (compare->parsed()) return fedsim::cmd_compare(config_path, opts);
    if (sweep->parsed()) return fedsim::cmd_sweep(config_path, axis, opts);
    if (replay->parsed()) return fedsim::cmd_replay(log_path);
  } catch (const fedsim::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const fedsim::DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
