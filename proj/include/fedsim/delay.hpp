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

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "fedsim/errors.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

enum class DelayKind { lognormal, pareto, fixed };

// Per-round compute + communication delay, in virtual seconds. Base draws are
// long-tailed and normalized to mean_seconds; a persistent per-client speed
// multiplier (itself long-tailed: most clients fast, a few slow) is applied
// on top. Explicit multipliers override the drawn ones.
struct DelayModel {
  DelayKind kind = DelayKind::lognormal;
  double mean_seconds = 10.0;
  double sigma = 1.0;              // lognormal shape
  double pareto_shape = 2.0;       // > 1 so the mean exists
  double client_speed_sigma = 0.5; // lognormal sigma of the per-client multiplier
  std::vector<double> client_multipliers;  // optional explicit table

  void validate() const {
    if (!(mean_seconds > 0.0)) throw ConfigError("delay: mean_seconds must be > 0");
    if (sigma < 0.0) throw ConfigError("delay: sigma must be >= 0");
    if (kind == DelayKind::pareto && !(pareto_shape > 1.0)) {
      throw ConfigError("delay: pareto shape must be > 1");
    }
    if (client_speed_sigma < 0.0) throw ConfigError("delay: client_speed_sigma must be >= 0");
    for (double m : client_multipliers) {
      if (!(m > 0.0) || !std::isfinite(m)) {
        throw ConfigError("delay: client multipliers must be positive and finite");
      }
    }
  }

  // Mean-normalized base draw: E[sample_base] == mean_seconds.
  double sample_base(Rng& rng) const {
    switch (kind) {
      case DelayKind::fixed:
        return mean_seconds;
      case DelayKind::lognormal: {
        const double scale = mean_seconds / std::exp(0.5 * sigma * sigma);
        return scale * std::exp(sigma * rng.normal());
      }
      case DelayKind::pareto: {
        const double scale = mean_seconds * (pareto_shape - 1.0) / pareto_shape;
        return rng.pareto(pareto_shape, scale);
      }
    }
    throw ConfigError("delay: unknown kind");
  }

  static std::string kind_name(DelayKind k) {
    switch (k) {
      case DelayKind::lognormal: return "lognormal";
      case DelayKind::pareto: return "pareto";
      case DelayKind::fixed: return "fixed";
    }
    return "?";
  }

  static DelayKind kind_from_name(const std::string& name) {
    if (name == "lognormal") return DelayKind::lognormal;
    if (name == "pareto") return DelayKind::pareto;
    if (name == "fixed") return DelayKind::fixed;
    throw ConfigError("delay: unknown kind '" + name + "'");
  }
};

// Persistent per-client speed multipliers. Median 1; the right tail holds the
// stragglers.
inline std::vector<double> make_client_multipliers(const DelayModel& dm, int n_clients,
                                                   std::uint64_t seed) {
  dm.validate();
  if (!dm.client_multipliers.empty()) {
    if (static_cast<int>(dm.client_multipliers.size()) != n_clients) {
      throw ConfigError("delay: explicit multiplier table must have one entry per client");
    }
    return dm.client_multipliers;
  }
  std::vector<double> mult(n_clients, 1.0);
  if (dm.client_speed_sigma > 0.0) {
    Rng rng(seed, derive_stream(seed, {0xc11e9u}));
    for (auto& m : mult) m = rng.lognormal(0.0, dm.client_speed_sigma);
  }
  return mult;
}

}  // namespace fedsim
