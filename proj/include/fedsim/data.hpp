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
#include <string>
#include <utility>
#include <vector>

namespace fedsim {

// Row-major feature matrix plus integer class labels in [0, n_classes).
struct Dataset {
  int n_features = 0;
  int n_classes = 0;
  std::vector<double> features;  // size() == rows * n_features
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  const double* row(std::size_t i) const { return features.data() + i * n_features; }
  void validate() const;
};

// Gaussian class clusters with distinct means; deterministic under seed.
Dataset synth_classification(int n_samples, int n_features, int n_classes,
                             double cluster_spread, std::uint64_t seed);

// Comma-separated values, optional single header row, label column selected
// by name (requires a header) or by 0-based index. UTF-8, numeric features,
// integer labels.
Dataset load_csv(const std::string& path, const std::string& label_column,
                 bool has_header);

std::pair<Dataset, Dataset> train_test_split(const Dataset& ds, double test_fraction,
                                             std::uint64_t seed);

// Per-client sample index lists. Lists are pairwise disjoint, cover
// {0..n_samples-1}, and every client owns at least one sample.
struct PartitionPlan {
  std::vector<std::vector<int>> assignments;
  double alpha = 0.0;  // 0 means IID
  bool iid = false;
  std::uint64_t seed = 0;

  int n_clients() const { return static_cast<int>(assignments.size()); }
  void validate(std::size_t n_samples) const;
};

PartitionPlan iid_partition(const Dataset& ds, int m, std::uint64_t seed);

// Per-label client proportions drawn from Dir(alpha * 1_m). Draws leaving any
// client empty are rejected and resampled (up to 100 attempts).
PartitionPlan dirichlet_partition(const Dataset& ds, int m, double alpha,
                                  std::uint64_t seed);

// Per-client label histogram, normalized. Used by partition diagnostics.
std::vector<double> label_histogram(const Dataset& ds, const std::vector<int>& rows);

}  // namespace fedsim
