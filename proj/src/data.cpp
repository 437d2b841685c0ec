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

#include "fedsim/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "fedsim/errors.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

void Dataset::validate() const {
  if (labels.empty()) throw ConfigError("dataset: no samples");
  if (n_features <= 0) throw ConfigError("dataset: n_features must be positive");
  if (n_classes <= 0) throw ConfigError("dataset: n_classes must be positive");
  if (features.size() != labels.size() * static_cast<std::size_t>(n_features)) {
    throw ConfigError("dataset: feature matrix shape does not match label count");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= n_classes) {
      throw ConfigError("dataset: label out of range at row " + std::to_string(i));
    }
  }
  for (double v : features) {
    if (!std::isfinite(v)) throw ConfigError("dataset: non-finite feature value");
  }
}

Dataset synth_classification(int n_samples, int n_features, int n_classes,
                             double cluster_spread, std::uint64_t seed) {
  if (n_samples <= 0 || n_features <= 0 || n_classes <= 0) {
    throw ConfigError("synth_classification: counts must be positive");
  }
  if (cluster_spread < 0.0) {
    throw ConfigError("synth_classification: cluster_spread must be >= 0");
  }
  Rng rng(seed, derive_stream(seed, {0x5d47au}));

  std::vector<double> means(static_cast<std::size_t>(n_classes) * n_features);
  for (auto& m : means) m = rng.uniform(-1.0, 1.0);

  Dataset ds;
  ds.n_features = n_features;
  ds.n_classes = n_classes;
  ds.labels.resize(n_samples);
  ds.features.resize(static_cast<std::size_t>(n_samples) * n_features);
  for (int i = 0; i < n_samples; ++i) {
    const int c = static_cast<int>(rng.uniform_int(n_classes));
    ds.labels[i] = c;
    const double* mu = means.data() + static_cast<std::size_t>(c) * n_features;
    double* row = ds.features.data() + static_cast<std::size_t>(i) * n_features;
    for (int f = 0; f < n_features; ++f) {
      row[f] = mu[f] + cluster_spread * rng.normal();
    }
  }
  return ds;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

}  // namespace

Dataset load_csv(const std::string& path, const std::string& label_column,
                 bool has_header) {
  std::ifstream in(path);
  if (!in) throw ConfigError("load_csv: cannot open " + path);

  std::string line;
  std::size_t row_no = 0;
  int label_idx = -1;
  std::vector<std::string> header;

  if (has_header) {
    if (!std::getline(in, line)) throw ConfigError("load_csv: empty file " + path);
    ++row_no;
    header = split_csv_line(line);
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (trim(header[i]) == label_column) label_idx = static_cast<int>(i);
    }
  }
  if (label_idx < 0) {
    try {
      std::size_t pos = 0;
      label_idx = std::stoi(label_column, &pos);
      if (pos != label_column.size()) label_idx = -1;
    } catch (...) {
      label_idx = -1;
    }
  }
  if (label_idx < 0) {
    throw ConfigError("load_csv: label column '" + label_column + "' not found in " + path);
  }

  Dataset ds;
  int max_label = -1;
  while (std::getline(in, line)) {
    ++row_no;
    if (trim(line).empty()) continue;
    const auto cells = split_csv_line(line);
    if (label_idx >= static_cast<int>(cells.size())) {
      throw ConfigError("load_csv: row " + std::to_string(row_no) +
                        ": label column index " + std::to_string(label_idx) +
                        " out of range");
    }
    const int width = static_cast<int>(cells.size()) - 1;
    if (ds.n_features == 0) {
      ds.n_features = width;
      if (width <= 0) {
        throw ConfigError("load_csv: row " + std::to_string(row_no) + ": no feature columns");
      }
    } else if (width != ds.n_features) {
      throw ConfigError("load_csv: row " + std::to_string(row_no) +
                        ": expected " + std::to_string(ds.n_features + 1) + " columns, got " +
                        std::to_string(cells.size()));
    }
    for (int i = 0; i < static_cast<int>(cells.size()); ++i) {
      const std::string cell = trim(cells[i]);
      try {
        std::size_t pos = 0;
        if (i == label_idx) {
          const long v = std::stol(cell, &pos);
          if (pos != cell.size()) throw std::invalid_argument(cell);
          if (v < 0) throw std::invalid_argument(cell);
          ds.labels.push_back(static_cast<int>(v));
          max_label = std::max(max_label, static_cast<int>(v));
        } else {
          const double v = std::stod(cell, &pos);
          if (pos != cell.size()) throw std::invalid_argument(cell);
          ds.features.push_back(v);
        }
      } catch (const std::exception&) {
        throw ConfigError("load_csv: row " + std::to_string(row_no) +
                          ": cannot parse cell '" + cell + "'");
      }
    }
  }
  if (ds.labels.empty()) throw ConfigError("load_csv: no data rows in " + path);
  ds.n_classes = max_label + 1;
  ds.validate();
  return ds;
}

std::pair<Dataset, Dataset> train_test_split(const Dataset& ds, double test_fraction,
                                             std::uint64_t seed) {
  if (test_fraction < 0.0 || test_fraction >= 1.0) {
    throw ConfigError("train_test_split: test_fraction must be in [0, 1)");
  }
  std::vector<int> order(ds.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed, derive_stream(seed, {0x7e57u}));
  rng.shuffle(order);

  const std::size_t n_test = static_cast<std::size_t>(std::llround(test_fraction * ds.size()));
  Dataset train, test;
  train.n_features = test.n_features = ds.n_features;
  train.n_classes = test.n_classes = ds.n_classes;
  for (std::size_t i = 0; i < order.size(); ++i) {
    Dataset& dst = (i < n_test) ? test : train;
    const int r = order[i];
    dst.labels.push_back(ds.labels[r]);
    const double* src = ds.row(r);
    dst.features.insert(dst.features.end(), src, src + ds.n_features);
  }
  if (train.labels.empty()) throw ConfigError("train_test_split: empty train split");
  return {std::move(train), std::move(test)};
}

void PartitionPlan::validate(std::size_t n_samples) const {
  if (assignments.empty()) throw ConfigError("partition: no clients");
  std::vector<char> seen(n_samples, 0);
  std::size_t total = 0;
  for (std::size_t k = 0; k < assignments.size(); ++k) {
    if (assignments[k].empty()) {
      throw ConfigError("partition: client " + std::to_string(k) + " has no samples");
    }
    for (int idx : assignments[k]) {
      if (idx < 0 || static_cast<std::size_t>(idx) >= n_samples) {
        throw ConfigError("partition: sample index out of range");
      }
      if (seen[idx]) throw ConfigError("partition: sample assigned twice");
      seen[idx] = 1;
      ++total;
    }
  }
  if (total != n_samples) throw ConfigError("partition: not all samples assigned");
}

PartitionPlan iid_partition(const Dataset& ds, int m, std::uint64_t seed) {
  if (m <= 0) throw ConfigError("iid_partition: m must be positive");
  if (static_cast<std::size_t>(m) > ds.size()) {
    throw ConfigError("iid_partition: more clients than samples");
  }
  std::vector<int> order(ds.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed, derive_stream(seed, {0x11dau}));
  rng.shuffle(order);

  PartitionPlan plan;
  plan.iid = true;
  plan.seed = seed;
  plan.assignments.resize(m);
  for (std::size_t i = 0; i < order.size(); ++i) {
    plan.assignments[i % m].push_back(order[i]);
  }
  plan.validate(ds.size());
  return plan;
}

PartitionPlan dirichlet_partition(const Dataset& ds, int m, double alpha,
                                  std::uint64_t seed) {
  if (m <= 0) throw ConfigError("dirichlet_partition: m must be positive");
  if (static_cast<std::size_t>(m) > ds.size()) {
    throw ConfigError("dirichlet_partition: more clients than samples");
  }
  if (alpha <= 0.0) throw ConfigError("dirichlet_partition: alpha must be positive");

  std::vector<std::vector<int>> by_label(ds.n_classes);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    by_label[ds.labels[i]].push_back(static_cast<int>(i));
  }

  Rng rng(seed, derive_stream(seed, {0xd1c4u}));
  constexpr int kMaxAttempts = 100;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    PartitionPlan plan;
    plan.alpha = alpha;
    plan.seed = seed;
    plan.assignments.resize(m);
    for (auto& idxs : by_label) {
      if (idxs.empty()) continue;
      rng.shuffle(idxs);
      const std::vector<double> props = rng.dirichlet(alpha, m);
      // Cumulative rounding keeps the per-label counts summing exactly to
      // the label's sample count.
      const double n = static_cast<double>(idxs.size());
      double cum = 0.0;
      std::size_t prev = 0;
      for (int k = 0; k < m; ++k) {
        cum += props[k];
        const std::size_t upto = (k == m - 1)
                                     ? idxs.size()
                                     : static_cast<std::size_t>(std::llround(cum * n));
        for (std::size_t i = prev; i < upto && i < idxs.size(); ++i) {
          plan.assignments[k].push_back(idxs[i]);
        }
        prev = std::min(upto, idxs.size());
      }
    }
    const bool all_nonempty = std::all_of(plan.assignments.begin(), plan.assignments.end(),
                                          [](const auto& a) { return !a.empty(); });
    if (all_nonempty) {
      plan.validate(ds.size());
      return plan;
    }
  }
  throw ConfigError("dirichlet_partition: could not produce nonempty clients after " +
                    std::to_string(kMaxAttempts) + " attempts (alpha too small for m?)");
}

std::vector<double> label_histogram(const Dataset& ds, const std::vector<int>& rows) {
  std::vector<double> h(ds.n_classes, 0.0);
  for (int r : rows) h[ds.labels[r]] += 1.0;
  if (!rows.empty()) {
    for (double& v : h) v /= static_cast<double>(rows.size());
  }
  return h;
}

}  // namespace fedsim
