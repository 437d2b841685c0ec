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
#include <string>
#include <vector>

#include "fedsim/errors.hpp"

namespace fedsim {

// Flat model parameter / delta container. Dimension is fixed per experiment;
// every operation below checks it.
using ParamVector = std::vector<double>;

inline bool all_finite(const ParamVector& v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

inline void check_finite(const ParamVector& v, const char* what) {
  if (!all_finite(v)) {
    throw DivergenceError(std::string(what) + ": non-finite parameter value");
  }
}

inline void check_same_dim(const ParamVector& a, const ParamVector& b, const char* what) {
  if (a.size() != b.size()) {
    throw ConfigError(std::string(what) + ": dimension mismatch (" +
                      std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
  }
}

// w + scale * d
inline ParamVector vec_axpy(const ParamVector& w, const ParamVector& d, double scale) {
  check_same_dim(w, d, "vec_axpy");
  ParamVector out(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) out[i] = w[i] + scale * d[i];
  return out;
}

inline void vec_axpy_inplace(ParamVector& w, const ParamVector& d, double scale) {
  check_same_dim(w, d, "vec_axpy");
  for (std::size_t i = 0; i < w.size(); ++i) w[i] += scale * d[i];
}

// Coordinatewise arithmetic mean. Summation runs in list order so that two
// call sites feeding the same operands in the same order agree bit for bit.
inline ParamVector vec_mean(const std::vector<const ParamVector*>& vs) {
  if (vs.empty()) throw ConfigError("vec_mean: empty input list");
  const std::size_t dim = vs.front()->size();
  ParamVector out(dim, 0.0);
  for (const ParamVector* v : vs) {
    check_same_dim(out, *v, "vec_mean");
    for (std::size_t i = 0; i < dim; ++i) out[i] += (*v)[i];
  }
  const double inv = 1.0 / static_cast<double>(vs.size());
  for (double& x : out) x *= inv;
  return out;
}

inline ParamVector vec_mean(const std::vector<ParamVector>& vs) {
  std::vector<const ParamVector*> ptrs;
  ptrs.reserve(vs.size());
  for (const auto& v : vs) ptrs.push_back(&v);
  return vec_mean(ptrs);
}

inline double dot(const ParamVector& a, const ParamVector& b) {
  check_same_dim(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double squared_norm(const ParamVector& v) { return dot(v, v); }

inline double l2_distance(const ParamVector& a, const ParamVector& b) {
  check_same_dim(a, b, "l2_distance");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

}  // namespace fedsim
