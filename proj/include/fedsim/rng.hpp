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
#include <initializer_list>
#include <vector>

namespace fedsim {

inline std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Combines a seed with tag words into an independent stream id, so every
// (client, dispatch) pair can own its own generator regardless of the
// order the event loop touches them in.
inline std::uint64_t derive_stream(std::uint64_t seed,
                                   std::initializer_list<std::uint64_t> tags) {
  std::uint64_t x = seed;
  std::uint64_t h = splitmix64(x);
  for (std::uint64_t t : tags) {
    x = h ^ (t + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2));
    h = splitmix64(x);
  }
  return h;
}

// xoshiro256++ with hand-rolled distributions. The std::* distributions are
// implementation-defined, which would break byte-identical log replay across
// standard libraries; everything random in this project flows through here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) {
    std::uint64_t x = seed ^ (0x6a09e667f3bcc909ULL + stream * 0xd1342543de82ef95ULL);
    for (auto& s : state_) s = splitmix64(x);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // (0, 1], safe to pass to log().
  double uniform01_open_left() { return 1.0 - uniform01(); }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Unbiased integer in [0, n), n >= 1.
  std::uint64_t uniform_int(std::uint64_t n) {
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      std::uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  // Box-Muller; the second deviate of each pair is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform01_open_left();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  double normal(double mu, double sigma) { return mu + sigma * normal(); }

  double lognormal(double mu, double sigma) { return std::exp(normal(mu, sigma)); }

  // Pareto with minimum `scale` and tail index `shape`.
  double pareto(double shape, double scale) {
    return scale / std::pow(uniform01_open_left(), 1.0 / shape);
  }

  // Marsaglia-Tsang, unit scale. Valid for any alpha > 0.
  double gamma(double alpha) {
    if (alpha < 1.0) {
      const double u = uniform01_open_left();
      return gamma(alpha + 1.0) * std::pow(u, 1.0 / alpha);
    }
    const double d = alpha - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform01_open_left();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  // Symmetric Dirichlet(alpha) over n coordinates.
  std::vector<double> dirichlet(double alpha, std::size_t n) {
    std::vector<double> g(n);
    double sum = 0.0;
    for (auto& v : g) {
      v = gamma(alpha);
      sum += v;
    }
    if (sum <= 0.0) {
      // All-zero draw is possible for tiny alpha in finite precision;
      // fall back to a single random winner.
      g.assign(n, 0.0);
      g[uniform_int(n)] = 1.0;
      return g;
    }
    for (auto& v : g) v /= sum;
    return g;
  }

  // Fisher-Yates.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t state_[4];
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace fedsim
