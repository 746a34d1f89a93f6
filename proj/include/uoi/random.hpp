// Copyright 2026 The UoI Toolkit Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>

namespace uoi {

/// Small deterministic PRNG (splitmix64 core) with cheap independent
/// streams. A stream is fully determined by (seed, stream id), so work
/// split across threads by stream id reproduces byte-identical results at
/// any parallelism level. Not for cryptography.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0) {
    state_ = scramble(seed + 0x9E3779B97F4A7C15ull * (stream + 1));
  }

  std::uint64_t next() {
    state_ += 0x9E3779B97F4A7C15ull;
    return scramble(state_);
  }

  /// Uniform double in [0, 1).
  double uniform() {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [lo, hi], both inclusive.
  int uniform_int(int lo, int hi) {
    if (lo > hi) {
      throw std::invalid_argument("uniform_int: empty range");
    }
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(next() % span);
  }

  /// Standard normal via Box-Muller. Uses two uniforms per draw and keeps
  /// no cached spare, so the consumed stream length is call-count
  /// predictable.
  double normal(double mean = 0.0, double stddev = 1.0) {
    double u1 = uniform();
    const double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    const double radius = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * radius * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  static std::uint64_t scramble(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ull;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBull;
    z ^= z >> 31;
    return z;
  }

  std::uint64_t state_ = 0;
};

}  // namespace uoi
