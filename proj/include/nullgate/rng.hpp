// Copyright 2026 The nullgate Authors.
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

#include <cstdint>
#include <vector>

namespace nullgate {

// Counter-based generator: the i-th draw of stream s under key k is a pure
// function of (k, s, i), so any sequence can be regenerated exactly on any
// platform. Normals use Box-Muller on 53-bit uniforms.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key, std::uint64_t stream = 0)
      : key_(key), stream_(stream) {}

  std::uint64_t next_u64();
  // Uniform on [0, 1).
  double uniform();
  double normal();
  // Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);

  // Independent generator for a sub-stream of this key.
  CounterRng fork(std::uint64_t stream) const;

  std::uint64_t key() const { return key_; }
  std::uint64_t stream() const { return stream_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::vector<std::size_t> shuffled_indices(std::size_t n, CounterRng& rng);

}  // namespace nullgate
