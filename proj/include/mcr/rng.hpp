// Copyright 2026 The mcreduce Authors.
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
#include <random>

namespace mcr {

// Purpose tags for derived streams.
enum class RngTag : std::uint64_t {
  evi = 1,
  censor = 2,
  nature = 3,
  grid = 4,
  warm = 5,
  audit = 6,
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Counter-based seed: depends only on (root, round, tag), never on call order.
inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t round, RngTag tag) {
  std::uint64_t h = splitmix64(root);
  h = splitmix64(h ^ round);
  return splitmix64(h ^ static_cast<std::uint64_t>(tag));
}

inline std::mt19937_64 derive_stream(std::uint64_t root, std::uint64_t round, RngTag tag) {
  return std::mt19937_64(derive_seed(root, round, tag));
}

// Uniform [0,1) from a derived seed, without constructing an engine.
inline double derive_uniform(std::uint64_t root, std::uint64_t round, RngTag tag) {
  return static_cast<double>(derive_seed(root, round, tag) >> 11) * 0x1.0p-53;
}

}  // namespace mcr
