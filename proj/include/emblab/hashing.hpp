/*
 * Copyright 2026 The Emblab Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
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

#include "emblab/common.hpp"
#include "emblab/rng.hpp"

namespace emblab {

// 64-bit avalanche mixer (MurmurHash3 finalizer).
inline std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 33;
  x *= 0xff51afd7ed558ccdULL;
  x ^= x >> 33;
  x *= 0xc4ceb9fe1a85ec53ULL;
  x ^= x >> 33;
  return x;
}

// Binary hashing of a categorical feature into a 2^bits row space.
struct HashSpec {
  std::string feature_name;
  int bits = 16;               // row space is exactly 2^bits, bits in [1, 31]
  std::uint64_t salt = 0;

  std::uint32_t rows() const { return 1u << bits; }

  void validate() const {
    if (bits < 1 || bits > 31)
      throw ConfigError("hash bits out of range [1,31] for feature '" +
                        feature_name + "'");
  }
};

// Pure function of (raw_id, salt); masked to the low `bits` bits of the
// mixed word.
inline std::uint32_t hash_id(std::uint64_t raw_id, const HashSpec& spec) {
  const std::uint64_t h = mix64(raw_id ^ splitmix64(spec.salt));
  return static_cast<std::uint32_t>(h & ((1ull << spec.bits) - 1ull));
}

}  // namespace emblab
