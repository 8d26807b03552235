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
#include <vector>

#include "emblab/rng.hpp"

namespace emblab {

// A categorical ID universe with power-law rank probabilities:
// P(rank r) proportional to r^(-exponent), r = 1..num_ids.
// Raw IDs are 0-based, id = rank - 1, so id 0 is the most frequent.
struct ZipfIdSpace {
  std::string feature_name;
  std::uint32_t num_ids = 0;
  double exponent = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const ZipfIdSpace&) const = default;
};

// Inverse-CDF sampler over the rank distribution. Immutable once built.
class ZipfSampler {
 public:
  ZipfSampler(std::uint32_t num_ids, double exponent);

  // Returns a 0-based id (rank-1). O(log n) per draw.
  std::uint32_t sample(Rng& rng) const;

  // Probability of the 1-based rank r.
  double rank_probability(std::uint32_t rank) const;

  // Total probability mass carried by ranks 1..k.
  double top_mass(std::uint32_t k) const;

  std::uint32_t num_ids() const {
    return static_cast<std::uint32_t>(cdf_.size());
  }

 private:
  std::vector<double> cdf_;  // cdf_[i] = P(rank <= i+1); cdf_.back() == 1
};

// Finds the exponent s in [0.1, 5.0] such that the top
// ceil(target_fraction * num_ids) ranks carry target_mass of the total
// probability, within 1% relative tolerance, by monotone bisection.
// Throws CalibrationError if the target is unreachable in the bracket.
double calibrate_zipf(std::uint32_t num_ids, double target_fraction,
                      double target_mass);

// Smallest fraction of IDs (sorted by descending frequency) whose
// frequencies sum to at least `mass` of the total. The denominator is the
// full vector length, including zero-frequency entries.
double coverage_fraction(const std::vector<std::uint64_t>& frequencies,
                         double mass);

}  // namespace emblab
