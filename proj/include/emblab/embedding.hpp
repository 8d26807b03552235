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
#include <limits>
#include <span>
#include <vector>

#include "emblab/hashing.hpp"

namespace emblab {

// Per-batch occurrence counts for one table: row index -> number of times
// the row was referenced in the batch. A row appearing twice in one batch
// counts 2.
struct BatchFrequencies {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> counts;

  static BatchFrequencies from_rows(std::span<const std::uint32_t> rows);
  std::uint64_t total() const;
};

// Hashed-id -> dense-vector map with per-row frequency counters.
//
// Weights are kept in double precision for training; the serialized form
// (checkpoints) stores f32 weights and u32 counters, so counter storage is
// exactly 1/d of weight storage.
class EmbeddingTable {
 public:
  EmbeddingTable(HashSpec spec, std::uint32_t dim, std::uint64_t init_seed);

  const HashSpec& spec() const { return spec_; }
  std::uint32_t rows() const { return spec_.rows(); }
  std::uint32_t dim() const { return dim_; }

  std::span<const double> row(std::uint32_t i) const;
  std::span<double> mutable_row(std::uint32_t i);

  // Forward-pass gather, by value. Does not touch the frequency counters;
  // accumulation is a separate step so the per-batch ordering
  // (accumulate, then scale, then update) stays explicit.
  std::vector<std::vector<double>> lookup(
      std::span<const std::uint32_t> rows) const;

  // freq[i] += count, saturating at the u32 maximum; saturated adds are
  // tallied, not raised. The running frequency maximum only grows.
  void accumulate_freq(const BatchFrequencies& batch);

  const std::vector<std::uint32_t>& freq() const { return freq_; }
  std::uint32_t freq_max() const { return freq_max_; }
  // max over rows of log(1 + freq[i]); equals log1p(freq_max) because
  // log1p is monotone.
  double log_freq_max() const;
  std::uint64_t saturation_events() const { return saturation_events_; }

  // Number of accumulate_freq calls; used to assert that accumulation
  // precedes frequency-adaptive scaling within each batch.
  std::uint64_t accumulation_ticks() const { return accumulation_ticks_; }

  // Redraws all weights from the initialization distribution
  // (uniform in [-1/sqrt(d), +1/sqrt(d)]). Counters are not touched.
  void reinitialize(std::uint64_t seed);

  // Serialized sizes: u32 counters vs f32 weights. Their ratio is exactly
  // 1/d.
  std::uint64_t counter_storage_bytes() const {
    return static_cast<std::uint64_t>(rows()) * sizeof(std::uint32_t);
  }
  std::uint64_t weight_storage_bytes() const {
    return static_cast<std::uint64_t>(rows()) * dim_ * sizeof(float);
  }

  std::vector<double>& raw_weights() { return weights_; }
  const std::vector<double>& raw_weights() const { return weights_; }

  // Restores state from a checkpoint block.
  void set_weights_f32(const std::vector<float>& w);
  void set_freq(std::vector<std::uint32_t> freq);

 private:
  HashSpec spec_;
  std::uint32_t dim_;
  std::vector<double> weights_;      // rows x dim, row-major
  std::vector<std::uint32_t> freq_;  // per-row occurrence counters
  std::uint32_t freq_max_ = 0;
  std::uint64_t saturation_events_ = 0;
  std::uint64_t accumulation_ticks_ = 0;
};

}  // namespace emblab
