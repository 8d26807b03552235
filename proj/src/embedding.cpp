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

#include "emblab/embedding.hpp"

#include <algorithm>
#include <cmath>

#include "emblab/common.hpp"
#include "emblab/rng.hpp"

namespace emblab {

BatchFrequencies BatchFrequencies::from_rows(
    std::span<const std::uint32_t> rows) {
  std::vector<std::uint32_t> sorted(rows.begin(), rows.end());
  std::sort(sorted.begin(), sorted.end());
  BatchFrequencies out;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    out.counts.emplace_back(sorted[i], static_cast<std::uint32_t>(j - i));
    i = j;
  }
  return out;
}

std::uint64_t BatchFrequencies::total() const {
  std::uint64_t n = 0;
  for (const auto& [row, count] : counts) n += count;
  return n;
}

EmbeddingTable::EmbeddingTable(HashSpec spec, std::uint32_t dim,
                               std::uint64_t init_seed)
    : spec_(std::move(spec)), dim_(dim) {
  spec_.validate();
  if (dim_ == 0) throw ConfigError("embedding dimension must be > 0");
  weights_.resize(static_cast<std::size_t>(rows()) * dim_);
  freq_.assign(rows(), 0);
  reinitialize(init_seed);
}

std::span<const double> EmbeddingTable::row(std::uint32_t i) const {
  if (i >= rows()) throw DomainError("embedding row index out of range");
  return {weights_.data() + static_cast<std::size_t>(i) * dim_, dim_};
}

std::span<double> EmbeddingTable::mutable_row(std::uint32_t i) {
  if (i >= rows()) throw DomainError("embedding row index out of range");
  return {weights_.data() + static_cast<std::size_t>(i) * dim_, dim_};
}

std::vector<std::vector<double>> EmbeddingTable::lookup(
    std::span<const std::uint32_t> rows_in) const {
  std::vector<std::vector<double>> out;
  out.reserve(rows_in.size());
  for (std::uint32_t r : rows_in) {
    const auto v = row(r);
    out.emplace_back(v.begin(), v.end());
  }
  return out;
}

void EmbeddingTable::accumulate_freq(const BatchFrequencies& batch) {
  constexpr std::uint32_t kMax = std::numeric_limits<std::uint32_t>::max();
  for (const auto& [r, count] : batch.counts) {
    if (r >= rows()) throw DomainError("batch frequency row out of range");
    const std::uint64_t sum =
        static_cast<std::uint64_t>(freq_[r]) + static_cast<std::uint64_t>(count);
    if (sum > kMax) {
      freq_[r] = kMax;
      ++saturation_events_;
    } else {
      freq_[r] = static_cast<std::uint32_t>(sum);
    }
    freq_max_ = std::max(freq_max_, freq_[r]);
  }
  ++accumulation_ticks_;
}

double EmbeddingTable::log_freq_max() const {
  return std::log1p(static_cast<double>(freq_max_));
}

void EmbeddingTable::reinitialize(std::uint64_t seed) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim_));
  Rng rng(seed);
  for (double& w : weights_) w = rng.uniform(-bound, bound);
}

void EmbeddingTable::set_weights_f32(const std::vector<float>& w) {
  if (w.size() != weights_.size())
    throw DataError("weight blob size does not match table shape");
  for (std::size_t i = 0; i < w.size(); ++i)
    weights_[i] = static_cast<double>(w[i]);
}

void EmbeddingTable::set_freq(std::vector<std::uint32_t> freq) {
  if (freq.size() != freq_.size())
    throw DataError("counter blob size does not match table shape");
  freq_ = std::move(freq);
  freq_max_ = freq_.empty() ? 0 : *std::max_element(freq_.begin(), freq_.end());
}

}  // namespace emblab
