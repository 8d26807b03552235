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
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "emblab/model.hpp"

namespace emblab {

struct AdamConfig {
  double base_lr = 0.00015;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-5;
  // Global-norm gradient clip across all parameters; off by default.
  std::optional<double> clip_norm;

  bool operator==(const AdamConfig&) const = default;
};

// Layer-specific learning rate: embedding-table groups run at
// base_lr * embedding_lr_multiplier while dense groups stay at base_lr.
struct SparseOptimizerConfig {
  double embedding_lr_multiplier = 50.0;

  bool operator==(const SparseOptimizerConfig&) const = default;
};

enum class FalMode { kOff, kLog, kLinear };

// Where the per-row scale enters the step. kScaleGradient multiplies the
// gradient before the moment update (the moments see scaled gradients);
// kScaleUpdate treats the scale as a per-row learning rate: Adam computes
// its step from raw gradients and the step is scaled afterwards, leaving
// the moments untouched by the scaling.
enum class FalApplication { kScaleGradient, kScaleUpdate };

struct FalConfig {
  FalMode mode = FalMode::kOff;
  FalApplication application = FalApplication::kScaleUpdate;
  std::vector<std::string> excluded_tables;  // per-table opt-out, by name

  bool operator==(const FalConfig&) const = default;
};

// Per-row learning-rate scales from accumulated frequency counters.
// Log mode:    alpha[i] = log(1 + freq[i]) / max_j log(1 + freq[j])
// Linear mode: alpha[i] = freq[i] / max_j freq[j]
// All values lie in [0, 1]; the most frequent row gets exactly 1. The
// ratio of same-base logarithms makes the log mode base-independent.
// Throws DomainError if no row has been observed yet (callers must
// accumulate before scaling) and std::logic_error if log_freq_max is
// inconsistent with freq.
std::vector<double> fal_alpha(const std::vector<std::uint32_t>& freq,
                              double log_freq_max, FalMode mode);

double fal_alpha_row(std::uint32_t count, std::uint32_t freq_max,
                     double log_freq_max, FalMode mode);

// Multiplies each row's values (gradients or update steps) by alpha[row].
// Throws std::logic_error if a row has no alpha entry.
void fal_apply(
    std::vector<std::pair<std::uint32_t, std::vector<double>>>& rows,
    const std::vector<double>& alpha);

// Adam with parameter groups: one dense group (trunk + heads) and one
// sparse row-keyed group per embedding table. Sparse groups update lazily
// by default: moments exist and decay only for rows present in the
// gradient.
class Optimizer {
 public:
  Optimizer(const ToyModel& model, AdamConfig adam,
            SparseOptimizerConfig sparse, FalConfig fal);

  // One optimizer step over every group. Rejects the whole batch (tallied,
  // parameters untouched) if any gradient value is non-finite. When FAL is
  // active, frequency accumulation for this batch must already have
  // happened on every table; violations throw std::logic_error.
  bool step(ToyModel& model, const Gradients& grads);

  const AdamConfig& adam() const { return adam_; }
  const FalConfig& fal() const { return fal_; }
  const SparseOptimizerConfig& sparse() const { return sparse_; }

  std::uint64_t dense_step_count() const { return dense_.step_count; }
  std::uint64_t table_step_count(std::size_t table) const {
    return tables_.at(table).step_count;
  }
  std::uint64_t rejected_batches() const { return rejected_; }

  // Lazy vs dense sparse updates; dense mode decays every tracked row's
  // moments each step.
  bool lazy() const { return lazy_; }
  void set_lazy(bool lazy) { lazy_ = lazy; }

  std::size_t table_moment_rows(std::size_t table) const {
    return tables_.at(table).rows.size();
  }
  bool has_row_moments(std::size_t table, std::uint32_t row) const {
    return tables_.at(table).rows.count(row) > 0;
  }
  // Returns (m, v) for a tracked row; throws DomainError if absent.
  std::pair<std::vector<double>, std::vector<double>> row_moments(
      std::size_t table, std::uint32_t row) const;

  // Drops all moments of one table group and resets its step count.
  void clear_table_moments(std::size_t table);

 private:
  struct RowMoments {
    std::vector<double> m, v;
  };
  struct TableGroup {
    std::unordered_map<std::uint32_t, RowMoments> rows;
    std::uint64_t step_count = 0;
    std::uint64_t seen_accum_ticks = 0;
    bool fal_enabled = true;
  };
  struct DenseGroup {
    std::vector<std::vector<double>> m, v;
    std::uint64_t step_count = 0;
  };

  AdamConfig adam_;
  SparseOptimizerConfig sparse_;
  FalConfig fal_;
  DenseGroup dense_;
  std::vector<TableGroup> tables_;
  std::uint64_t rejected_ = 0;
  bool lazy_ = true;
};

// Per-table seed stream used by meda_reinit: a table re-initialized under
// `seed` carries exactly the weights of a fresh table constructed with
// meda_table_seed(seed, table_index).
std::uint64_t meda_table_seed(std::uint64_t seed, std::size_t table_index);

// Re-initializes every embedding table from the init distribution with a
// fresh per-table seed stream and clears the embedding optimizer moments.
// Dense parameters, dense moments and frequency counters are untouched:
// the counters describe data statistics, not the discarded weights.
void meda_reinit(ToyModel& model, Optimizer& optimizer, std::uint64_t seed);

}  // namespace emblab
