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

#include "emblab/dataset.hpp"
#include "emblab/tasks.hpp"
#include "emblab/zipf.hpp"

namespace emblab {

// Dimension of the hidden per-ID embeddings behind the planted labels.
inline constexpr std::uint32_t kHiddenDim = 8;

struct TaskDensityStat {
  std::string task;
  std::uint64_t defined = 0;
  std::uint64_t positives = 0;
  double observed = 0.0;   // positives / defined
  double target = 0.0;     // calibrated in-domain rate
  double bound = 0.0;      // 3x binomial sampling error at the target rate
  bool within = false;
};

// Generates day partitions whose labels come from a planted logistic model
// over hidden per-ID embeddings: for task t,
//   logit = signal_scale * (w_t . h(ids)) / sqrt(F * kHiddenDim) + b_t
// with b_t found by bisection so the in-domain positive rate matches the
// task's configured density. Each day's stream is derived from
// (seed, day), so days can be generated in any order or in parallel with
// bit-identical results.
class SyntheticGenerator {
 public:
  explicit SyntheticGenerator(DatasetSchema schema);

  const DatasetSchema& schema() const { return schema_; }

  DayPartition sample_day(std::uint64_t n_examples, std::uint32_t day) const;

  SyntheticDataset generate() const;

  // Calibrated in-domain positive rate for a task: rho * c for
  // unconditional tasks, rho * c / P(condition) for conditional ones.
  double target_rate(std::size_t task) const { return target_rate_.at(task); }
  double bias(std::size_t task) const { return bias_.at(task); }

  // Planted logit without bias or noise for one example's raw ids.
  double raw_logit(std::size_t task, const std::vector<std::uint32_t>& ids,
                   std::uint32_t day) const;

  std::vector<TaskDensityStat> density_summary(
      const SyntheticDataset& ds) const;

 private:
  double hidden_component(std::size_t feature, std::uint32_t id,
                          std::uint32_t comp, std::uint32_t day) const;
  double logit_unchecked(std::size_t task,
                         const std::vector<std::uint32_t>& ids,
                         std::uint32_t day) const;
  void calibrate_biases();

  DatasetSchema schema_;
  std::vector<ZipfSampler> samplers_;
  // hidden_[f][id * kHiddenDim + j]; drift companion has the same layout.
  std::vector<std::vector<double>> hidden_;
  std::vector<std::vector<double>> drift_companion_;
  std::vector<std::vector<double>> task_weights_;  // [t][f * kHiddenDim + j]
  std::vector<std::size_t> topo_order_;
  std::vector<double> target_rate_;
  std::vector<double> bias_;
};

// Spec-shaped convenience wrapper: remaining schema fields take their
// defaults. Throws ConfigError on an invalid task graph and DomainError on
// n_examples == 0.
DayPartition sample_day(const std::vector<ZipfIdSpace>& spaces,
                        const std::vector<TaskSpec>& tasks,
                        std::uint64_t n_examples, std::uint32_t day,
                        std::uint64_t seed);

}  // namespace emblab
