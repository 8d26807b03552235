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
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "emblab/dataset.hpp"
#include "emblab/optim.hpp"

namespace emblab {

// One experiment arm: optimizer treatment applied to a fresh copy of the
// same seeded model over the same data order.
struct ArmSpec {
  std::string name;
  FalConfig fal;
  bool meda = false;
  SparseOptimizerConfig sparse;

  bool operator==(const ArmSpec&) const = default;
};

struct TrainPlan {
  std::uint32_t batch_day_begin = 0;
  std::uint32_t batch_day_end = 0;  // inclusive
  std::uint32_t epochs = 1;
  std::uint64_t shuffle_seed = 0;
  bool has_continual = false;
  std::uint32_t continual_day_begin = 0;
  std::uint32_t continual_day_end = 0;  // inclusive
  std::uint32_t eval_cadence = 20;      // next-day evaluations per epoch
  std::uint64_t eval_cap = 100000;      // eval subsample size cap
  std::uint32_t batch_size = 2000;
  bool reset_freq_at_continual = false;
  bool reset_moments_at_continual = false;
  std::vector<ArmSpec> arms;

  // Checks day coverage including the next-day holdouts, continual
  // contiguity with the batch range, and basic ranges. Throws ConfigError.
  void validate(const SyntheticDataset& ds) const;

  bool operator==(const TrainPlan&) const = default;
};

struct EvalPoint {
  std::uint64_t iteration = 0;
  std::uint32_t epoch = 1;
  double total_loss = 0.0;
  double train_loss_ema = 0.0;
  std::vector<double> task_loss;
  std::vector<std::uint8_t> loss_defined;
  std::vector<double> task_auc;
  std::vector<std::uint8_t> auc_defined;
};

// Test-loss progression over batch training with epoch boundary markers.
struct LossTrace {
  std::vector<std::string> tasks;
  std::uint32_t eval_day = 0;
  std::vector<EvalPoint> evals;
  std::vector<std::uint64_t> boundary_iterations;  // exactly epochs-1
  std::uint64_t skipped_batches = 0;
};

// Per-day continual-training series: row i records training on days[i]
// followed by evaluation on days[i] + 1.
struct DaySeries {
  std::vector<std::string> tasks;
  std::vector<std::uint32_t> days;
  std::vector<std::uint64_t> iterations;
  std::vector<double> total_loss;
  std::vector<std::vector<double>> task_loss;
  std::vector<std::vector<std::uint8_t>> loss_defined;
  std::vector<std::vector<double>> task_auc;
  std::vector<std::vector<std::uint8_t>> auc_defined;
};

struct BoundaryDelta {
  double relative = 0.0;
  double absolute = 0.0;
};

// Relative and absolute change of a task's test loss across an epoch
// boundary: (first eval of epoch k+1 - last eval of epoch k) / (last eval
// of epoch k). Negative values are allowed. Throws DomainError when the
// trace has no boundary or no evaluation on one side.
BoundaryDelta epoch_boundary_delta(const LossTrace& trace, std::size_t task,
                                   std::size_t boundary = 0);

class Trainer {
 public:
  // Observes every training batch (epoch, then (day, index) per example);
  // used by tests for shuffle/leakage checks.
  using BatchHook = std::function<void(
      std::uint32_t epoch,
      std::span<const std::pair<std::uint32_t, std::uint32_t>> examples)>;

  Trainer(ToyModel& model, Optimizer& optimizer, const SyntheticDataset& ds,
          TrainPlan plan);

  void set_batch_hook(BatchHook hook) { hook_ = std::move(hook); }

  // Multi-epoch pass over the shuffled batch-day range with next-day
  // evaluation at the configured cadence. Per batch, in order: forward,
  // backward, frequency accumulation, then the (FAL-scaled) optimizer
  // step. If meda is on, embeddings re-initialize at the start of every
  // epoch after the first.
  LossTrace run_batch_phase(bool meda, std::uint64_t meda_seed);

  // Single pass per continual day, evaluating on the following day.
  DaySeries run_continual_phase();

  // One optimizer step on an assembled batch. Returns false if the batch
  // was skipped (non-finite loss or gradients).
  bool train_on_batch(const Batch& batch);

  Batch assemble_batch(
      std::span<const std::pair<const DayPartition*, std::uint32_t>> examples)
      const;

  // Evaluation on a fixed-size uniform sample of one day (no training).
  EvalPoint evaluate_day(std::uint32_t day, std::uint32_t epoch) const;

  std::uint64_t iteration() const { return iteration_; }
  std::uint64_t skipped_batches() const { return skipped_; }

 private:
  std::vector<std::pair<const DayPartition*, std::uint32_t>> build_index(
      std::uint32_t day_begin, std::uint32_t day_end) const;

  ToyModel& model_;
  Optimizer& optimizer_;
  const SyntheticDataset& dataset_;
  TrainPlan plan_;
  BatchHook hook_;
  std::uint64_t iteration_ = 0;
  std::uint64_t skipped_ = 0;
  double train_ema_ = 0.0;
  bool ema_started_ = false;
};

}  // namespace emblab
