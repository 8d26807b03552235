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

#include "emblab/trainer.hpp"

#include <algorithm>
#include <cmath>

#include "emblab/common.hpp"
#include "emblab/metrics.hpp"

namespace emblab {

namespace {

constexpr std::uint64_t kTagEvalSample = 0xE7A1;
constexpr std::uint64_t kTagContinualShuffle = 0xC047;
constexpr double kTrainEmaBeta = 0.99;

bool gradients_finite(const Gradients& grads) {
  for (const auto& block : grads.dense)
    for (double g : block)
      if (!std::isfinite(g)) return false;
  for (const auto& table : grads.tables)
    for (const auto& [row, g] : table)
      for (double x : g)
        if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace

void TrainPlan::validate(const SyntheticDataset& ds) const {
  if (epochs < 1) throw ConfigError("plan: epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("plan: batch_size must be >= 1");
  if (eval_cadence < 1) throw ConfigError("plan: eval_cadence must be >= 1");
  if (eval_cap < 1) throw ConfigError("plan: eval_cap must be >= 1");
  if (batch_day_end < batch_day_begin)
    throw ConfigError("plan: batch day range is empty");
  for (std::uint32_t d = batch_day_begin; d <= batch_day_end + 1; ++d)
    if (!ds.has_day(d))
      throw ConfigError("plan: dataset is missing day " + std::to_string(d) +
                        " (batch range plus next-day holdout)");
  if (has_continual) {
    if (continual_day_begin != batch_day_end + 1)
      throw ConfigError(
          "plan: continual training must begin the day after batch training "
          "ends");
    if (continual_day_end < continual_day_begin)
      throw ConfigError("plan: continual day range is empty");
    for (std::uint32_t d = continual_day_begin; d <= continual_day_end + 1; ++d)
      if (!ds.has_day(d))
        throw ConfigError("plan: dataset is missing day " + std::to_string(d) +
                          " (continual range plus next-day holdout)");
  }
}

BoundaryDelta epoch_boundary_delta(const LossTrace& trace, std::size_t task,
                                   std::size_t boundary) {
  if (trace.boundary_iterations.empty())
    throw DomainError("epoch_boundary_delta: trace has no epoch boundary");
  if (boundary >= trace.boundary_iterations.size())
    throw DomainError("epoch_boundary_delta: boundary index out of range");
  if (task >= trace.tasks.size())
    throw DomainError("epoch_boundary_delta: task index out of range");

  const std::uint64_t at = trace.boundary_iterations[boundary];
  const EvalPoint* before = nullptr;
  const EvalPoint* after = nullptr;
  for (const EvalPoint& p : trace.evals) {
    if (p.iteration <= at) {
      if (!before || p.iteration > before->iteration) before = &p;
    } else if (!after || p.iteration < after->iteration) {
      after = &p;
    }
  }
  if (!before || !after)
    throw DomainError(
        "epoch_boundary_delta: no evaluation on both sides of the boundary");
  if (!before->loss_defined[task] || !after->loss_defined[task])
    throw DomainError(
        "epoch_boundary_delta: task loss undefined at a boundary evaluation");

  BoundaryDelta delta;
  delta.absolute = after->task_loss[task] - before->task_loss[task];
  delta.relative = delta.absolute / before->task_loss[task];
  return delta;
}

Trainer::Trainer(ToyModel& model, Optimizer& optimizer,
                 const SyntheticDataset& ds, TrainPlan plan)
    : model_(model),
      optimizer_(optimizer),
      dataset_(ds),
      plan_(std::move(plan)) {
  plan_.validate(ds);
  if (model_.config().tables.size() != ds.schema.features.size())
    throw ConfigError("model table count does not match dataset features");
  if (model_.config().task_names.size() != ds.schema.tasks.size())
    throw ConfigError("model task count does not match dataset tasks");
}

std::vector<std::pair<const DayPartition*, std::uint32_t>>
Trainer::build_index(std::uint32_t day_begin, std::uint32_t day_end) const {
  std::vector<std::pair<const DayPartition*, std::uint32_t>> index;
  for (std::uint32_t d = day_begin; d <= day_end; ++d) {
    const DayPartition& day = dataset_.day(d);
    for (std::uint64_t e = 0; e < day.num_examples; ++e)
      index.emplace_back(&day, static_cast<std::uint32_t>(e));
  }
  return index;
}

Batch Trainer::assemble_batch(
    std::span<const std::pair<const DayPartition*, std::uint32_t>> examples)
    const {
  const auto& tables = model_.config().tables;
  const std::uint32_t cont_dim = model_.config().continuous_dim;
  const std::size_t n_tasks = model_.config().task_names.size();

  Batch batch;
  batch.size = examples.size();
  batch.rows.assign(tables.size(), std::vector<std::uint32_t>(batch.size));
  batch.continuous.resize(batch.size * cont_dim);
  batch.labels.assign(n_tasks, std::vector<std::uint8_t>(batch.size));

  for (std::size_t e = 0; e < examples.size(); ++e) {
    const auto& [day, idx] = examples[e];
    for (std::size_t f = 0; f < tables.size(); ++f)
      batch.rows[f][e] = hash_id(day->ids[f][idx], tables[f].hash);
    for (std::uint32_t k = 0; k < cont_dim; ++k)
      batch.continuous[e * cont_dim + k] =
          static_cast<double>(day->continuous[idx * cont_dim + k]);
    for (std::size_t t = 0; t < n_tasks; ++t)
      batch.labels[t][e] = day->labels[t][idx];
  }
  return batch;
}

bool Trainer::train_on_batch(const Batch& batch) {
  ++iteration_;
  auto [scores, record] = model_.forward(batch);
  const LossResult loss = model_.loss(scores, batch.labels);
  if (!std::isfinite(loss.total)) {
    ++skipped_;
    return false;
  }
  const Gradients grads = model_.backward(record, batch);
  if (!gradients_finite(grads)) {
    ++skipped_;
    return false;
  }

  // Algorithm order within the batch: frequencies first, then the
  // (possibly frequency-scaled) parameter update.
  for (std::size_t f = 0; f < model_.tables().size(); ++f)
    model_.tables()[f].accumulate_freq(
        BatchFrequencies::from_rows(batch.rows[f]));
  optimizer_.step(model_, grads);

  if (!ema_started_) {
    train_ema_ = loss.total;
    ema_started_ = true;
  } else {
    train_ema_ = kTrainEmaBeta * train_ema_ + (1.0 - kTrainEmaBeta) * loss.total;
  }
  return true;
}

EvalPoint Trainer::evaluate_day(std::uint32_t day, std::uint32_t epoch) const {
  const DayPartition& partition = dataset_.day(day);
  const std::uint64_t n = partition.num_examples;
  const std::size_t n_tasks = model_.config().task_names.size();

  std::vector<std::pair<const DayPartition*, std::uint32_t>> index;
  if (n <= plan_.eval_cap) {
    index.reserve(n);
    for (std::uint64_t e = 0; e < n; ++e)
      index.emplace_back(&partition, static_cast<std::uint32_t>(e));
  } else {
    // Fixed uniform subsample, derived only from (shuffle_seed, day) so
    // every arm and rerun scores the same examples.
    std::vector<std::uint32_t> ids(n);
    for (std::uint64_t e = 0; e < n; ++e) ids[e] = static_cast<std::uint32_t>(e);
    Rng rng(derive_seed(derive_seed(plan_.shuffle_seed, kTagEvalSample), day));
    for (std::uint64_t i = 0; i < plan_.eval_cap; ++i) {
      const std::uint64_t j = i + rng.below(n - i);
      std::swap(ids[i], ids[j]);
    }
    index.reserve(plan_.eval_cap);
    for (std::uint64_t i = 0; i < plan_.eval_cap; ++i)
      index.emplace_back(&partition, ids[i]);
  }

  EvalPoint point;
  point.iteration = iteration_;
  point.epoch = epoch;
  point.train_loss_ema = train_ema_;
  point.task_loss.assign(n_tasks, 0.0);
  point.loss_defined.assign(n_tasks, 0);
  point.task_auc.assign(n_tasks, 0.0);
  point.auc_defined.assign(n_tasks, 0);

  std::vector<double> loss_sum(n_tasks, 0.0);
  std::vector<std::uint64_t> defined(n_tasks, 0);
  std::vector<std::vector<double>> scores(n_tasks);
  std::vector<std::vector<std::uint8_t>> labels(n_tasks);

  for (std::size_t start = 0; start < index.size();
       start += plan_.batch_size) {
    const std::size_t stop =
        std::min(index.size(), start + static_cast<std::size_t>(plan_.batch_size));
    const Batch batch = assemble_batch(
        std::span(index.data() + start, stop - start));
    const auto [batch_scores, record] = model_.forward(batch);
    for (std::size_t t = 0; t < n_tasks; ++t) {
      for (std::size_t e = 0; e < batch.size; ++e) {
        const std::uint8_t y = batch.labels[t][e];
        if (y == kLabelUndefined) continue;
        const double p = batch_scores.prob[t][e];
        loss_sum[t] -= y ? std::log(p) : std::log(1.0 - p);
        ++defined[t];
        scores[t].push_back(p);
        labels[t].push_back(y);
      }
    }
  }

  for (std::size_t t = 0; t < n_tasks; ++t) {
    if (defined[t] == 0) continue;
    point.loss_defined[t] = 1;
    point.task_loss[t] = loss_sum[t] / static_cast<double>(defined[t]);
    point.total_loss +=
        model_.config().loss_weights[t] * point.task_loss[t];
    bool has_pos = false, has_neg = false;
    for (std::uint8_t y : labels[t]) (y ? has_pos : has_neg) = true;
    if (has_pos && has_neg) {
      point.task_auc[t] = roc_auc(scores[t], labels[t]);
      point.auc_defined[t] = 1;
    }
  }
  return point;
}

LossTrace Trainer::run_batch_phase(bool meda, std::uint64_t meda_seed) {
  auto index = build_index(plan_.batch_day_begin, plan_.batch_day_end);
  const std::uint64_t n = index.size();
  const std::uint64_t bpe = (n + plan_.batch_size - 1) / plan_.batch_size;
  const std::uint32_t eval_day = plan_.batch_day_end + 1;

  // Within-epoch batch counts after which an evaluation runs; always
  // includes the end of the epoch.
  std::vector<std::uint64_t> eval_after;
  for (std::uint32_t i = 1; i <= plan_.eval_cadence; ++i) {
    const auto b = static_cast<std::uint64_t>(std::llround(
        static_cast<double>(bpe) * i / plan_.eval_cadence));
    if (b >= 1 && (eval_after.empty() || b != eval_after.back()))
      eval_after.push_back(b);
  }
  if (eval_after.empty() || eval_after.back() != bpe) eval_after.push_back(bpe);

  LossTrace trace;
  trace.tasks = model_.config().task_names;
  trace.eval_day = eval_day;
  trace.evals.push_back(evaluate_day(eval_day, 1));

  std::vector<std::pair<std::uint32_t, std::uint32_t>> hook_buf;
  for (std::uint32_t epoch = 1; epoch <= plan_.epochs; ++epoch) {
    if (epoch >= 2) {
      trace.boundary_iterations.push_back(iteration_);
      if (meda) meda_reinit(model_, optimizer_, derive_seed(meda_seed, epoch));
    }

    // Fisher-Yates reshuffle with a per-epoch derived seed.
    Rng rng(derive_seed(plan_.shuffle_seed, epoch));
    for (std::uint64_t i = 0; i + 1 < n; ++i) {
      const std::uint64_t j = i + rng.below(n - i);
      std::swap(index[i], index[j]);
    }

    std::size_t next_eval = 0;
    for (std::uint64_t b = 0; b < bpe; ++b) {
      const std::uint64_t start = b * plan_.batch_size;
      const std::uint64_t stop = std::min<std::uint64_t>(n, start + plan_.batch_size);
      const std::span slice(index.data() + start, stop - start);
      if (hook_) {
        hook_buf.clear();
        for (const auto& [day, idx] : slice)
          hook_buf.emplace_back(day->day_index, idx);
        hook_(epoch, hook_buf);
      }
      train_on_batch(assemble_batch(slice));
      if (next_eval < eval_after.size() && b + 1 == eval_after[next_eval]) {
        trace.evals.push_back(evaluate_day(eval_day, epoch));
        ++next_eval;
      }
    }
  }
  trace.skipped_batches = skipped_;
  return trace;
}

DaySeries Trainer::run_continual_phase() {
  DaySeries series;
  series.tasks = model_.config().task_names;
  if (!plan_.has_continual) return series;

  if (plan_.reset_freq_at_continual)
    for (auto& table : model_.tables()) {
      std::vector<std::uint32_t> zeros(table.rows(), 0);
      table.set_freq(std::move(zeros));
    }
  if (plan_.reset_moments_at_continual)
    for (std::size_t f = 0; f < model_.tables().size(); ++f)
      optimizer_.clear_table_moments(f);

  for (std::uint32_t d = plan_.continual_day_begin; d <= plan_.continual_day_end;
       ++d) {
    auto index = build_index(d, d);
    Rng rng(derive_seed(derive_seed(plan_.shuffle_seed, kTagContinualShuffle), d));
    for (std::uint64_t i = 0; i + 1 < index.size(); ++i) {
      const std::uint64_t j = i + rng.below(index.size() - i);
      std::swap(index[i], index[j]);
    }
    std::vector<std::pair<std::uint32_t, std::uint32_t>> hook_buf;
    for (std::size_t start = 0; start < index.size();
         start += plan_.batch_size) {
      const std::size_t stop =
          std::min(index.size(), start + static_cast<std::size_t>(plan_.batch_size));
      const std::span slice(index.data() + start, stop - start);
      if (hook_) {
        hook_buf.clear();
        for (const auto& [day, idx] : slice)
          hook_buf.emplace_back(day->day_index, idx);
        hook_(0, hook_buf);
      }
      train_on_batch(assemble_batch(slice));
    }

    const EvalPoint point = evaluate_day(d + 1, 0);
    series.days.push_back(d);
    series.iterations.push_back(iteration_);
    series.total_loss.push_back(point.total_loss);
    series.task_loss.push_back(point.task_loss);
    series.loss_defined.push_back(point.loss_defined);
    series.task_auc.push_back(point.task_auc);
    series.auc_defined.push_back(point.auc_defined);
  }
  return series;
}

}  // namespace emblab
