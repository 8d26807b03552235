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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>

#include "emblab/common.hpp"
#include "emblab/experiment.hpp"
#include "emblab/synthgen.hpp"
#include "emblab/trainer.hpp"
#include "test_util.hpp"

using namespace emblab;

namespace {

DatasetSchema tiny_schema(std::uint32_t days = 4,
                          std::uint64_t per_day = 1200) {
  DatasetSchema schema;
  schema.features = {{"campaign", 1024, 1.1, 21}, {"advertiser", 512, 1.0, 22}};
  schema.tasks = {{"click", 1.0, std::nullopt, 1.0},
                  {"checkout", 0.05, TaskCondition{"click", 1}, 1.0}};
  schema.continuous_dim = 2;
  schema.densest_rate = 0.25;
  schema.days = days;
  schema.examples_per_day = per_day;
  schema.seed = 515;
  return schema;
}

ToyModelConfig tiny_model(const DatasetSchema& schema) {
  ToyModelConfig config;
  for (std::size_t f = 0; f < schema.features.size(); ++f)
    config.tables.push_back(
        {{schema.features[f].feature_name, 6, 1000 + f}, 8});
  config.continuous_dim = schema.continuous_dim;
  config.trunk_layers = {12};
  for (const TaskSpec& t : schema.tasks) {
    config.task_names.push_back(t.name);
    config.loss_weights.push_back(t.loss_weight);
  }
  config.init_seed = 2024;
  return config;
}

TrainPlan tiny_plan() {
  TrainPlan plan;
  plan.batch_day_begin = 0;
  plan.batch_day_end = 1;
  plan.epochs = 2;
  plan.shuffle_seed = 77;
  plan.has_continual = true;
  plan.continual_day_begin = 2;
  plan.continual_day_end = 2;
  plan.eval_cadence = 3;
  plan.eval_cap = 100000;
  plan.batch_size = 300;
  return plan;
}

struct Run {
  SyntheticDataset dataset;
  LossTrace trace;
  DaySeries series;
  std::vector<double> final_weights;
};

Run run_tiny(const TrainPlan& plan, bool meda = false,
             FalConfig fal = FalConfig{}) {
  Run out;
  const DatasetSchema schema = tiny_schema();
  out.dataset = SyntheticGenerator(schema).generate();
  ToyModel model(tiny_model(schema));
  Optimizer opt(model, AdamConfig{}, SparseOptimizerConfig{50.0}, fal);
  Trainer trainer(model, opt, out.dataset, plan);
  out.trace = trainer.run_batch_phase(meda, 4242);
  out.series = trainer.run_continual_phase();
  for (const auto& table : model.tables())
    out.final_weights.insert(out.final_weights.end(),
                             table.raw_weights().begin(),
                             table.raw_weights().end());
  for (const auto* block : static_cast<const ToyModel&>(model).dense_blocks())
    out.final_weights.insert(out.final_weights.end(), block->begin(),
                             block->end());
  return out;
}

}  // namespace

TEST_CASE("trace shape: markers, iterations, epochs") {
  const Run run = run_tiny(tiny_plan());
  CHECK(run.trace.boundary_iterations.size() == 1);  // epochs - 1
  CHECK(run.trace.eval_day == 2);
  for (std::size_t i = 1; i < run.trace.evals.size(); ++i)
    CHECK(run.trace.evals[i].iteration > run.trace.evals[i - 1].iteration);
  CHECK(run.trace.skipped_batches == 0);

  // 1200*2 examples / 300 = 8 batches per epoch; the boundary sits at the
  // end of epoch 1.
  CHECK(run.trace.boundary_iterations[0] == 8);
  CHECK(run.trace.evals.front().iteration == 0);
  CHECK(run.trace.evals.back().iteration == 16);

  // Continual series: one day trained, evaluated on day 3.
  CHECK(run.series.days == std::vector<std::uint32_t>{2});
  CHECK(run.series.iterations == std::vector<std::uint64_t>{20});
}

TEST_CASE("one-epoch plans have no boundary and meda never fires") {
  TrainPlan plan = tiny_plan();
  plan.epochs = 1;
  const Run with_meda = run_tiny(plan, true);
  const Run without = run_tiny(plan, false);
  CHECK(with_meda.trace.boundary_iterations.empty());
  CHECK(with_meda.final_weights == without.final_weights);
  CHECK_THROWS_AS(epoch_boundary_delta(with_meda.trace, 0), DomainError);
}

TEST_CASE("epoch boundary delta arithmetic") {
  LossTrace trace;
  trace.tasks = {"click"};
  trace.boundary_iterations = {10};
  auto eval = [](std::uint64_t iter, double loss) {
    EvalPoint p;
    p.iteration = iter;
    p.epoch = iter <= 10 ? 1 : 2;
    p.task_loss = {loss};
    p.loss_defined = {1};
    p.task_auc = {0.5};
    p.auc_defined = {1};
    return p;
  };
  trace.evals = {eval(5, 0.06), eval(10, 0.0500), eval(12, 0.0512),
                 eval(20, 0.048)};
  const BoundaryDelta delta = epoch_boundary_delta(trace, 0);
  CHECK(delta.relative == doctest::Approx(0.024).epsilon(1e-9));
  CHECK(delta.absolute == doctest::Approx(1.2e-3).epsilon(1e-9));

  trace.evals[2].task_loss[0] = 0.0500;  // flat across the boundary
  CHECK(epoch_boundary_delta(trace, 0).relative == 0.0);

  trace.evals[2].task_loss[0] = 0.0488;  // decreasing is allowed
  CHECK(epoch_boundary_delta(trace, 0).relative < 0.0);
}

TEST_CASE("same plan and seeds reproduce the trace bit-for-bit") {
  const Run a = run_tiny(tiny_plan());
  const Run b = run_tiny(tiny_plan());
  CHECK(a.final_weights == b.final_weights);
  CHECK(trace_to_csv(a.trace) == trace_to_csv(b.trace));
  CHECK(series_to_csv(a.series) == series_to_csv(b.series));
}

TEST_CASE("each epoch visits the same example multiset exactly once") {
  const DatasetSchema schema = tiny_schema();
  const SyntheticDataset dataset = SyntheticGenerator(schema).generate();
  ToyModel model(tiny_model(schema));
  Optimizer opt(model, AdamConfig{}, SparseOptimizerConfig{50.0}, FalConfig{});
  const TrainPlan plan = tiny_plan();
  Trainer trainer(model, opt, dataset, plan);

  std::map<std::uint32_t, std::map<std::pair<std::uint32_t, std::uint32_t>,
                                   std::uint32_t>>
      visits;
  std::uint32_t max_training_day = 0;
  trainer.set_batch_hook(
      [&](std::uint32_t epoch,
          std::span<const std::pair<std::uint32_t, std::uint32_t>> examples) {
        for (const auto& [day, idx] : examples) {
          ++visits[epoch][{day, idx}];
          max_training_day = std::max(max_training_day, day);
        }
      });
  const LossTrace trace = trainer.run_batch_phase(false, 0);

  REQUIRE(visits.count(1));
  REQUIRE(visits.count(2));
  CHECK(visits[1].size() == 2400);
  CHECK(visits[1] == visits[2]);  // same multiset, every count 1
  for (const auto& [key, count] : visits[1]) CHECK(count == 1);

  // Leakage freedom: training days stay strictly before the eval day.
  CHECK(max_training_day < trace.eval_day);

  // Continual phase trains day D and evaluates D+1.
  visits.clear();
  const DaySeries series = trainer.run_continual_phase();
  for (const auto& [epoch, day_visits] : visits)
    for (const auto& [key, count] : day_visits) CHECK(key.first == 2);
  CHECK(series.days == std::vector<std::uint32_t>{2});
}

TEST_CASE("two arms with identical optimizer config agree bitwise") {
  const Run a = run_tiny(tiny_plan(), false, FalConfig{});
  FalConfig off_again;
  off_again.mode = FalMode::kOff;
  const Run b = run_tiny(tiny_plan(), false, off_again);
  CHECK(a.final_weights == b.final_weights);
}

TEST_CASE("uniform-frequency FAL is bit-identical to FAL off") {
  // Hand-built batches where every row of each table appears exactly once
  // per batch: frequencies stay uniform over observed rows, so every
  // alpha is exactly one.
  ToyModelConfig config;
  config.tables = {{{"t", 2, 5}, 4}};
  config.continuous_dim = 0;
  config.trunk_layers = {6};
  config.task_names = {"y"};
  config.loss_weights = {1.0};
  config.init_seed = 99;

  DatasetSchema schema;
  schema.features = {{"t", 64, 1.1, 3}};
  schema.tasks = {{"y", 1.0, std::nullopt, 1.0}};
  schema.continuous_dim = 0;
  schema.days = 2;
  schema.examples_per_day = 64;
  schema.seed = 8;
  const SyntheticDataset dataset = SyntheticGenerator(schema).generate();

  auto run_modes = [&](FalConfig fal) {
    ToyModel model(config);
    Optimizer opt(model, AdamConfig{}, SparseOptimizerConfig{50.0}, fal);
    TrainPlan plan;
    plan.batch_day_begin = 0;
    plan.batch_day_end = 0;
    plan.epochs = 1;
    plan.batch_size = 4;
    plan.eval_cap = 10;
    // Trainer is used only as a stepping harness here.
    Trainer trainer(model, opt, dataset, plan);
    Rng rng(7);
    for (int step = 0; step < 12; ++step) {
      Batch batch;
      batch.size = 4;
      batch.rows = {{0, 1, 2, 3}};
      batch.labels = {{static_cast<std::uint8_t>(rng.uniform() < 0.5),
                       static_cast<std::uint8_t>(rng.uniform() < 0.5),
                       static_cast<std::uint8_t>(rng.uniform() < 0.5),
                       static_cast<std::uint8_t>(rng.uniform() < 0.5)}};
      trainer.train_on_batch(batch);
    }
    return model.tables()[0].raw_weights();
  };

  FalConfig log_update;
  log_update.mode = FalMode::kLog;
  log_update.application = FalApplication::kScaleUpdate;
  FalConfig log_gradient;
  log_gradient.mode = FalMode::kLog;
  log_gradient.application = FalApplication::kScaleGradient;

  const auto baseline = run_modes(FalConfig{});
  CHECK(run_modes(log_update) == baseline);
  CHECK(run_modes(log_gradient) == baseline);
}

TEST_CASE("trainer requires tables/tasks to match the dataset") {
  const DatasetSchema schema = tiny_schema();
  const SyntheticDataset dataset = SyntheticGenerator(schema).generate();
  ToyModelConfig config = tiny_model(schema);
  config.tables.pop_back();
  ToyModel model(config);
  Optimizer opt(model, AdamConfig{}, SparseOptimizerConfig{1.0}, FalConfig{});
  CHECK_THROWS_AS(Trainer(model, opt, dataset, tiny_plan()), ConfigError);
}

TEST_CASE("plan validation names missing days before any training") {
  const DatasetSchema schema = tiny_schema();  // days 0..3
  const SyntheticDataset dataset = SyntheticGenerator(schema).generate();
  ToyModel model(tiny_model(schema));
  Optimizer opt(model, AdamConfig{}, SparseOptimizerConfig{1.0}, FalConfig{});

  TrainPlan plan = tiny_plan();
  plan.continual_day_end = 3;  // eval needs day 4
  CHECK_THROWS_WITH_AS(Trainer(model, opt, dataset, plan),
                       doctest::Contains("missing day 4"), ConfigError);

  TrainPlan gap = tiny_plan();
  gap.continual_day_begin = 3;  // must be batch_day_end + 1
  gap.continual_day_end = 3;
  CHECK_THROWS_AS(Trainer(model, opt, dataset, gap), ConfigError);

  TrainPlan too_long = tiny_plan();
  too_long.batch_day_end = 3;  // holdout day 4 missing
  CHECK_THROWS_AS(Trainer(model, opt, dataset, too_long), ConfigError);
}

TEST_CASE("zero continual days leave the model untouched") {
  TrainPlan plan = tiny_plan();
  plan.has_continual = false;

  const DatasetSchema schema = tiny_schema();
  const SyntheticDataset dataset = SyntheticGenerator(schema).generate();
  ToyModel model(tiny_model(schema));
  Optimizer opt(model, AdamConfig{}, SparseOptimizerConfig{50.0}, FalConfig{});
  Trainer trainer(model, opt, dataset, plan);
  trainer.run_batch_phase(false, 0);
  const auto before = model.tables()[0].raw_weights();
  const DaySeries series = trainer.run_continual_phase();
  CHECK(series.days.empty());
  CHECK(model.tables()[0].raw_weights() == before);
}

TEST_CASE("non-finite batches are skipped, tallied, and harmless") {
  const DatasetSchema schema = tiny_schema();
  const SyntheticDataset dataset = SyntheticGenerator(schema).generate();
  ToyModel model(tiny_model(schema));
  Optimizer opt(model, AdamConfig{}, SparseOptimizerConfig{1.0}, FalConfig{});
  Trainer trainer(model, opt, dataset, tiny_plan());

  // A +inf input reaches two trunk units wired with opposite head weights,
  // so the click logit is inf - inf = NaN and the loss goes non-finite.
  // (A NaN input would be absorbed by ReLU gating.)
  auto blocks = model.dense_blocks();
  const std::size_t in_width = model.config().input_dim();
  (*blocks[0])[0 * in_width + (in_width - 2)] = 1.0;   // trunk unit 0
  (*blocks[0])[1 * in_width + (in_width - 2)] = 1.0;   // trunk unit 1
  (*blocks[2])[0] = 1.0;                               // click head
  (*blocks[2])[1] = -1.0;

  Batch batch;
  batch.size = 1;
  batch.rows = {{0}, {0}};
  batch.continuous = {INFINITY, 0.0};
  batch.labels = {{1}, {kLabelUndefined}};

  const auto weights_before = model.tables()[0].raw_weights();
  const auto freq_before = model.tables()[0].freq();
  CHECK_FALSE(trainer.train_on_batch(batch));
  CHECK(trainer.skipped_batches() == 1);
  CHECK(model.tables()[0].raw_weights() == weights_before);
  CHECK(model.tables()[0].freq() == freq_before);
}

TEST_CASE("trace and series round-trip through CSV") {
  const Run run = run_tiny(tiny_plan());
  const LossTrace trace = trace_from_csv(trace_to_csv(run.trace));
  CHECK(trace.tasks == run.trace.tasks);
  CHECK(trace.boundary_iterations == run.trace.boundary_iterations);
  REQUIRE(trace.evals.size() == run.trace.evals.size());
  for (std::size_t i = 0; i < trace.evals.size(); ++i) {
    CHECK(trace.evals[i].iteration == run.trace.evals[i].iteration);
    CHECK(trace.evals[i].task_loss == run.trace.evals[i].task_loss);
    CHECK(trace.evals[i].total_loss ==
          doctest::Approx(run.trace.evals[i].total_loss).epsilon(1e-15));
  }
  const BoundaryDelta direct = epoch_boundary_delta(run.trace, 1);
  const BoundaryDelta via_csv = epoch_boundary_delta(trace, 1);
  CHECK(direct.relative == doctest::Approx(via_csv.relative).epsilon(1e-12));

  const DaySeries series = series_from_csv(series_to_csv(run.series));
  CHECK(series.days == run.series.days);
  CHECK(series.task_auc == run.series.task_auc);
}
