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
#include <set>

#include "emblab/common.hpp"
#include "emblab/model.hpp"
#include "emblab/rng.hpp"
#include "model_oracles.hpp"
#include "test_util.hpp"

using namespace emblab;

namespace {

ToyModelConfig tiny_config(std::uint64_t seed = 1) {
  ToyModelConfig config;
  config.tables = {{{"a", 3, 11}, 4}, {{"b", 2, 12}, 3}};
  config.continuous_dim = 2;
  config.trunk_layers = {5};
  config.task_names = {"click", "checkout"};
  config.loss_weights = {1.0, 2.0};
  config.init_seed = seed;
  return config;
}

double loss_of(const ToyModel& model, const Batch& batch) {
  const auto [scores, record] = model.forward(batch);
  return model.loss(scores, batch.labels).total;
}

}  // namespace

TEST_CASE("zero weights score one half everywhere") {
  ToyModel model(tiny_config());
  for (auto& table : model.tables())
    for (double& w : table.raw_weights()) w = 0.0;
  for (auto* block : model.dense_blocks())
    for (double& v : *block) v = 0.0;

  Rng rng(3);
  const Batch batch = testing::random_batch(model.config(), 7, rng);
  const auto [scores, record] = model.forward(batch);
  for (const auto& task : scores.prob)
    for (double p : task) CHECK(p == 0.5);
}

TEST_CASE("a singleton batch equals its row in a larger batch") {
  ToyModel model(tiny_config());
  Rng rng(4);
  const Batch big = testing::random_batch(model.config(), 9, rng);
  const auto [big_scores, big_record] = model.forward(big);

  for (std::size_t e = 0; e < big.size; ++e) {
    Batch one;
    one.size = 1;
    one.rows.resize(big.rows.size());
    for (std::size_t f = 0; f < big.rows.size(); ++f)
      one.rows[f] = {big.rows[f][e]};
    one.continuous.assign(
        big.continuous.begin() + e * model.config().continuous_dim,
        big.continuous.begin() + (e + 1) * model.config().continuous_dim);
    one.labels.resize(big.labels.size());
    for (std::size_t t = 0; t < big.labels.size(); ++t)
      one.labels[t] = {big.labels[t][e]};
    const auto [one_scores, one_record] = model.forward(one);
    for (std::size_t t = 0; t < big.labels.size(); ++t)
      CHECK(one_scores.prob[t][0] == big_scores.prob[t][e]);
  }
}

TEST_CASE("scores stay finite and in range under huge inputs") {
  ToyModel model(tiny_config());
  Rng rng(5);
  Batch batch = testing::random_batch(model.config(), 6, rng);
  for (double& v : batch.continuous) v *= 1e3;
  const auto [scores, record] = model.forward(batch);
  for (const auto& task : scores.prob)
    for (double p : task) {
      CHECK(std::isfinite(p));
      CHECK(p >= kProbEpsilon);
      CHECK(p <= 1.0 - kProbEpsilon);
    }
}

TEST_CASE("batch shape mismatches are rejected") {
  ToyModel model(tiny_config());
  Rng rng(6);
  Batch batch = testing::random_batch(model.config(), 4, rng);
  batch.continuous.pop_back();
  CHECK_THROWS_AS(model.forward(batch), DomainError);

  Batch bad_rows = testing::random_batch(model.config(), 4, rng);
  bad_rows.rows[0][0] = 1u << 30;
  CHECK_THROWS_AS(model.forward(bad_rows), DomainError);

  Batch bad_tasks = testing::random_batch(model.config(), 4, rng);
  bad_tasks.labels.pop_back();
  CHECK_THROWS_AS(model.forward(bad_tasks), DomainError);
}

TEST_CASE("uniform prediction loses ln 2; weights combine linearly") {
  Scores scores;
  scores.prob = {{0.5, 0.5, 0.5}, {0.5, 0.5, 0.5}};
  std::vector<std::vector<std::uint8_t>> labels = {{1, 0, kLabelUndefined},
                                                   {0, 1, 1}};
  const LossResult uniform = masked_bce_loss(scores, labels, {1.0, 1.0});
  CHECK(uniform.per_task[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(uniform.per_task[1] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(uniform.defined_count[0] == 2);
  CHECK(uniform.defined_count[1] == 3);

  // Per-task losses (0.1, 0.3) under weights (1, 2): total 0.7.
  Scores crafted;
  crafted.prob = {{std::exp(-0.1)}, {std::exp(-0.3)}};
  std::vector<std::vector<std::uint8_t>> ones = {{1}, {1}};
  const LossResult combined = masked_bce_loss(crafted, ones, {1.0, 2.0});
  CHECK(combined.per_task[0] == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(combined.per_task[1] == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(combined.total == doctest::Approx(0.7).epsilon(1e-12));
}

TEST_CASE("perfect clamped scores bound the loss at -ln(1-eps)") {
  Scores scores;
  scores.prob = {{1.0 - kProbEpsilon, kProbEpsilon}};
  std::vector<std::vector<std::uint8_t>> labels = {{1, 0}};
  const LossResult r = masked_bce_loss(scores, labels, {1.0});
  CHECK(r.per_task[0] <= -std::log(1.0 - kProbEpsilon) + 1e-18);
}

TEST_CASE("tasks with no defined labels contribute zero and are flagged") {
  Scores scores;
  scores.prob = {{0.9, 0.2}, {0.9, 0.2}};
  std::vector<std::vector<std::uint8_t>> labels = {
      {1, 0}, {kLabelUndefined, kLabelUndefined}};
  const LossResult r = masked_bce_loss(scores, labels, {1.0, 5.0});
  CHECK(r.has_defined[0] == 1);
  CHECK(r.has_defined[1] == 0);
  CHECK(r.per_task[1] == 0.0);
  CHECK(r.total == doctest::Approx(r.per_task[0]));
}

TEST_CASE("perturbing an undefined-label example leaves the loss unchanged") {
  ToyModel model(tiny_config());
  Rng rng(7);
  Batch batch = testing::random_batch(model.config(), 5, rng);
  for (auto& l : batch.labels) l[2] = kLabelUndefined;  // mask example 2 out

  const double before = loss_of(model, batch);
  for (std::uint32_t k = 0; k < model.config().continuous_dim; ++k)
    batch.continuous[2 * model.config().continuous_dim + k] += 3.7;
  batch.rows[0][2] = (batch.rows[0][2] + 1) % model.tables()[0].rows();
  const double after = loss_of(model, batch);
  CHECK(before == after);
}

TEST_CASE("analytic gradients match central finite differences") {
  Rng seed_rng(20260809);
  for (int trial = 0; trial < 20; ++trial) {
    ToyModelConfig config = testing::random_small_config(seed_rng);
    ToyModel model(config);
    REQUIRE(model.dense_parameter_count() +
                model.embedding_parameter_count() <=
            1000);
    Rng rng(seed_rng.next_u64());
    const Batch batch =
        testing::kink_safe_batch(model, config, 3 + rng.below(4), rng);
    const double err = testing::max_gradient_error(model, batch);
    INFO("trial ", trial, " max relative error ", err);
    CHECK(err < 1e-4);
  }
}

TEST_CASE("embedding gradient entries are exactly the referenced rows") {
  ToyModel model(tiny_config());
  Rng rng(8);
  const Batch batch = testing::random_batch(model.config(), 6, rng, false);
  const auto [scores, record] = model.forward(batch);
  const Gradients grads = model.backward(record, batch);

  for (std::size_t f = 0; f < batch.rows.size(); ++f) {
    std::set<std::uint32_t> referenced(batch.rows[f].begin(),
                                       batch.rows[f].end());
    std::set<std::uint32_t> with_entries;
    for (const auto& [row, g] : grads.tables[f]) with_entries.insert(row);
    CHECK(with_entries == referenced);
    // Planted nonzero upstream gradients: no entry collapses to zero here.
    for (const auto& [row, g] : grads.tables[f]) {
      double norm = 0.0;
      for (double x : g) norm += x * x;
      CHECK(norm > 0.0);
    }
  }
}

TEST_CASE("duplicate rows in a batch sum their gradient contributions") {
  ToyModelConfig config = tiny_config();
  ToyModel model(config);
  Rng rng(9);
  Batch batch = testing::random_batch(config, 2, rng, false);
  for (std::size_t f = 0; f < batch.rows.size(); ++f)
    batch.rows[f][1] = batch.rows[f][0];  // same rows twice

  const auto [scores, record] = model.forward(batch);
  const Gradients grads = model.backward(record, batch);
  for (std::size_t f = 0; f < batch.rows.size(); ++f)
    CHECK(grads.tables[f].size() == 1);
}

TEST_CASE("doubling a task's loss weight doubles its gradient share") {
  ToyModelConfig base = tiny_config();
  base.loss_weights = {1.0, 1.0};
  ToyModelConfig doubled = tiny_config();
  doubled.loss_weights = {1.0, 2.0};

  ToyModel model1(base), model2(doubled);
  Rng rng(10);
  const Batch batch = testing::random_batch(base, 6, rng, false);
  Batch masked = batch;  // task 1 fully undefined: isolates task 0's share
  for (auto& y : masked.labels[1]) y = kLabelUndefined;

  const auto g1 = model1.backward(model1.forward(batch).second, batch);
  const auto g2 = model2.backward(model2.forward(batch).second, batch);
  const auto g0 = model1.backward(model1.forward(masked).second, masked);

  // g2 - g1 must equal g1 - g0 (one extra unit of task 1's contribution).
  for (std::size_t i = 0; i < g1.dense.size(); ++i)
    for (std::size_t j = 0; j < g1.dense[i].size(); ++j) {
      const double lhs = g2.dense[i][j] - g1.dense[i][j];
      const double rhs = g1.dense[i][j] - g0.dense[i][j];
      CHECK(lhs == doctest::Approx(rhs).epsilon(1e-9));
    }
}
