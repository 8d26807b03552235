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

// End-to-end acceptance suite. Each criterion prints one pass/fail line;
// the exit code is the number of failures.

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "emblab/checkpoint.hpp"
#include "emblab/common.hpp"
#include "emblab/experiment.hpp"
#include "emblab/io.hpp"
#include "emblab/metrics.hpp"
#include "emblab/optim.hpp"
#include "emblab/synthgen.hpp"
#include "emblab/trainer.hpp"
#include "model_oracles.hpp"
#include "test_util.hpp"

using namespace emblab;

namespace {

struct Harness {
  int failures = 0;

  void run(int id, const std::string& name,
           const std::function<bool(std::string&)>& body) {
    std::string detail;
    bool ok = false;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      ok = body(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    const double sec =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    std::printf("[%s] criterion %2d: %s (%.1fs)%s%s\n", ok ? "PASS" : "FAIL",
                id, name.c_str(), sec, detail.empty() ? "" : " -- ",
                detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
  }
};

// ---------------------------------------------------------------------------
// Shared experiment machinery for the qualitative criteria.

DatasetSchema overfit_schema(std::uint64_t seed, std::uint32_t days,
                             std::uint64_t per_day, double densest_rate,
                             double signal_scale) {
  DatasetSchema s;
  s.features = {
      {"campaign", 262144, 1.1, derive_seed(seed, 101)},
      {"advertiser", 65536, 1.0, derive_seed(seed, 102)},
      {"product", 131072, 1.05, derive_seed(seed, 103)},
  };
  s.tasks = {{"click", 1.0, std::nullopt, 1.0},
             {"checkout", 0.002, TaskCondition{"click", 1}, 1.0}};
  s.continuous_dim = 4;
  s.densest_rate = densest_rate;
  s.signal_scale = signal_scale;
  s.logit_noise = 0.5;
  s.days = days;
  s.examples_per_day = per_day;
  s.seed = seed;
  return s;
}

ToyModelConfig overfit_model(const DatasetSchema& schema,
                             std::uint64_t model_seed,
                             std::vector<std::uint32_t> trunk) {
  ToyModelConfig config;
  for (std::size_t f = 0; f < schema.features.size(); ++f)
    config.tables.push_back(
        {{schema.features[f].feature_name, 16,
          derive_seed(schema.features[f].seed, 0x5A17)},
         32});
  config.continuous_dim = schema.continuous_dim;
  config.trunk_layers = std::move(trunk);
  for (const TaskSpec& t : schema.tasks) {
    config.task_names.push_back(t.name);
    config.loss_weights.push_back(1.0);
  }
  config.init_seed = model_seed;
  return config;
}

struct ArmParams {
  std::vector<std::uint32_t> trunk = {32, 16};
  double base_lr = 0.002;
  double multiplier = 25.0;
  std::uint32_t batch_size = 100;
  std::uint32_t eval_cadence = 4;
  std::uint64_t eval_cap = 400000;
};

LossTrace run_overfit_arm(const SyntheticDataset& ds, std::uint64_t seed,
                          std::uint32_t epochs, FalConfig fal,
                          const ArmParams& params) {
  ToyModel model(
      overfit_model(ds.schema, derive_seed(seed, 201), params.trunk));
  AdamConfig adam;
  adam.base_lr = params.base_lr;
  Optimizer opt(model, adam, SparseOptimizerConfig{params.multiplier}, fal);
  TrainPlan plan;
  plan.batch_day_begin = 0;
  plan.batch_day_end = ds.schema.days - 2;
  plan.epochs = epochs;
  plan.shuffle_seed = derive_seed(seed, 202);
  plan.has_continual = false;
  plan.eval_cadence = params.eval_cadence;
  plan.eval_cap = params.eval_cap;
  plan.batch_size = params.batch_size;
  Trainer trainer(model, opt, ds, plan);
  return trainer.run_batch_phase(false, derive_seed(seed, 203));
}

struct TwoEpochOutcome {
  double base_sparse = 0, base_dense = 0, fal_sparse = 0, fal_dense = 0;
};

// Baseline and FAL(log) arms, paired per seed; filled once and reused by
// criteria 7 and 8.
std::vector<TwoEpochOutcome> g_two_epoch;

// Criterion 7/8 shape: small batches and a hot embedding learning rate so
// one epoch reaches the generalization plateau, with a large holdout day
// so the sparse task's evaluation loss is statistically stable.
void prepare_two_epoch(std::string& detail) {
  const std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  g_two_epoch.assign(seeds.size(), {});
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t k = next.fetch_add(1);
      if (k >= seeds.size()) return;
      const std::uint64_t seed = seeds[k];
      // Ten 50k-example training days plus a 400k holdout day: 900k
      // examples, inside the 2e6 budget.
      SyntheticGenerator gen(overfit_schema(seed, 11, 50000, 0.5, 2.5));
      SyntheticDataset ds;
      ds.schema = gen.schema();
      for (std::uint32_t d = 0; d < 10; ++d)
        ds.days.push_back(gen.sample_day(50000, d));
      ds.days.push_back(gen.sample_day(400000, 10));

      const ArmParams params;
      FalConfig off;
      const LossTrace base = run_overfit_arm(ds, seed, 2, off, params);
      FalConfig fal;
      fal.mode = FalMode::kLog;
      fal.application = FalApplication::kScaleUpdate;
      const LossTrace treated = run_overfit_arm(ds, seed, 2, fal, params);

      TwoEpochOutcome out;
      out.base_dense = epoch_boundary_delta(base, 0).relative;
      out.base_sparse = epoch_boundary_delta(base, 1).relative;
      out.fal_dense = epoch_boundary_delta(treated, 0).relative;
      out.fal_sparse = epoch_boundary_delta(treated, 1).relative;
      g_two_epoch[k] = out;
    }
  };
  std::thread a(worker), b(worker);
  a.join();
  b.join();

  std::ostringstream s;
  for (std::size_t k = 0; k < seeds.size(); ++k)
    s << " seed" << seeds[k] << "[base sparse "
      << g_two_epoch[k].base_sparse * 100 << "% dense "
      << g_two_epoch[k].base_dense * 100 << "% | fal sparse "
      << g_two_epoch[k].fal_sparse * 100 << "%]";
  detail = s.str();
}

}  // namespace

int main() {
  Harness h;

  h.run(1, "gradient correctness vs central finite differences",
        [](std::string& detail) {
          Rng seed_rng(20260809);
          double worst = 0.0;
          for (int trial = 0; trial < 20; ++trial) {
            ToyModelConfig config = testing::random_small_config(seed_rng);
            ToyModel model(config);
            if (model.dense_parameter_count() +
                    model.embedding_parameter_count() >
                1000)
              return false;
            Rng rng(seed_rng.next_u64());
            const Batch batch =
                testing::kink_safe_batch(model, config, 3 + rng.below(4), rng);
            worst = std::max(worst,
                             testing::max_gradient_error(model, batch));
          }
          detail = "max relative error " + fmt_double(worst);
          return worst < 1e-4;
        });

  h.run(2, "rank-sum ROC-AUC equals the pairwise oracle", [](std::string& d) {
    Rng rng(77);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
      const std::size_t n = 2 + rng.below(999);
      std::vector<double> scores(n);
      std::vector<std::uint8_t> labels(n);
      const double quantum = 1.0 / static_cast<double>(1 + rng.below(30));
      for (std::size_t i = 0; i < n; ++i) {
        scores[i] = std::floor(rng.uniform() / quantum) * quantum;
        labels[i] = rng.uniform() < 0.35 ? 1 : 0;
      }
      labels[0] = 1;
      labels[n - 1] = 0;
      worst = std::max(worst, std::abs(roc_auc(scores, labels) -
                                       testing::pairwise_auc(scores, labels)));
    }
    d = "max |rank-sum - pairwise| = " + fmt_double(worst);
    return worst < 1e-12;
  });

  h.run(3, "frequency scale formula exactness and base independence",
        [](std::string& d) {
          const std::vector<std::uint32_t> freq = {0, 9, 99};
          const auto alpha =
              fal_alpha(freq, std::log1p(99.0), FalMode::kLog);
          double worst = std::max(
              {std::abs(alpha[0] - 0.0), std::abs(alpha[1] - 0.5),
               std::abs(alpha[2] - 1.0)});
          for (std::size_t i = 0; i < freq.size(); ++i) {
            const double base10 =
                std::log10(1.0 + freq[i]) / std::log10(100.0);
            worst = std::max(worst, std::abs(alpha[i] - base10));
          }
          d = "max deviation " + fmt_double(worst);
          return worst < 1e-12;
        });

  h.run(4, "cumulative AUC gain formula", [](std::string& d) {
    AucSeries control{"control", {0, 1}, {0.800, 0.800}};
    AucSeries treatment{"treatment", {0, 1}, {0.808, 0.808}};
    const double gain = cumulative_auc_gain(treatment, control);
    d = "gain = " + fmt_double(gain) + "%";
    return std::abs(gain - 1.0) < 1e-12;
  });

  h.run(5, "counter storage overhead is exactly 1/d (3.125% at d=32)",
        [](std::string& d) {
          EmbeddingTable table(HashSpec{"campaign", 12, 9}, 32, 5);
          if (table.counter_storage_bytes() * 32 !=
              table.weight_storage_bytes())
            return false;

          // The serialized checkpoint blob realizes those sizes: f32
          // weights and u32 counters behind a fixed-size header.
          ToyModelConfig config;
          config.tables = {{{"campaign", 12, 9}, 32}};
          config.continuous_dim = 0;
          config.task_names = {"y"};
          config.loss_weights = {1.0};
          config.init_seed = 5;
          ToyModel model(config);
          const auto dir = testing::scratch_dir("acc_overhead");
          save_checkpoint(dir, model);
          const auto blob_size =
              std::filesystem::file_size(dir / "table_0.bin");
          const std::uint64_t header =
              4 + 8 + 4 + 4;  // string length + name + bits + dim
          const std::uint64_t payload = blob_size - header;
          const std::uint64_t weights = table.weight_storage_bytes();
          const std::uint64_t counters = table.counter_storage_bytes();
          d = "weights " + std::to_string(weights) + "B + counters " +
              std::to_string(counters) + "B, ratio " +
              fmt_double(static_cast<double>(counters) /
                         static_cast<double>(weights));
          return payload == weights + counters &&
                 counters * 32 == weights &&
                 static_cast<double>(counters) /
                         static_cast<double>(weights) ==
                     0.03125;
        });

  h.run(6, "zipf calibration reproduces the 0.74%-of-ids-carry-50% shape",
        [](std::string& d) {
          const std::uint32_t num_ids = 100000;
          const double s = calibrate_zipf(num_ids, 0.0074, 0.5);
          std::vector<ZipfIdSpace> spaces = {{"campaign", num_ids, s, 11}};
          std::vector<TaskSpec> tasks = {{"click", 1.0, std::nullopt, 1.0}};
          const DayPartition day = sample_day(spaces, tasks, 1000000, 0, 99);
          std::vector<std::uint64_t> freq(num_ids, 0);
          for (std::uint32_t id : day.ids[0]) ++freq[id];
          const double fraction = coverage_fraction(freq, 0.5);
          d = "exponent " + fmt_double(s) + ", sampled coverage " +
              fmt_double(100.0 * fraction) + "%";
          return std::abs(fraction - 0.0074) <= 0.002;
        });

  {
    std::string prep_detail;
    h.run(7,
          "multi-epoch overfitting: sparse-task boundary jump dominates",
          [&](std::string& d) {
            prepare_two_epoch(prep_detail);
            int sparse_positive = 0, sparse_above_dense = 0;
            for (const auto& o : g_two_epoch) {
              if (o.base_sparse > 0.0) ++sparse_positive;
              if (o.base_sparse > o.base_dense) ++sparse_above_dense;
            }
            d = "sparse delta > 0 in " + std::to_string(sparse_positive) +
                "/5 seeds, sparse > dense in " +
                std::to_string(sparse_above_dense) + "/5;" + prep_detail;
            return sparse_positive >= 4 && sparse_above_dense >= 4;
          });

    h.run(8, "FAL(log) shrinks the sparse-task boundary jump",
          [&](std::string& d) {
            int reduced = 0;
            for (const auto& o : g_two_epoch)
              if (o.fal_sparse < o.base_sparse) ++reduced;
            d = "reduced in " + std::to_string(reduced) + "/5 paired seeds";
            return reduced >= 4;
          });
  }

  h.run(9, "sparse optimizer (50x) converges faster than 1x",
        [](std::string& d) {
          const std::vector<std::uint64_t> seeds = {11, 12, 13, 14, 15};
          std::atomic<std::size_t> next{0};
          std::vector<int> win(seeds.size(), 0);
          std::vector<double> gaps(seeds.size(), 0.0);
          auto worker = [&]() {
            for (;;) {
              const std::size_t k = next.fetch_add(1);
              if (k >= seeds.size()) return;
              const std::uint64_t seed = seeds[k];
              const SyntheticDataset ds =
                  SyntheticGenerator(overfit_schema(seed, 3, 50000, 0.3, 1.5))
                      .generate();
              ArmParams params;
              params.trunk = {64, 32};
              params.base_lr = 0.00015;
              params.batch_size = 500;
              params.eval_cadence = 10;
              params.eval_cap = 30000;
              FalConfig off;
              params.multiplier = 50.0;
              const LossTrace fast = run_overfit_arm(ds, seed, 1, off, params);
              params.multiplier = 1.0;
              const LossTrace slow = run_overfit_arm(ds, seed, 1, off, params);
              const double fast_ema = fast.evals.back().train_loss_ema;
              const double slow_ema = slow.evals.back().train_loss_ema;
              win[k] = fast_ema < slow_ema ? 1 : 0;
              gaps[k] = slow_ema - fast_ema;
            }
          };
          std::thread a(worker), b(worker);
          a.join();
          b.join();
          int wins = 0;
          std::ostringstream s;
          for (std::size_t k = 0; k < seeds.size(); ++k) {
            wins += win[k];
            s << " " << fmt_double(gaps[k]);
          }
          d = "lower smoothed train loss in " + std::to_string(wins) +
              "/5 paired seeds; gaps:" + s.str();
          return wins >= 4;
        });

  h.run(10, "MEDA re-init: dense intact, seeded redraw, empty moments",
        [](std::string& d) {
          ToyModelConfig config;
          config.tables = {{{"a", 8, 3}, 16}, {{"b", 6, 4}, 16}};
          config.continuous_dim = 2;
          config.trunk_layers = {24};
          config.task_names = {"y", "z"};
          config.loss_weights = {1.0, 1.0};
          config.init_seed = 21;
          ToyModel model(config);
          Optimizer opt(model, AdamConfig{}, SparseOptimizerConfig{50.0},
                        FalConfig{});

          Rng rng(5);
          for (int step = 0; step < 20; ++step) {
            Gradients grads;
            grads.tables.resize(2);
            for (std::size_t f = 0; f < 2; ++f) {
              std::vector<double> g(16);
              for (double& x : g) x = rng.normal();
              grads.tables[f].emplace_back(
                  static_cast<std::uint32_t>(rng.below(64)), std::move(g));
            }
            for (const auto* block :
                 static_cast<const ToyModel&>(model).dense_blocks())
              grads.dense.emplace_back(block->size(), 0.01);
            opt.step(model, grads);
            model.tables()[0].accumulate_freq(BatchFrequencies::from_rows(
                std::vector<std::uint32_t>{1, 2, 2}));
          }

          std::vector<std::vector<double>> dense_before;
          for (const auto* block :
               static_cast<const ToyModel&>(model).dense_blocks())
            dense_before.push_back(*block);
          const auto counters = model.tables()[0].freq();

          const std::uint64_t seed = 909;
          meda_reinit(model, opt, seed);

          const auto blocks =
              static_cast<const ToyModel&>(model).dense_blocks();
          for (std::size_t i = 0; i < blocks.size(); ++i)
            if (*blocks[i] != dense_before[i]) {
              d = "dense parameters changed";
              return false;
            }
          if (model.tables()[0].freq() != counters) {
            d = "frequency counters changed";
            return false;
          }
          for (std::size_t f = 0; f < 2; ++f) {
            if (opt.table_moment_rows(f) != 0) {
              d = "moments not cleared";
              return false;
            }
            EmbeddingTable fresh(config.tables[f].hash, config.tables[f].dim,
                                 meda_table_seed(seed, f));
            if (model.tables()[f].raw_weights() != fresh.raw_weights()) {
              d = "weights differ from a fresh seeded init";
              return false;
            }
          }
          d = "dense bit-identical, redraw matches, moments empty";
          return true;
        });

  h.run(11, "no-op and isolation invariants", [](std::string& d) {
    // (a) FAL off arms are bit-identical to the baseline arm, and reruns
    // produce byte-identical CSVs, through the full experiment runner.
    const char* config_text = R"([dataset]
days = 3
examples_per_day = 1500
seed = 404
densest_rate = 0.25
continuous_dim = 2

[feature campaign]
num_ids = 1024
zipf_exponent = 1.1

[feature advertiser]
num_ids = 512
zipf_exponent = 1.0

[task click]
relative_density = 1.0

[task checkout]
relative_density = 0.05
condition = click=1

[model]
bits = 7
dim = 8
trunk = 12
seed = 6

[optimizer]
batch_size = 250

[plan]
epochs = 2
batch_days = 0 0
continual_days = 1 1
shuffle_seed = 9
eval_cadence = 3
eval_cap = 2000

[arm baseline]

[arm clone]
fal = off

[output]
dir = unused
)";
    const ExperimentConfig cfg = ExperimentConfig::from_text(config_text);
    const SyntheticDataset ds = SyntheticGenerator(cfg.dataset).generate();

    auto run_once = [&](const std::filesystem::path& dir) {
      RunOptions opts;
      opts.run_dir = dir;
      opts.jobs = 2;
      opts.force = true;
      return run_experiment(cfg, ds, "acceptancehash", opts);
    };
    const auto dir1 = testing::scratch_dir("acc_run1");
    const auto dir2 = testing::scratch_dir("acc_run2");
    run_once(dir1);
    run_once(dir2);

    const std::string base_trace =
        read_text_file(dir1 / "arms" / "baseline" / "trace.csv");
    if (base_trace != read_text_file(dir1 / "arms" / "clone" / "trace.csv")) {
      d = "FAL-off clone diverged from baseline";
      return false;
    }
    for (const char* arm : {"baseline", "clone"}) {
      if (read_text_file(dir1 / "arms" / arm / "trace.csv") !=
              read_text_file(dir2 / "arms" / arm / "trace.csv") ||
          read_text_file(dir1 / "arms" / arm / "continual.csv") !=
              read_text_file(dir2 / "arms" / arm / "continual.csv")) {
        d = "rerun CSVs differ";
        return false;
      }
    }

    // (b) Uniform row frequencies make FAL bit-identical to baseline:
    // every batch touches every row exactly once.
    ToyModelConfig config;
    config.tables = {{{"t", 2, 5}, 4}};
    config.continuous_dim = 0;
    config.trunk_layers = {6};
    config.task_names = {"y"};
    config.loss_weights = {1.0};
    config.init_seed = 99;

    DatasetSchema uniform_schema;
    uniform_schema.features = {{"t", 64, 1.1, 3}};
    uniform_schema.tasks = {{"y", 1.0, std::nullopt, 1.0}};
    uniform_schema.continuous_dim = 0;
    uniform_schema.days = 2;
    uniform_schema.examples_per_day = 64;
    uniform_schema.seed = 8;
    const SyntheticDataset uniform_ds =
        SyntheticGenerator(uniform_schema).generate();

    auto run_uniform = [&](FalConfig fal) {
      ToyModel model(config);
      Optimizer opt(model, AdamConfig{}, SparseOptimizerConfig{50.0}, fal);
      TrainPlan plan;
      plan.batch_day_begin = 0;
      plan.batch_day_end = 0;
      plan.epochs = 1;
      plan.batch_size = 4;
      plan.eval_cap = 10;
      Trainer trainer(model, opt, uniform_ds, plan);
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
    FalConfig log_fal;
    log_fal.mode = FalMode::kLog;
    if (run_uniform(FalConfig{}) != run_uniform(log_fal)) {
      d = "uniform-frequency FAL diverged from baseline";
      return false;
    }
    d = "arm isolation, rerun byte-equality, uniform-frequency no-op";
    return true;
  });

  std::printf("%d of 11 criteria passed\n", 11 - h.failures);
  return h.failures;
}
