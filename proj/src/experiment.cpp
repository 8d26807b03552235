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

#include "emblab/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "emblab/checkpoint.hpp"
#include "emblab/common.hpp"
#include "emblab/io.hpp"
#include "emblab/metrics.hpp"
#include "emblab/zipf.hpp"

namespace emblab {

namespace {

constexpr std::uint64_t kTagMedaSeed = 0x3EDA0;
constexpr char kCsvHeader[] = "iteration,epoch,task,split,metric,value\n";

struct CsvRow {
  std::uint64_t iteration = 0;
  std::uint32_t epoch = 0;
  std::string task, split, metric;
  double value = 0.0;
};

std::vector<CsvRow> parse_csv(const std::string& text) {
  std::vector<CsvRow> rows;
  std::istringstream lines(text);
  std::string line;
  bool first = true;
  while (std::getline(lines, line)) {
    if (first) {
      first = false;
      if (line + "\n" != kCsvHeader)
        throw DataError("unexpected CSV header: " + line);
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
      if (i == line.size() || line[i] == ',') {
        fields.push_back(line.substr(start, i - start));
        start = i + 1;
      }
    }
    if (fields.size() != 6) throw DataError("malformed CSV row: " + line);
    CsvRow row;
    row.iteration = std::stoull(fields[0]);
    row.epoch = static_cast<std::uint32_t>(std::stoul(fields[1]));
    row.task = fields[2];
    row.split = fields[3];
    row.metric = fields[4];
    row.value = std::stod(fields[5]);
    rows.push_back(std::move(row));
  }
  return rows;
}

void append_row(std::string& out, std::uint64_t iteration, std::uint32_t epoch,
                const std::string& task, const std::string& split,
                const std::string& metric, double value) {
  out += std::to_string(iteration);
  out += ',';
  out += std::to_string(epoch);
  out += ',';
  out += task;
  out += ',';
  out += split;
  out += ',';
  out += metric;
  out += ',';
  out += fmt_double(value);
  out += '\n';
}

}  // namespace

std::string trace_to_csv(const LossTrace& trace) {
  std::string out = kCsvHeader;
  for (const EvalPoint& p : trace.evals) {
    for (std::size_t t = 0; t < trace.tasks.size(); ++t) {
      if (p.loss_defined[t])
        append_row(out, p.iteration, p.epoch, trace.tasks[t], "test", "loss",
                   p.task_loss[t]);
      if (p.auc_defined[t])
        append_row(out, p.iteration, p.epoch, trace.tasks[t], "test", "auc",
                   p.task_auc[t]);
    }
    append_row(out, p.iteration, p.epoch, "_total", "test", "loss",
               p.total_loss);
    append_row(out, p.iteration, p.epoch, "_total", "train", "loss_ema",
               p.train_loss_ema);
  }
  for (std::size_t k = 0; k < trace.boundary_iterations.size(); ++k)
    append_row(out, trace.boundary_iterations[k],
               static_cast<std::uint32_t>(k + 2), "_total", "boundary",
               "epoch_start", static_cast<double>(k + 2));
  return out;
}

std::string series_to_csv(const DaySeries& series) {
  std::string out = kCsvHeader;
  for (std::size_t i = 0; i < series.days.size(); ++i) {
    for (std::size_t t = 0; t < series.tasks.size(); ++t) {
      if (series.loss_defined[i][t])
        append_row(out, series.iterations[i], series.days[i], series.tasks[t],
                   "continual", "loss", series.task_loss[i][t]);
      if (series.auc_defined[i][t])
        append_row(out, series.iterations[i], series.days[i], series.tasks[t],
                   "continual", "auc", series.task_auc[i][t]);
    }
    append_row(out, series.iterations[i], series.days[i], "_total",
               "continual", "loss", series.total_loss[i]);
  }
  return out;
}

LossTrace trace_from_csv(const std::string& text) {
  const std::vector<CsvRow> rows = parse_csv(text);
  LossTrace trace;
  for (const CsvRow& row : rows)
    if (row.task != "_total" &&
        std::find(trace.tasks.begin(), trace.tasks.end(), row.task) ==
            trace.tasks.end())
      trace.tasks.push_back(row.task);

  std::map<std::uint64_t, std::size_t> eval_at;
  const std::size_t n_tasks = trace.tasks.size();
  for (const CsvRow& row : rows) {
    if (row.split == "boundary") {
      trace.boundary_iterations.push_back(row.iteration);
      continue;
    }
    auto it = eval_at.find(row.iteration);
    if (it == eval_at.end()) {
      EvalPoint p;
      p.iteration = row.iteration;
      p.epoch = row.epoch;
      p.task_loss.assign(n_tasks, 0.0);
      p.loss_defined.assign(n_tasks, 0);
      p.task_auc.assign(n_tasks, 0.0);
      p.auc_defined.assign(n_tasks, 0);
      trace.evals.push_back(std::move(p));
      it = eval_at.emplace(row.iteration, trace.evals.size() - 1).first;
    }
    EvalPoint& p = trace.evals[it->second];
    if (row.task == "_total") {
      if (row.split == "test")
        p.total_loss = row.value;
      else
        p.train_loss_ema = row.value;
      continue;
    }
    const std::size_t t = static_cast<std::size_t>(
        std::find(trace.tasks.begin(), trace.tasks.end(), row.task) -
        trace.tasks.begin());
    if (row.metric == "loss") {
      p.task_loss[t] = row.value;
      p.loss_defined[t] = 1;
    } else if (row.metric == "auc") {
      p.task_auc[t] = row.value;
      p.auc_defined[t] = 1;
    }
  }
  std::sort(trace.evals.begin(), trace.evals.end(),
            [](const EvalPoint& a, const EvalPoint& b) {
              return a.iteration < b.iteration;
            });
  std::sort(trace.boundary_iterations.begin(),
            trace.boundary_iterations.end());
  return trace;
}

DaySeries series_from_csv(const std::string& text) {
  const std::vector<CsvRow> rows = parse_csv(text);
  DaySeries series;
  for (const CsvRow& row : rows)
    if (row.task != "_total" &&
        std::find(series.tasks.begin(), series.tasks.end(), row.task) ==
            series.tasks.end())
      series.tasks.push_back(row.task);

  std::map<std::uint32_t, std::size_t> day_at;
  const std::size_t n_tasks = series.tasks.size();
  for (const CsvRow& row : rows) {
    auto it = day_at.find(row.epoch);
    if (it == day_at.end()) {
      series.days.push_back(row.epoch);
      series.iterations.push_back(row.iteration);
      series.total_loss.push_back(0.0);
      series.task_loss.emplace_back(n_tasks, 0.0);
      series.loss_defined.emplace_back(n_tasks, 0);
      series.task_auc.emplace_back(n_tasks, 0.0);
      series.auc_defined.emplace_back(n_tasks, 0);
      it = day_at.emplace(row.epoch, series.days.size() - 1).first;
    }
    const std::size_t i = it->second;
    if (row.task == "_total") {
      series.total_loss[i] = row.value;
      continue;
    }
    const std::size_t t = static_cast<std::size_t>(
        std::find(series.tasks.begin(), series.tasks.end(), row.task) -
        series.tasks.begin());
    if (row.metric == "loss") {
      series.task_loss[i][t] = row.value;
      series.loss_defined[i][t] = 1;
    } else if (row.metric == "auc") {
      series.task_auc[i][t] = row.value;
      series.auc_defined[i][t] = 1;
    }
  }
  return series;
}

namespace {

void require_empty_or_force(const std::filesystem::path& dir, bool force) {
  namespace fs = std::filesystem;
  if (fs::exists(dir) && !fs::is_empty(dir) && !force)
    throw ConfigError("output directory " + dir.string() +
                      " exists and is not empty (use --force to overwrite)");
}

}  // namespace

GenerateResult generate_dataset(const ExperimentConfig& cfg,
                                const std::filesystem::path& dataset_dir,
                                bool force) {
  require_empty_or_force(dataset_dir, force);
  SyntheticGenerator gen(cfg.dataset);
  const SyntheticDataset ds = gen.generate();
  write_dataset(dataset_dir, ds);
  GenerateResult result;
  result.dataset_hash = dataset_content_hash(dataset_dir, cfg.dataset.days);
  result.density = gen.density_summary(ds);
  return result;
}

std::string check_dataset(const ExperimentConfig& cfg,
                          const std::filesystem::path& dataset_dir) {
  // Content integrity first, then schema identity with this config.
  const std::string hash = verify_dataset_hash(dataset_dir, cfg.dataset);
  const std::string actual_sidecar =
      read_text_file(dataset_dir / "schema.txt");
  const std::string expected_sidecar = schema_sidecar_text(cfg.dataset, hash);
  if (actual_sidecar != expected_sidecar)
    throw DataError(
        "dataset at " + dataset_dir.string() +
        " was generated from a different dataset configuration; refusing to "
        "train against it");
  return hash;
}

std::vector<ArmResult> run_experiment(const ExperimentConfig& cfg,
                                      const SyntheticDataset& dataset,
                                      const std::string& dataset_hash,
                                      const RunOptions& opts) {
  namespace fs = std::filesystem;
  const auto t_start = std::chrono::steady_clock::now();

  if (cfg.plan.arms.empty())
    throw ConfigError("run_experiment: arm list is empty");
  cfg.plan.validate(dataset);

  require_empty_or_force(opts.run_dir, opts.force);
  fs::create_directories(opts.run_dir);
  write_text_file(opts.run_dir / "config.resolved.ini", cfg.to_text());

  std::vector<ArmResult> results(cfg.plan.arms.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cfg.plan.arms.size()) return;
      try {
        const ArmSpec& arm = cfg.plan.arms[i];
        const fs::path arm_dir = opts.run_dir / "arms" / arm.name;
        fs::create_directories(arm_dir);

        ToyModel model(cfg.model_config());
        Optimizer optimizer(model, cfg.adam, arm.sparse, arm.fal);
        Trainer trainer(model, optimizer, dataset, cfg.plan);

        ArmResult result;
        result.arm = arm.name;
        result.trace = trainer.run_batch_phase(
            arm.meda, derive_seed(cfg.model_seed, kTagMedaSeed));
        save_checkpoint(arm_dir / "ckpt_batch", model);
        result.series = trainer.run_continual_phase();
        if (cfg.plan.has_continual)
          save_checkpoint(arm_dir / "ckpt_final", model);

        write_text_file(arm_dir / "trace.csv", trace_to_csv(result.trace));
        write_text_file(arm_dir / "continual.csv",
                        series_to_csv(result.series));
        results[i] = std::move(result);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };

  const std::size_t n_workers = std::max<std::size_t>(
      1, std::min<std::size_t>(static_cast<std::size_t>(std::max(1, opts.jobs)),
                               cfg.plan.arms.size()));
  std::vector<std::thread> threads;
  for (std::size_t w = 0; w < n_workers; ++w) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);

  const double wall_sec =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
          .count();

  std::ostringstream manifest;
  manifest << "completed = true\n";
  manifest << "config_hash = " << cfg.config_hash() << "\n";
  manifest << "dataset_hash = " << dataset_hash << "\n";
  manifest << "dataset_seed = " << cfg.dataset.seed << "\n";
  manifest << "model_seed = " << cfg.model_seed << "\n";
  manifest << "shuffle_seed = " << cfg.plan.shuffle_seed << "\n";
  manifest << "epochs = " << cfg.plan.epochs << "\n";
  std::string arm_names;
  for (const ArmSpec& arm : cfg.plan.arms) {
    if (!arm_names.empty()) arm_names += " ";
    arm_names += arm.name;
  }
  manifest << "arms = " << arm_names << "\n";
  manifest << "wall_time_sec = " << fmt_double(wall_sec) << "\n";
  write_text_file(opts.run_dir / "manifest.txt", manifest.str());
  return results;
}

namespace {

std::map<std::string, std::string> parse_kv_file(
    const std::filesystem::path& path) {
  std::map<std::string, std::string> kv;
  std::istringstream lines(read_text_file(path));
  std::string line;
  while (std::getline(lines, line)) {
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) continue;
    kv[line.substr(0, eq)] = line.substr(eq + 3);
  }
  return kv;
}

struct ArmFiles {
  std::string name;
  std::filesystem::path dir;
};

}  // namespace

void write_report(const ReportOptions& opts) {
  namespace fs = std::filesystem;
  if (opts.run_dirs.empty()) throw ConfigError("report: no run directories");

  std::string dataset_hash;
  std::map<std::string, ArmFiles> arms;
  for (const fs::path& run : opts.run_dirs) {
    const auto manifest = parse_kv_file(run / "manifest.txt");
    const auto hash_it = manifest.find("dataset_hash");
    const auto completed_it = manifest.find("completed");
    if (hash_it == manifest.end() || completed_it == manifest.end() ||
        completed_it->second != "true")
      throw DataError("report: " + run.string() +
                      " is not a completed run directory");
    if (dataset_hash.empty())
      dataset_hash = hash_it->second;
    else if (dataset_hash != hash_it->second)
      throw DataError(
          "report: dataset hash mismatch across runs: " + dataset_hash +
          " vs " + hash_it->second + " (" + run.string() + ")");
    const auto arms_it = manifest.find("arms");
    if (arms_it == manifest.end())
      throw DataError("report: manifest has no arm list: " + run.string());
    std::istringstream names(arms_it->second);
    std::string name;
    while (names >> name) {
      if (arms.count(name))
        throw ConfigError("report: arm '" + name +
                          "' appears in more than one run directory");
      arms[name] = ArmFiles{name, run / "arms" / name};
    }
  }

  if (!arms.count(opts.control_arm))
    throw ConfigError("report: unknown control arm '" + opts.control_arm + "'");
  std::vector<std::string> treatments = opts.treatment_arms;
  if (treatments.empty())
    for (const auto& [name, files] : arms)
      if (name != opts.control_arm) treatments.push_back(name);
  for (const std::string& name : treatments)
    if (!arms.count(name))
      throw ConfigError("report: unknown treatment arm '" + name + "'");

  fs::create_directories(opts.out_dir);
  std::ostringstream summary;
  summary << "report over " << arms.size() << " arms, dataset " << dataset_hash
          << "\n";
  summary << "control: " << opts.control_arm << "\n\n";

  // Per-arm data.
  std::map<std::string, DaySeries> series;
  std::map<std::string, LossTrace> traces;
  for (const auto& [name, files] : arms) {
    series[name] = series_from_csv(read_text_file(files.dir / "continual.csv"));
    traces[name] = trace_from_csv(read_text_file(files.dir / "trace.csv"));
  }

  // Cumulative AUC gains against the control.
  std::string gains_csv = "control,treatment,task,days,cumulative_gain_pct\n";
  std::string gains_daily_csv = "control,treatment,task,day,gain_pct\n";
  summary << "cumulative AUC gain vs control\n";
  const DaySeries& control_series = series.at(opts.control_arm);
  for (const std::string& treatment : treatments) {
    const DaySeries& treat_series = series.at(treatment);
    for (std::size_t t = 0; t < control_series.tasks.size(); ++t) {
      const std::string& task = control_series.tasks[t];
      const auto tt = std::find(treat_series.tasks.begin(),
                                treat_series.tasks.end(), task);
      if (tt == treat_series.tasks.end()) continue;
      const std::size_t t2 =
          static_cast<std::size_t>(tt - treat_series.tasks.begin());

      AucSeries a, b;
      a.arm = treatment;
      b.arm = opts.control_arm;
      for (std::size_t i = 0; i < control_series.days.size(); ++i) {
        for (std::size_t j = 0; j < treat_series.days.size(); ++j) {
          if (treat_series.days[j] != control_series.days[i]) continue;
          if (!control_series.auc_defined[i][t] ||
              !treat_series.auc_defined[j][t2])
            continue;
          a.days.push_back(treat_series.days[j]);
          a.auc.push_back(treat_series.task_auc[j][t2]);
          b.days.push_back(control_series.days[i]);
          b.auc.push_back(control_series.task_auc[i][t]);
        }
      }
      if (a.days.empty()) {
        summary << "  " << treatment << " / " << task
                << ": no aligned days with defined AUC (skipped)\n";
        continue;
      }
      const GainReport report = make_gain_report(a, b, task);
      gains_csv += opts.control_arm + "," + treatment + "," + task + "," +
                   std::to_string(report.days.size()) + "," +
                   fmt_double(report.cumulative_pct) + "\n";
      for (std::size_t i = 0; i < report.days.size(); ++i)
        gains_daily_csv += opts.control_arm + "," + treatment + "," + task +
                           "," + std::to_string(report.days[i]) + "," +
                           fmt_double(report.per_day_pct[i]) + "\n";
      summary << "  " << treatment << " / " << task << ": "
              << fmt_double(report.cumulative_pct) << "% over "
              << report.days.size() << " days\n";
    }
  }
  write_text_file(opts.out_dir / "gains.csv", gains_csv);
  write_text_file(opts.out_dir / "gains_daily.csv", gains_daily_csv);

  // Epoch-boundary deltas per arm and task.
  std::string boundary_csv =
      "arm,task,boundary,relative_delta,absolute_delta\n";
  summary << "\nepoch-boundary loss deltas (relative)\n";
  for (const auto& [name, trace] : traces) {
    for (std::size_t b = 0; b < trace.boundary_iterations.size(); ++b) {
      for (std::size_t t = 0; t < trace.tasks.size(); ++t) {
        const BoundaryDelta delta = epoch_boundary_delta(trace, t, b);
        boundary_csv += name + "," + trace.tasks[t] + "," + std::to_string(b) +
                        "," + fmt_double(delta.relative) + "," +
                        fmt_double(delta.absolute) + "\n";
        summary << "  " << name << " / " << trace.tasks[t] << " (boundary "
                << b << "): " << fmt_double(100.0 * delta.relative) << "%\n";
      }
    }
  }
  write_text_file(opts.out_dir / "boundary.csv", boundary_csv);

  // Frequency reports from the final checkpoints.
  std::string freq_csv =
      "arm,table,total,never_seen_fraction,coverage50,coverage90,coverage99\n";
  summary << "\nfrequency coverage (per table)\n";
  for (const auto& [name, files] : arms) {
    fs::path ckpt = files.dir / "ckpt_final";
    if (!fs::exists(ckpt)) ckpt = files.dir / "ckpt_batch";
    if (!fs::exists(ckpt)) continue;
    for (const CheckpointTable& table : read_checkpoint_tables(ckpt)) {
      std::uint64_t total = 0;
      for (std::uint32_t c : table.counters) total += c;
      if (total == 0) continue;
      std::vector<std::uint64_t> counts(table.counters.begin(),
                                        table.counters.end());
      std::uint64_t never = 0;
      for (std::uint64_t c : counts)
        if (c == 0) ++never;
      const double never_fraction =
          static_cast<double>(never) / static_cast<double>(counts.size());
      const double c50 = coverage_fraction(counts, 0.5);
      const double c90 = coverage_fraction(counts, 0.9);
      const double c99 = coverage_fraction(counts, 0.99);
      freq_csv += name + "," + table.name + "," + std::to_string(total) + "," +
                  fmt_double(never_fraction) + "," + fmt_double(c50) + "," +
                  fmt_double(c90) + "," + fmt_double(c99) + "\n";
      summary << "  " << name << " / " << table.name
              << ": coverage50=" << fmt_double(100.0 * c50)
              << "% never_seen=" << fmt_double(100.0 * never_fraction)
              << "%\n";

      std::vector<std::uint32_t> sorted(table.counters.begin(),
                                        table.counters.end());
      std::sort(sorted.begin(), sorted.end(), std::greater<>());
      std::string points_csv = "rank,count\n";
      std::uint64_t rank = 1;
      while (rank <= sorted.size()) {
        points_csv += std::to_string(rank) + "," +
                      std::to_string(sorted[rank - 1]) + "\n";
        const auto jump = static_cast<std::uint64_t>(
            std::ceil(static_cast<double>(rank) * 1.25));
        rank = std::max(rank + 1, jump);
      }
      write_text_file(
          opts.out_dir / ("freq_" + name + "_" + table.name + ".csv"),
          points_csv);
    }
  }
  write_text_file(opts.out_dir / "freq_summary.csv", freq_csv);
  write_text_file(opts.out_dir / "summary.txt", summary.str());
}

}  // namespace emblab
