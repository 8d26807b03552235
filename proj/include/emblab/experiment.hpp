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

#include <filesystem>
#include <string>
#include <vector>

#include "emblab/config.hpp"
#include "emblab/synthgen.hpp"
#include "emblab/trainer.hpp"

namespace emblab {

// Long-format CSV, columns: iteration,epoch,task,split,metric,value.
// Batch-phase traces use split test/train plus boundary marker rows; the
// continual series uses split "continual" with the trained day in the
// epoch column (evaluation happens on the following day).
std::string trace_to_csv(const LossTrace& trace);
std::string series_to_csv(const DaySeries& series);
LossTrace trace_from_csv(const std::string& text);
DaySeries series_from_csv(const std::string& text);

struct GenerateResult {
  std::string dataset_hash;
  std::vector<TaskDensityStat> density;
};

// Writes one file per day plus the schema sidecar (with content hash) into
// dataset_dir. Refuses an existing non-empty directory unless force.
GenerateResult generate_dataset(const ExperimentConfig& cfg,
                                const std::filesystem::path& dataset_dir,
                                bool force);

// Verifies that dataset_dir holds data generated from exactly this
// config's dataset schema and that the files still hash to the recorded
// value. Returns the dataset hash; throws DataError on any mismatch.
std::string check_dataset(const ExperimentConfig& cfg,
                          const std::filesystem::path& dataset_dir);

struct ArmResult {
  std::string arm;
  LossTrace trace;
  DaySeries series;
};

struct RunOptions {
  std::filesystem::path run_dir;
  int jobs = 1;
  bool force = false;
};

// Trains every arm of the plan (in parallel up to jobs; arms share the
// seeded model init and data order, so they differ only through their
// optimizer treatment). Writes per-arm trace.csv / continual.csv /
// checkpoints, the resolved config, and a run manifest (written last, as
// the completion marker). Returns per-arm results in config order.
std::vector<ArmResult> run_experiment(const ExperimentConfig& cfg,
                                      const SyntheticDataset& dataset,
                                      const std::string& dataset_hash,
                                      const RunOptions& opts);

struct ReportOptions {
  std::vector<std::filesystem::path> run_dirs;
  std::string control_arm;
  std::vector<std::string> treatment_arms;  // empty = every other arm
  std::filesystem::path out_dir;
};

// Cross-arm report: cumulative AUC gains per (task, treatment),
// epoch-boundary deltas per (arm, task), and frequency reports per table,
// as plot-ready CSVs plus a text summary. Refuses runs whose dataset
// hashes differ.
void write_report(const ReportOptions& opts);

}  // namespace emblab
