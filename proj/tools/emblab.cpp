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

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "emblab/common.hpp"
#include "emblab/experiment.hpp"
#include "emblab/io.hpp"

namespace {

namespace fs = std::filesystem;
using namespace emblab;

// Patches a key in the parsed document before resolution, so seed
// overrides participate in derived-seed resolution like hand-written
// values would.
void set_document_key(IniDocument& doc, const std::string& kind,
                      const std::string& key, const std::string& value) {
  for (IniSection& s : doc.sections) {
    if (s.kind != kind) continue;
    for (IniEntry& e : s.entries)
      if (e.key == key) {
        e.value = value;
        return;
      }
    s.entries.push_back({key, value});
    return;
  }
  doc.sections.push_back({kind, "", {{key, value}}});
}

ExperimentConfig load_config(const std::string& path, bool has_seed_override,
                             std::uint64_t seed_override, bool for_train) {
  IniDocument doc = IniDocument::parse(read_text_file(path));
  if (has_seed_override) {
    if (for_train) {
      set_document_key(doc, "model", "seed", std::to_string(seed_override));
      set_document_key(doc, "plan", "shuffle_seed",
                       std::to_string(derive_seed(seed_override, 1)));
    } else {
      set_document_key(doc, "dataset", "seed", std::to_string(seed_override));
    }
  }
  return ExperimentConfig::from_text(doc.serialize());
}

int cmd_generate(const std::string& config_path, const std::string& out,
                 bool force, bool has_seed_override,
                 std::uint64_t seed_override) {
  const ExperimentConfig cfg =
      load_config(config_path, has_seed_override, seed_override, false);
  const fs::path dir =
      out.empty() ? fs::path(cfg.out_dir) / "dataset" : fs::path(out);
  const GenerateResult result = generate_dataset(cfg, dir, force);
  std::cout << "dataset written to " << dir.string() << "\n";
  std::cout << "dataset_hash = " << result.dataset_hash << "\n";
  std::cout << "task, defined, positives, observed_rate, target_rate, "
               "within_3sigma\n";
  for (const TaskDensityStat& s : result.density) {
    std::cout << s.task << ", " << s.defined << ", " << s.positives << ", "
              << fmt_double(s.observed) << ", " << fmt_double(s.target) << ", "
              << (s.within ? "yes" : "NO") << "\n";
  }
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& out,
              int jobs, bool force, bool has_seed_override,
              std::uint64_t seed_override) {
  const ExperimentConfig cfg =
      load_config(config_path, has_seed_override, seed_override, true);
  const fs::path dataset_dir = fs::path(cfg.out_dir) / "dataset";
  const std::string dataset_hash = check_dataset(cfg, dataset_dir);
  const SyntheticDataset dataset = read_dataset(dataset_dir, cfg.dataset);

  RunOptions opts;
  opts.run_dir = out.empty() ? fs::path(cfg.out_dir) / "run" : fs::path(out);
  opts.jobs = jobs;
  opts.force = force;
  const std::vector<ArmResult> results =
      run_experiment(cfg, dataset, dataset_hash, opts);

  std::cout << "run written to " << opts.run_dir.string() << "\n";
  for (const ArmResult& r : results) {
    std::cout << "arm " << r.arm << ": " << r.trace.evals.size()
              << " evals, final total test loss "
              << fmt_double(r.trace.evals.back().total_loss);
    if (!r.series.days.empty())
      std::cout << ", " << r.series.days.size() << " continual days";
    if (r.trace.skipped_batches)
      std::cout << ", skipped batches: " << r.trace.skipped_batches;
    std::cout << "\n";
  }
  return 0;
}

int cmd_report(const std::vector<std::string>& runs,
               const std::string& control,
               const std::vector<std::string>& treatments,
               const std::string& out) {
  ReportOptions opts;
  for (const std::string& r : runs) opts.run_dirs.emplace_back(r);
  opts.control_arm = control;
  opts.treatment_arms = treatments;
  opts.out_dir = out;
  write_report(opts);
  std::cout << "report written to " << out << "\n";
  std::cout << read_text_file(fs::path(out) / "summary.txt");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"synthetic embedding-table training experiments"};
  app.require_subcommand(1);

  std::string config_path, out;
  int jobs = 1;
  bool force = false;
  std::uint64_t seed_override = 0;

  auto* generate = app.add_subcommand(
      "generate", "generate the dataset described by a config");
  generate->add_option("--config", config_path, "experiment config file")
      ->required();
  generate->add_option("--out", out, "dataset directory (default <dir>/dataset)");
  generate->add_flag("--force", force, "overwrite a non-empty output dir");
  auto* gen_seed = generate->add_option("--seed-override", seed_override,
                                        "replace the dataset seed");

  auto* train =
      app.add_subcommand("train", "train all arms of a config over a dataset");
  train->add_option("--config", config_path, "experiment config file")
      ->required();
  train->add_option("--out", out, "run directory (default <dir>/run)");
  train->add_option("--jobs", jobs, "parallel arms")->check(CLI::Range(1, 64));
  train->add_flag("--force", force, "overwrite a non-empty run dir");
  auto* train_seed = train->add_option(
      "--seed-override", seed_override,
      "replace the model seed (shuffle seed is derived from it)");

  std::vector<std::string> runs, treatments;
  std::string control;
  auto* report = app.add_subcommand(
      "report", "compare arms: AUC gains, boundary deltas, frequency reports");
  report->add_option("--run", runs, "run directory (repeatable)")->required();
  report->add_option("--control", control, "control arm name")->required();
  report->add_option("--treatment", treatments,
                     "treatment arm names (default: all other arms)");
  report->add_option("--out", out, "report output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (generate->parsed())
      return cmd_generate(config_path, out, force, !gen_seed->empty(),
                          seed_override);
    if (train->parsed())
      return cmd_train(config_path, out, jobs, force, !train_seed->empty(),
                       seed_override);
    if (report->parsed()) return cmd_report(runs, control, treatments, out);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
