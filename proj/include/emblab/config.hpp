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
#include <filesystem>
#include <string>
#include <vector>

#include "emblab/dataset.hpp"
#include "emblab/trainer.hpp"

namespace emblab {

// Plain-text sectioned config document: `key = value` lines under
// `[section]` or `[section label]` headers. Full-line comments start with
// '#'. Unknown sections or keys are rejected at resolution.
struct IniEntry {
  std::string key;
  std::string value;
};

struct IniSection {
  std::string kind;   // e.g. "dataset", "task"
  std::string label;  // e.g. the task name; empty for singleton sections
  std::vector<IniEntry> entries;
};

struct IniDocument {
  std::vector<IniSection> sections;

  static IniDocument parse(const std::string& text);
  std::string serialize() const;
};

// Fully-resolved experiment description: every optional filled in, zipf
// coverage targets turned into exponents, derived seeds pinned. Resolved
// configs round-trip: parse(serialize(cfg)) == cfg.
struct ExperimentConfig {
  DatasetSchema dataset;

  int bits = 16;
  std::uint32_t dim = 32;
  std::vector<std::uint32_t> trunk = {64, 32};
  std::uint64_t model_seed = 1;

  AdamConfig adam;
  TrainPlan plan;

  std::string out_dir;

  bool operator==(const ExperimentConfig&) const = default;

  // Model construction from the resolved pieces: one table per feature
  // with a salt derived from the feature seed.
  ToyModelConfig model_config() const;

  static ExperimentConfig from_text(const std::string& text);
  static ExperimentConfig from_file(const std::filesystem::path& path);
  std::string to_text() const;

  // FNV-1a of the canonical serialization.
  std::string config_hash() const;
};

}  // namespace emblab
