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

#include "emblab/tasks.hpp"
#include "emblab/zipf.hpp"

namespace emblab {

// One day of examples, struct-of-arrays. Immutable after generation.
struct DayPartition {
  std::uint32_t day_index = 0;
  std::uint64_t num_examples = 0;
  // ids[f][e] is the raw (pre-hash) id of feature f for example e.
  std::vector<std::vector<std::uint32_t>> ids;
  // Row-major [e * continuous_dim + k].
  std::vector<float> continuous;
  // labels[t][e] in {0, 1, kLabelUndefined}.
  std::vector<std::vector<std::uint8_t>> labels;
};

// Full generation recipe. Together with the seed this determines every
// byte of the dataset.
struct DatasetSchema {
  std::vector<ZipfIdSpace> features;
  std::vector<TaskSpec> tasks;
  std::uint32_t continuous_dim = 4;
  // Absolute positive rate of the densest task; every other task's
  // relative density hangs off this free knob.
  double densest_rate = 0.2;
  double signal_scale = 1.5;   // planted logit scale
  double logit_noise = 0.0;    // stddev of extra per-example logit noise
  double drift_per_day = 0.0;  // radians/day rotation of hidden embeddings
  std::uint32_t days = 1;
  std::uint64_t examples_per_day = 0;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const DatasetSchema&) const = default;
};

struct SyntheticDataset {
  DatasetSchema schema;
  std::vector<DayPartition> days;

  const DayPartition& day(std::uint32_t day_index) const;
  bool has_day(std::uint32_t day_index) const;
};

// Binary day-file format: header (magic "EMB1", version, dimensions),
// then fixed-width records: day u32, one u32 raw id per feature,
// continuous as little-endian f32, one label byte per task.
inline constexpr char kDayFileMagic[4] = {'E', 'M', 'B', '1'};
inline constexpr std::uint32_t kDayFileVersion = 1;

std::string day_file_name(std::uint32_t day_index);
void write_day_file(const std::filesystem::path& path, const DayPartition& day,
                    const DatasetSchema& schema);
DayPartition read_day_file(const std::filesystem::path& path,
                           const DatasetSchema& schema);

// Schema sidecar (plain-text key = value) plus the dataset content hash.
std::string schema_sidecar_text(const DatasetSchema& schema,
                                const std::string& dataset_hash);
void write_schema_sidecar(const std::filesystem::path& path,
                          const DatasetSchema& schema,
                          const std::string& dataset_hash);

// FNV-1a over all day files in day order.
std::string dataset_content_hash(const std::filesystem::path& dir,
                                 std::uint32_t days);

void write_dataset(const std::filesystem::path& dir,
                   const SyntheticDataset& ds);
SyntheticDataset read_dataset(const std::filesystem::path& dir,
                              const DatasetSchema& schema);

// Recorded hash from the sidecar, re-verified against file contents.
std::string verify_dataset_hash(const std::filesystem::path& dir,
                                const DatasetSchema& schema);

}  // namespace emblab
