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

#include "emblab/model.hpp"

namespace emblab {

// Checkpoint directory layout: one blob per embedding table
// (name, bits, dim header; raw little-endian f32 weights; raw u32
// counters), one blob for the dense parameters (f64), and a plain-text
// manifest listing every blob with its content checksum.
void save_checkpoint(const std::filesystem::path& dir, const ToyModel& model);

// Restores weights and counters into a model of identical shape; verifies
// manifest checksums and shapes, throwing DataError on mismatch.
void load_checkpoint(const std::filesystem::path& dir, ToyModel& model);

// Table blocks read without a model, e.g. for frequency reports.
struct CheckpointTable {
  std::string name;
  int bits = 0;
  std::uint32_t dim = 0;
  std::vector<float> weights;
  std::vector<std::uint32_t> counters;
};

std::vector<CheckpointTable> read_checkpoint_tables(
    const std::filesystem::path& dir);

}  // namespace emblab
