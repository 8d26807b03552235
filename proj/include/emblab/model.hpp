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
#include <string>
#include <utility>
#include <vector>

#include "emblab/embedding.hpp"
#include "emblab/tasks.hpp"

namespace emblab {

// Scores are clamped to [kProbEpsilon, 1 - kProbEpsilon] so saturated heads
// cannot produce infinite loss. Within the clamp region the loss is flat
// and the logit gradient is zero.
inline constexpr double kProbEpsilon = 1e-7;

struct TableConfig {
  HashSpec hash;
  std::uint32_t dim = 32;
};

// Embedding concatenation + shared ReLU trunk + one sigmoid head per task.
struct ToyModelConfig {
  std::vector<TableConfig> tables;
  std::uint32_t continuous_dim = 0;
  std::vector<std::uint32_t> trunk_layers;  // hidden widths
  std::vector<std::string> task_names;
  std::vector<double> loss_weights;  // one positive weight per task
  std::uint64_t init_seed = 0;

  void validate() const;
  std::uint32_t input_dim() const;
};

// One training/eval batch. rows are already hashed into table row space.
struct Batch {
  std::size_t size = 0;
  std::vector<std::vector<std::uint32_t>> rows;   // [table][example]
  std::vector<double> continuous;                 // row-major size x dim
  std::vector<std::vector<std::uint8_t>> labels;  // [task][example]
};

struct Scores {
  std::vector<std::vector<double>> prob;  // [task][example], clamped
};

// Cached activations sufficient to replay the exact backward pass of one
// batch.
struct ForwardRecord {
  std::size_t batch_size = 0;
  std::vector<std::vector<std::uint32_t>> rows;
  std::vector<std::vector<double>> activations;    // a_0..a_L, [l][e*w+i]
  std::vector<std::vector<double>> prob;           // clamped scores
  std::vector<std::vector<std::uint8_t>> clamped;  // 1 where clamp was active
};

struct LossResult {
  double total = 0.0;
  std::vector<double> per_task;             // mean BCE over defined labels
  std::vector<std::uint64_t> defined_count;
  std::vector<std::uint8_t> has_defined;    // 0 flags a task with no labels
};

// Sparse per-table row gradients plus dense blocks aligned with
// ToyModel::dense_block_names() order. Duplicate row references within a
// batch sum their contributions; rows not referenced have no entry.
struct Gradients {
  std::vector<std::vector<std::pair<std::uint32_t, std::vector<double>>>>
      tables;  // [table] sorted by row index
  std::vector<std::vector<double>> dense;
};

// Per-task mean binary cross-entropy over defined labels; total is the
// loss_weights-weighted sum. Tasks with no defined labels contribute 0 and
// are flagged.
LossResult masked_bce_loss(const Scores& scores,
                           const std::vector<std::vector<std::uint8_t>>& labels,
                           const std::vector<double>& loss_weights);

class ToyModel {
 public:
  explicit ToyModel(ToyModelConfig config);

  const ToyModelConfig& config() const { return config_; }
  std::vector<EmbeddingTable>& tables() { return tables_; }
  const std::vector<EmbeddingTable>& tables() const { return tables_; }

  std::vector<std::string> dense_block_names() const;
  std::vector<std::vector<double>*> dense_blocks();
  std::vector<const std::vector<double>*> dense_blocks() const;

  std::pair<Scores, ForwardRecord> forward(const Batch& batch) const;
  LossResult loss(const Scores& scores,
                  const std::vector<std::vector<std::uint8_t>>& labels) const {
    return masked_bce_loss(scores, labels, config_.loss_weights);
  }
  Gradients backward(const ForwardRecord& record, const Batch& batch) const;

  std::size_t embedding_parameter_count() const;
  std::size_t dense_parameter_count() const;

 private:
  struct Linear {
    std::uint32_t in = 0, out = 0;
    std::vector<double> w;  // out x in, row-major
    std::vector<double> b;  // out
  };

  void check_batch(const Batch& batch) const;

  ToyModelConfig config_;
  std::vector<EmbeddingTable> tables_;
  std::vector<Linear> trunk_;
  std::vector<Linear> heads_;  // out == 1
  std::uint32_t input_dim_ = 0;
};

}  // namespace emblab
