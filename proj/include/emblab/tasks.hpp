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
#include <optional>
#include <string>
#include <vector>

namespace emblab {

// Label byte for an example whose task condition is unmet.
inline constexpr std::uint8_t kLabelUndefined = 255;

// A task label is defined only on examples where the parent task's label
// equals `value` (1 for "given parent positive", 0 for "given parent
// negative").
struct TaskCondition {
  std::string parent;
  std::uint8_t value = 1;

  bool operator==(const TaskCondition&) const = default;
};

// One prediction objective. relative_density is the task's positive-label
// density relative to the densest task: with the densest task's absolute
// positive rate c, a task with relative density rho has absolute density
// rho * c over all examples, so its ratio of positives to the densest
// task's positives is exactly rho.
struct TaskSpec {
  std::string name;
  double relative_density = 1.0;  // in (0, 1]
  std::optional<TaskCondition> condition;
  double loss_weight = 1.0;

  bool operator==(const TaskSpec&) const = default;
};

// Validates names, density ranges, the single densest task, condition
// references and acyclicity. Throws ConfigError; a cycle error names the
// cycle path.
void validate_tasks(const std::vector<TaskSpec>& tasks);

// Indices ordered so every task's condition parent precedes it.
std::vector<std::size_t> topological_order(const std::vector<TaskSpec>& tasks);

std::size_t task_index(const std::vector<TaskSpec>& tasks,
                       const std::string& name);

}  // namespace emblab
