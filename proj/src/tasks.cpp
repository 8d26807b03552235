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

#include "emblab/tasks.hpp"

#include <cctype>
#include <map>
#include <set>

#include "emblab/common.hpp"

namespace emblab {

namespace {

bool valid_identifier(const std::string& s) {
  if (s.empty()) return false;
  if (!std::isalpha(static_cast<unsigned char>(s[0]))) return false;
  for (char c : s)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_') return false;
  return true;
}

}  // namespace

std::size_t task_index(const std::vector<TaskSpec>& tasks,
                       const std::string& name) {
  for (std::size_t i = 0; i < tasks.size(); ++i)
    if (tasks[i].name == name) return i;
  throw ConfigError("unknown task '" + name + "'");
}

void validate_tasks(const std::vector<TaskSpec>& tasks) {
  if (tasks.empty()) throw ConfigError("at least one task is required");

  std::set<std::string> names;
  std::size_t densest = 0;
  for (const TaskSpec& t : tasks) {
    if (!valid_identifier(t.name))
      throw ConfigError("task name '" + t.name + "' is not an identifier");
    if (!names.insert(t.name).second)
      throw ConfigError("duplicate task name '" + t.name + "'");
    if (!(t.relative_density > 0.0 && t.relative_density <= 1.0))
      throw ConfigError("task '" + t.name +
                        "': relative_density must be in (0, 1]");
    if (t.relative_density == 1.0) ++densest;
    if (!(t.loss_weight > 0.0))
      throw ConfigError("task '" + t.name + "': loss_weight must be > 0");
  }
  if (densest != 1)
    throw ConfigError(
        "exactly one task must have relative_density = 1.0 (found " +
        std::to_string(densest) + ")");

  for (const TaskSpec& t : tasks) {
    if (!t.condition) continue;
    if (!names.count(t.condition->parent))
      throw ConfigError("task '" + t.name + "': condition parent '" +
                        t.condition->parent + "' does not exist");
    if (t.condition->value != 0 && t.condition->value != 1)
      throw ConfigError("task '" + t.name + "': condition value must be 0 or 1");
  }

  // Each task has at most one parent, so any cycle is a simple loop along
  // the parent chain.
  for (const TaskSpec& t : tasks) {
    std::vector<std::string> path = {t.name};
    std::set<std::string> seen = {t.name};
    const TaskSpec* cur = &t;
    while (cur->condition) {
      const std::string& parent = cur->condition->parent;
      path.push_back(parent);
      if (!seen.insert(parent).second) {
        std::string msg = "task condition cycle: ";
        for (std::size_t i = 0; i < path.size(); ++i) {
          if (i) msg += " -> ";
          msg += path[i];
        }
        throw ConfigError(msg);
      }
      cur = &tasks[task_index(tasks, parent)];
    }
  }
}

std::vector<std::size_t> topological_order(const std::vector<TaskSpec>& tasks) {
  validate_tasks(tasks);
  std::vector<std::size_t> order;
  std::vector<bool> emitted(tasks.size(), false);
  while (order.size() < tasks.size()) {
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      if (emitted[i]) continue;
      const auto& cond = tasks[i].condition;
      if (!cond || emitted[task_index(tasks, cond->parent)]) {
        order.push_back(i);
        emitted[i] = true;
      }
    }
  }
  return order;
}

}  // namespace emblab
