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

#include "emblab/synthgen.hpp"

#include <algorithm>
#include <cmath>

#include "emblab/common.hpp"

namespace emblab {

namespace {

// Stream tags for seed derivation. Arbitrary but fixed forever: changing
// them changes every generated dataset.
constexpr std::uint64_t kTagDay = 0x00D5;
constexpr std::uint64_t kTagHidden = 0x01DE;
constexpr std::uint64_t kTagDriftCompanion = 0x0D1F;
constexpr std::uint64_t kTagTaskWeights = 0x7A5C;
constexpr std::uint64_t kTagCalibration = 0xCA1B;

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

std::vector<double> draw_normals(std::uint64_t seed, std::size_t n) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

}  // namespace

SyntheticGenerator::SyntheticGenerator(DatasetSchema schema)
    : schema_(std::move(schema)) {
  schema_.validate();
  topo_order_ = topological_order(schema_.tasks);

  const std::size_t n_feat = schema_.features.size();
  samplers_.reserve(n_feat);
  hidden_.resize(n_feat);
  if (schema_.drift_per_day != 0.0) drift_companion_.resize(n_feat);
  for (std::size_t f = 0; f < n_feat; ++f) {
    const ZipfIdSpace& space = schema_.features[f];
    samplers_.emplace_back(space.num_ids, space.exponent);
    const std::size_t n = static_cast<std::size_t>(space.num_ids) * kHiddenDim;
    hidden_[f] = draw_normals(derive_seed(space.seed, kTagHidden), n);
    if (schema_.drift_per_day != 0.0)
      drift_companion_[f] =
          draw_normals(derive_seed(space.seed, kTagDriftCompanion), n);
  }

  const std::size_t n_tasks = schema_.tasks.size();
  task_weights_.resize(n_tasks);
  const std::uint64_t wseed = derive_seed(schema_.seed, kTagTaskWeights);
  for (std::size_t t = 0; t < n_tasks; ++t)
    task_weights_[t] = draw_normals(derive_seed(wseed, t), n_feat * kHiddenDim);

  calibrate_biases();
}

double SyntheticGenerator::hidden_component(std::size_t feature,
                                            std::uint32_t id,
                                            std::uint32_t comp,
                                            std::uint32_t day) const {
  const std::size_t idx = static_cast<std::size_t>(id) * kHiddenDim + comp;
  const double h = hidden_[feature][idx];
  if (schema_.drift_per_day == 0.0) return h;
  const double theta = schema_.drift_per_day * static_cast<double>(day);
  return std::cos(theta) * h + std::sin(theta) * drift_companion_[feature][idx];
}

double SyntheticGenerator::logit_unchecked(
    std::size_t task, const std::vector<std::uint32_t>& ids,
    std::uint32_t day) const {
  const std::size_t n_feat = schema_.features.size();
  const std::vector<double>& w = task_weights_[task];
  double acc = 0.0;
  for (std::size_t f = 0; f < n_feat; ++f)
    for (std::uint32_t j = 0; j < kHiddenDim; ++j)
      acc += w[f * kHiddenDim + j] * hidden_component(f, ids[f], j, day);
  return acc / std::sqrt(static_cast<double>(n_feat * kHiddenDim));
}

double SyntheticGenerator::raw_logit(std::size_t task,
                                     const std::vector<std::uint32_t>& ids,
                                     std::uint32_t day) const {
  if (task >= schema_.tasks.size()) throw DomainError("task index out of range");
  if (ids.size() != schema_.features.size())
    throw DomainError("raw_logit: id count does not match feature count");
  for (std::size_t f = 0; f < ids.size(); ++f)
    if (ids[f] >= schema_.features[f].num_ids)
      throw DomainError("raw_logit: id out of range for feature " +
                        schema_.features[f].feature_name);
  return logit_unchecked(task, ids, day);
}

void SyntheticGenerator::calibrate_biases() {
  const std::size_t n_tasks = schema_.tasks.size();
  target_rate_.assign(n_tasks, 0.0);
  bias_.assign(n_tasks, 0.0);

  const double c = schema_.densest_rate;
  const std::uint64_t calib_seed = derive_seed(schema_.seed, kTagCalibration);

  for (std::size_t t : topo_order_) {
    const TaskSpec& spec = schema_.tasks[t];

    // Ancestor chain, root first. required_value[i] is the label the chain
    // ancestor i must produce for the next link (and finally for t) to be
    // defined.
    std::vector<std::size_t> chain;
    std::vector<std::uint8_t> required_value;
    {
      const TaskSpec* cur = &spec;
      while (cur->condition) {
        chain.push_back(task_index(schema_.tasks, cur->condition->parent));
        required_value.push_back(cur->condition->value);
        cur = &schema_.tasks[chain.back()];
      }
      std::reverse(chain.begin(), chain.end());
      std::reverse(required_value.begin(), required_value.end());
    }

    // Monte Carlo over the id distribution; drift rotation preserves the
    // hidden embedding distribution, so day-0 calibration holds for every
    // day.
    Rng rng(derive_seed(calib_seed, t));
    std::vector<double> domain_logits;  // bias-free logit, noise included
    constexpr std::uint64_t kDomainTarget = 120000;
    constexpr std::uint64_t kTotalCap = 12000000;
    constexpr std::uint64_t kDomainMin = 10000;
    std::uint64_t total = 0;
    std::vector<std::uint32_t> ids(schema_.features.size());
    domain_logits.reserve(kDomainTarget);
    while (domain_logits.size() < kDomainTarget && total < kTotalCap) {
      ++total;
      for (std::size_t f = 0; f < ids.size(); ++f)
        ids[f] = samplers_[f].sample(rng);

      bool in_domain = true;
      for (std::size_t i = 0; i < chain.size(); ++i) {
        const std::size_t a = chain[i];
        double z = schema_.signal_scale * logit_unchecked(a, ids, 0) + bias_[a];
        if (schema_.logit_noise > 0.0) z += schema_.logit_noise * rng.normal();
        const std::uint8_t label = rng.uniform() < sigmoid(z) ? 1 : 0;
        if (label != required_value[i]) {
          in_domain = false;
          break;
        }
      }
      if (!in_domain) continue;

      double v = schema_.signal_scale * logit_unchecked(t, ids, 0);
      if (schema_.logit_noise > 0.0) v += schema_.logit_noise * rng.normal();
      domain_logits.push_back(v);
    }

    if (domain_logits.size() < kDomainMin)
      throw CalibrationError(
          "task '" + spec.name + "': condition domain too rare to calibrate (" +
          std::to_string(domain_logits.size()) + " of " +
          std::to_string(total) + " samples)");

    double target = spec.relative_density * c;
    if (!chain.empty()) {
      const double domain_prob = static_cast<double>(domain_logits.size()) /
                                 static_cast<double>(total);
      target /= domain_prob;
    }
    if (!(target > 0.0 && target <= 0.95))
      throw CalibrationError("task '" + spec.name +
                             "': derived in-domain rate " +
                             std::to_string(target) + " is not in (0, 0.95]");
    target_rate_[t] = target;

    // mean(sigmoid(v + b)) is strictly increasing in b.
    double lo = -40.0, hi = 40.0;
    for (int iter = 0; iter < 200 && hi - lo > 1e-13; ++iter) {
      const double mid = 0.5 * (lo + hi);
      double mean = 0.0;
      for (double v : domain_logits) mean += sigmoid(v + mid);
      mean /= static_cast<double>(domain_logits.size());
      if (mean < target)
        lo = mid;
      else
        hi = mid;
    }
    bias_[t] = 0.5 * (lo + hi);
  }
}

DayPartition SyntheticGenerator::sample_day(std::uint64_t n_examples,
                                            std::uint32_t day) const {
  if (n_examples == 0) throw DomainError("sample_day: n_examples must be > 0");

  const std::size_t n_feat = schema_.features.size();
  const std::size_t n_tasks = schema_.tasks.size();

  DayPartition out;
  out.day_index = day;
  out.num_examples = n_examples;
  out.ids.assign(n_feat, std::vector<std::uint32_t>(n_examples));
  out.continuous.resize(n_examples * schema_.continuous_dim);
  out.labels.assign(n_tasks, std::vector<std::uint8_t>(n_examples));

  Rng rng(derive_seed(derive_seed(schema_.seed, kTagDay), day));
  std::vector<std::uint32_t> ids(n_feat);
  std::vector<std::uint8_t> labels(n_tasks);

  for (std::uint64_t e = 0; e < n_examples; ++e) {
    for (std::size_t f = 0; f < n_feat; ++f) {
      ids[f] = samplers_[f].sample(rng);
      out.ids[f][e] = ids[f];
    }
    for (std::uint32_t k = 0; k < schema_.continuous_dim; ++k)
      out.continuous[e * schema_.continuous_dim + k] =
          static_cast<float>(rng.normal());

    for (std::size_t t : topo_order_) {
      const TaskSpec& spec = schema_.tasks[t];
      if (spec.condition) {
        const std::size_t p = task_index(schema_.tasks, spec.condition->parent);
        if (labels[p] != spec.condition->value) {
          labels[t] = kLabelUndefined;
          continue;
        }
      }
      double z = schema_.signal_scale * logit_unchecked(t, ids, day) + bias_[t];
      if (schema_.logit_noise > 0.0) z += schema_.logit_noise * rng.normal();
      labels[t] = rng.uniform() < sigmoid(z) ? 1 : 0;
    }
    for (std::size_t t = 0; t < n_tasks; ++t) out.labels[t][e] = labels[t];
  }
  return out;
}

SyntheticDataset SyntheticGenerator::generate() const {
  SyntheticDataset ds;
  ds.schema = schema_;
  ds.days.reserve(schema_.days);
  for (std::uint32_t d = 0; d < schema_.days; ++d)
    ds.days.push_back(sample_day(schema_.examples_per_day, d));
  return ds;
}

std::vector<TaskDensityStat> SyntheticGenerator::density_summary(
    const SyntheticDataset& ds) const {
  std::vector<TaskDensityStat> stats;
  for (std::size_t t = 0; t < schema_.tasks.size(); ++t) {
    TaskDensityStat s;
    s.task = schema_.tasks[t].name;
    for (const DayPartition& day : ds.days) {
      for (std::uint64_t e = 0; e < day.num_examples; ++e) {
        const std::uint8_t label = day.labels[t][e];
        if (label == kLabelUndefined) continue;
        ++s.defined;
        s.positives += label;
      }
    }
    s.target = target_rate_[t];
    if (s.defined > 0) {
      s.observed = static_cast<double>(s.positives) /
                   static_cast<double>(s.defined);
      s.bound = 3.0 * std::sqrt(s.target * (1.0 - s.target) /
                                static_cast<double>(s.defined));
      s.within = std::abs(s.observed - s.target) <= s.bound;
    }
    stats.push_back(s);
  }
  return stats;
}

DayPartition sample_day(const std::vector<ZipfIdSpace>& spaces,
                        const std::vector<TaskSpec>& tasks,
                        std::uint64_t n_examples, std::uint32_t day,
                        std::uint64_t seed) {
  if (n_examples == 0) throw DomainError("sample_day: n_examples must be > 0");
  DatasetSchema schema;
  schema.features = spaces;
  schema.tasks = tasks;
  schema.days = day + 1;
  schema.examples_per_day = n_examples;
  schema.seed = seed;
  return SyntheticGenerator(std::move(schema)).sample_day(n_examples, day);
}

}  // namespace emblab
