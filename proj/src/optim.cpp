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

#include "emblab/optim.hpp"

#include <algorithm>
#include <cmath>

#include "emblab/common.hpp"
#include "emblab/rng.hpp"

namespace emblab {

namespace {

constexpr std::uint64_t kTagMedaTable = 0x3EDA;

bool all_finite(const std::vector<double>& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace

std::vector<double> fal_alpha(const std::vector<std::uint32_t>& freq,
                              double log_freq_max, FalMode mode) {
  if (mode == FalMode::kOff)
    throw DomainError("fal_alpha called with mode off");
  if (freq.empty()) throw DomainError("fal_alpha: empty frequency vector");
  const std::uint32_t max_count =
      *std::max_element(freq.begin(), freq.end());
  if (max_count == 0)
    throw DomainError(
        "fal_alpha: no row observed yet; accumulate batch frequencies "
        "before computing scales");
  const double recomputed = std::log1p(static_cast<double>(max_count));
  if (std::abs(recomputed - log_freq_max) >
      1e-12 * std::max(1.0, recomputed))
    throw std::logic_error("fal_alpha: log_freq_max inconsistent with freq");

  std::vector<double> alpha(freq.size());
  for (std::size_t i = 0; i < freq.size(); ++i)
    alpha[i] = fal_alpha_row(freq[i], max_count, log_freq_max, mode);
  return alpha;
}

double fal_alpha_row(std::uint32_t count, std::uint32_t freq_max,
                     double log_freq_max, FalMode mode) {
  switch (mode) {
    case FalMode::kLog:
      return std::log1p(static_cast<double>(count)) / log_freq_max;
    case FalMode::kLinear:
      return static_cast<double>(count) / static_cast<double>(freq_max);
    case FalMode::kOff:
      break;
  }
  throw DomainError("fal_alpha_row called with mode off");
}

void fal_apply(
    std::vector<std::pair<std::uint32_t, std::vector<double>>>& rows,
    const std::vector<double>& alpha) {
  for (auto& [row, values] : rows) {
    if (row >= alpha.size())
      throw std::logic_error("fal_apply: row " + std::to_string(row) +
                             " has no alpha entry");
    const double a = alpha[row];
    for (double& v : values) v *= a;
  }
}

Optimizer::Optimizer(const ToyModel& model, AdamConfig adam,
                     SparseOptimizerConfig sparse, FalConfig fal)
    : adam_(adam), sparse_(sparse), fal_(std::move(fal)) {
  if (!(adam_.base_lr > 0.0)) throw ConfigError("base_lr must be positive");
  if (!(adam_.beta1 > 0.0 && adam_.beta1 < 1.0) ||
      !(adam_.beta2 > 0.0 && adam_.beta2 < 1.0))
    throw ConfigError("adam betas must lie in (0, 1)");
  if (!(adam_.epsilon > 0.0)) throw ConfigError("adam epsilon must be positive");
  if (!(sparse_.embedding_lr_multiplier > 0.0))
    throw ConfigError("embedding_lr_multiplier must be positive");
  if (adam_.clip_norm && !(*adam_.clip_norm > 0.0))
    throw ConfigError("clip_norm must be positive when set");

  const auto blocks = model.dense_blocks();
  dense_.m.resize(blocks.size());
  dense_.v.resize(blocks.size());
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    dense_.m[i].assign(blocks[i]->size(), 0.0);
    dense_.v[i].assign(blocks[i]->size(), 0.0);
  }

  tables_.resize(model.tables().size());
  for (std::size_t i = 0; i < tables_.size(); ++i) {
    const std::string& name = model.tables()[i].spec().feature_name;
    tables_[i].fal_enabled =
        std::find(fal_.excluded_tables.begin(), fal_.excluded_tables.end(),
                  name) == fal_.excluded_tables.end();
  }
}

std::pair<std::vector<double>, std::vector<double>> Optimizer::row_moments(
    std::size_t table, std::uint32_t row) const {
  const auto& rows = tables_.at(table).rows;
  const auto it = rows.find(row);
  if (it == rows.end()) throw DomainError("row has no tracked moments");
  return {it->second.m, it->second.v};
}

void Optimizer::clear_table_moments(std::size_t table) {
  TableGroup& group = tables_.at(table);
  group.rows.clear();
  group.step_count = 0;
}

bool Optimizer::step(ToyModel& model, const Gradients& grads) {
  auto blocks = model.dense_blocks();
  if (grads.dense.size() != blocks.size() ||
      grads.tables.size() != tables_.size())
    throw std::logic_error("gradient set does not match optimizer groups");

  for (const auto& g : grads.dense)
    if (!all_finite(g)) {
      ++rejected_;
      return false;
    }
  for (const auto& table : grads.tables)
    for (const auto& [row, g] : table)
      if (!all_finite(g)) {
        ++rejected_;
        return false;
      }

  // Optional global-norm clip, as one factor across all groups.
  double clip_scale = 1.0;
  if (adam_.clip_norm) {
    double sq = 0.0;
    for (const auto& g : grads.dense)
      for (double x : g) sq += x * x;
    for (const auto& table : grads.tables)
      for (const auto& [row, g] : table)
        for (double x : g) sq += x * x;
    const double norm = std::sqrt(sq);
    if (norm > *adam_.clip_norm) clip_scale = *adam_.clip_norm / norm;
  }

  // Dense group at the base learning rate.
  {
    dense_.step_count += 1;
    const double t = static_cast<double>(dense_.step_count);
    const double bc1 = 1.0 - std::pow(adam_.beta1, t);
    const double bc2 = 1.0 - std::pow(adam_.beta2, t);
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      std::vector<double>& p = *blocks[i];
      std::vector<double>& m = dense_.m[i];
      std::vector<double>& v = dense_.v[i];
      if (grads.dense[i].size() != p.size())
        throw std::logic_error("dense gradient block shape mismatch");
      for (std::size_t j = 0; j < p.size(); ++j) {
        const double g = grads.dense[i][j] * clip_scale;
        m[j] = adam_.beta1 * m[j] + (1.0 - adam_.beta1) * g;
        v[j] = adam_.beta2 * v[j] + (1.0 - adam_.beta2) * g * g;
        const double mhat = m[j] / bc1;
        const double vhat = v[j] / bc2;
        p[j] -= adam_.base_lr * mhat / (std::sqrt(vhat) + adam_.epsilon);
      }
    }
  }

  // Embedding table groups at the layer-specific learning rate.
  const double table_lr = adam_.base_lr * sparse_.embedding_lr_multiplier;
  for (std::size_t f = 0; f < tables_.size(); ++f) {
    TableGroup& group = tables_[f];
    EmbeddingTable& table = model.tables()[f];
    const std::uint32_t dim = table.dim();

    const bool fal_active =
        fal_.mode != FalMode::kOff && group.fal_enabled;
    double log_freq_max = 0.0;
    if (fal_active) {
      if (table.accumulation_ticks() <= group.seen_accum_ticks)
        throw std::logic_error(
            "FAL ordering violation: batch frequencies for table '" +
            table.spec().feature_name +
            "' were not accumulated before the optimizer step");
      if (table.freq_max() == 0)
        throw DomainError(
            "FAL requires at least one observed row before scaling");
      log_freq_max = table.log_freq_max();
    }
    group.seen_accum_ticks = table.accumulation_ticks();

    group.step_count += 1;
    const double t = static_cast<double>(group.step_count);
    const double bc1 = 1.0 - std::pow(adam_.beta1, t);
    const double bc2 = 1.0 - std::pow(adam_.beta2, t);

    auto update_row = [&](std::uint32_t r, const double* g_or_null) {
      RowMoments& mom = group.rows[r];
      if (mom.m.empty()) {
        mom.m.assign(dim, 0.0);
        mom.v.assign(dim, 0.0);
      }
      double alpha = 1.0;
      if (fal_active)
        alpha = fal_alpha_row(table.freq()[r], table.freq_max(), log_freq_max,
                              fal_.mode);
      auto w = table.mutable_row(r);
      for (std::uint32_t k = 0; k < dim; ++k) {
        double g = g_or_null ? g_or_null[k] * clip_scale : 0.0;
        if (fal_active && fal_.application == FalApplication::kScaleGradient)
          g *= alpha;
        mom.m[k] = adam_.beta1 * mom.m[k] + (1.0 - adam_.beta1) * g;
        mom.v[k] = adam_.beta2 * mom.v[k] + (1.0 - adam_.beta2) * g * g;
        const double mhat = mom.m[k] / bc1;
        const double vhat = mom.v[k] / bc2;
        double delta = table_lr * mhat / (std::sqrt(vhat) + adam_.epsilon);
        if (fal_active && fal_.application == FalApplication::kScaleUpdate)
          delta *= alpha;
        w[k] -= delta;
      }
    };

    if (lazy_) {
      for (const auto& [r, g] : grads.tables[f]) update_row(r, g.data());
    } else {
      // Dense sparse-group mode: every tracked row decays each step.
      // Gradient rows first, then remaining tracked rows with g = 0.
      std::vector<std::uint32_t> tracked;
      tracked.reserve(group.rows.size());
      for (const auto& [r, mom] : group.rows) tracked.push_back(r);
      std::sort(tracked.begin(), tracked.end());
      for (const auto& [r, g] : grads.tables[f]) update_row(r, g.data());
      for (std::uint32_t r : tracked) {
        const auto it = std::lower_bound(
            grads.tables[f].begin(), grads.tables[f].end(), r,
            [](const auto& entry, std::uint32_t key) {
              return entry.first < key;
            });
        if (it == grads.tables[f].end() || it->first != r)
          update_row(r, nullptr);
      }
    }
  }
  return true;
}

std::uint64_t meda_table_seed(std::uint64_t seed, std::size_t table_index) {
  return derive_seed(derive_seed(seed, kTagMedaTable), table_index);
}

void meda_reinit(ToyModel& model, Optimizer& optimizer, std::uint64_t seed) {
  for (std::size_t i = 0; i < model.tables().size(); ++i) {
    model.tables()[i].reinitialize(meda_table_seed(seed, i));
    optimizer.clear_table_moments(i);
  }
}

}  // namespace emblab
