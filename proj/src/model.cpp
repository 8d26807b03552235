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

#include "emblab/model.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "emblab/common.hpp"
#include "emblab/rng.hpp"

namespace emblab {

namespace {

constexpr std::uint64_t kTagTableInit = 0x7AB1;
constexpr std::uint64_t kTagDenseInit = 0xDE45;

double stable_sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

void ToyModelConfig::validate() const {
  if (tables.empty()) throw ConfigError("model needs at least one table");
  for (const auto& t : tables) {
    t.hash.validate();
    if (t.dim == 0) throw ConfigError("embedding dimension must be > 0");
  }
  if (task_names.empty()) throw ConfigError("model needs at least one task");
  if (loss_weights.size() != task_names.size())
    throw ConfigError("loss_weights count must match task count");
  for (double w : loss_weights)
    if (!(w > 0.0)) throw ConfigError("loss weights must be positive");
  for (std::uint32_t w : trunk_layers)
    if (w == 0) throw ConfigError("trunk layer width must be > 0");
}

std::uint32_t ToyModelConfig::input_dim() const {
  std::uint32_t d = continuous_dim;
  for (const auto& t : tables) d += t.dim;
  return d;
}

LossResult masked_bce_loss(
    const Scores& scores, const std::vector<std::vector<std::uint8_t>>& labels,
    const std::vector<double>& loss_weights) {
  const std::size_t n_tasks = scores.prob.size();
  if (labels.size() != n_tasks || loss_weights.size() != n_tasks)
    throw DomainError("loss: task count mismatch");

  LossResult out;
  out.per_task.assign(n_tasks, 0.0);
  out.defined_count.assign(n_tasks, 0);
  out.has_defined.assign(n_tasks, 0);
  for (std::size_t t = 0; t < n_tasks; ++t) {
    if (labels[t].size() != scores.prob[t].size())
      throw DomainError("loss: example count mismatch");
    double acc = 0.0;
    std::uint64_t n = 0;
    for (std::size_t e = 0; e < labels[t].size(); ++e) {
      const std::uint8_t y = labels[t][e];
      if (y == kLabelUndefined) continue;
      const double p = scores.prob[t][e];
      acc -= y ? std::log(p) : std::log(1.0 - p);
      ++n;
    }
    out.defined_count[t] = n;
    if (n > 0) {
      out.has_defined[t] = 1;
      out.per_task[t] = acc / static_cast<double>(n);
      out.total += loss_weights[t] * out.per_task[t];
    }
  }
  return out;
}

ToyModel::ToyModel(ToyModelConfig config) : config_(std::move(config)) {
  config_.validate();
  input_dim_ = config_.input_dim();

  for (std::size_t i = 0; i < config_.tables.size(); ++i)
    tables_.emplace_back(
        config_.tables[i].hash, config_.tables[i].dim,
        derive_seed(derive_seed(config_.init_seed, kTagTableInit), i));

  const std::uint64_t dense_seed = derive_seed(config_.init_seed, kTagDenseInit);
  std::size_t layer_id = 0;
  auto make_linear = [&](std::uint32_t in, std::uint32_t out) {
    Linear l;
    l.in = in;
    l.out = out;
    l.w.resize(static_cast<std::size_t>(in) * out);
    l.b.assign(out, 0.0);
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    Rng rng(derive_seed(dense_seed, layer_id++));
    for (double& w : l.w) w = rng.uniform(-bound, bound);
    return l;
  };

  std::uint32_t width = input_dim_;
  for (std::uint32_t w : config_.trunk_layers) {
    trunk_.push_back(make_linear(width, w));
    width = w;
  }
  for (std::size_t t = 0; t < config_.task_names.size(); ++t)
    heads_.push_back(make_linear(width, 1));
}

std::vector<std::string> ToyModel::dense_block_names() const {
  std::vector<std::string> names;
  for (std::size_t l = 0; l < trunk_.size(); ++l) {
    names.push_back("trunk" + std::to_string(l) + ".w");
    names.push_back("trunk" + std::to_string(l) + ".b");
  }
  for (std::size_t t = 0; t < heads_.size(); ++t) {
    names.push_back("head_" + config_.task_names[t] + ".w");
    names.push_back("head_" + config_.task_names[t] + ".b");
  }
  return names;
}

std::vector<std::vector<double>*> ToyModel::dense_blocks() {
  std::vector<std::vector<double>*> blocks;
  for (auto& l : trunk_) {
    blocks.push_back(&l.w);
    blocks.push_back(&l.b);
  }
  for (auto& l : heads_) {
    blocks.push_back(&l.w);
    blocks.push_back(&l.b);
  }
  return blocks;
}

std::vector<const std::vector<double>*> ToyModel::dense_blocks() const {
  std::vector<const std::vector<double>*> blocks;
  for (const auto& l : trunk_) {
    blocks.push_back(&l.w);
    blocks.push_back(&l.b);
  }
  for (const auto& l : heads_) {
    blocks.push_back(&l.w);
    blocks.push_back(&l.b);
  }
  return blocks;
}

void ToyModel::check_batch(const Batch& batch) const {
  if (batch.rows.size() != tables_.size())
    throw DomainError("batch table count does not match model config");
  for (std::size_t f = 0; f < batch.rows.size(); ++f) {
    if (batch.rows[f].size() != batch.size)
      throw DomainError("batch row vector size mismatch");
    const std::uint32_t n = tables_[f].rows();
    for (std::uint32_t r : batch.rows[f])
      if (r >= n) throw DomainError("batch row index out of table range");
  }
  if (batch.continuous.size() !=
      batch.size * static_cast<std::size_t>(config_.continuous_dim))
    throw DomainError("batch continuous size does not match model config");
  if (batch.labels.size() != config_.task_names.size())
    throw DomainError("batch task count does not match model config");
  for (const auto& l : batch.labels)
    if (l.size() != batch.size) throw DomainError("batch label size mismatch");
}

std::pair<Scores, ForwardRecord> ToyModel::forward(const Batch& batch) const {
  check_batch(batch);
  const std::size_t B = batch.size;
  const std::size_t n_tasks = heads_.size();
  const std::size_t L = trunk_.size();

  ForwardRecord rec;
  rec.batch_size = B;
  rec.rows = batch.rows;
  rec.activations.resize(L + 1);
  rec.activations[0].resize(B * input_dim_);

  // a_0: concatenated embedding rows then continuous features.
  for (std::size_t e = 0; e < B; ++e) {
    double* dst = rec.activations[0].data() + e * input_dim_;
    for (std::size_t f = 0; f < tables_.size(); ++f) {
      const auto row = tables_[f].row(batch.rows[f][e]);
      std::copy(row.begin(), row.end(), dst);
      dst += row.size();
    }
    for (std::uint32_t k = 0; k < config_.continuous_dim; ++k)
      *dst++ = batch.continuous[e * config_.continuous_dim + k];
  }

  for (std::size_t l = 0; l < L; ++l) {
    const Linear& lin = trunk_[l];
    rec.activations[l + 1].resize(B * lin.out);
    const std::vector<double>& src = rec.activations[l];
    std::vector<double>& dst = rec.activations[l + 1];
    for (std::size_t e = 0; e < B; ++e) {
      const double* x = src.data() + e * lin.in;
      double* y = dst.data() + e * lin.out;
      for (std::uint32_t o = 0; o < lin.out; ++o) {
        const double* wr = lin.w.data() + static_cast<std::size_t>(o) * lin.in;
        double acc = lin.b[o];
        for (std::uint32_t i = 0; i < lin.in; ++i) acc += wr[i] * x[i];
        y[o] = acc > 0.0 ? acc : 0.0;  // ReLU
      }
    }
  }

  rec.prob.assign(n_tasks, std::vector<double>(B));
  rec.clamped.assign(n_tasks, std::vector<std::uint8_t>(B, 0));
  const std::vector<double>& top = rec.activations[L];
  const std::size_t top_w = L == 0 ? input_dim_ : trunk_.back().out;
  for (std::size_t t = 0; t < n_tasks; ++t) {
    const Linear& head = heads_[t];
    for (std::size_t e = 0; e < B; ++e) {
      const double* x = top.data() + e * top_w;
      double z = head.b[0];
      for (std::uint32_t i = 0; i < head.in; ++i) z += head.w[i] * x[i];
      double p = stable_sigmoid(z);
      if (p < kProbEpsilon) {
        p = kProbEpsilon;
        rec.clamped[t][e] = 1;
      } else if (p > 1.0 - kProbEpsilon) {
        p = 1.0 - kProbEpsilon;
        rec.clamped[t][e] = 1;
      }
      rec.prob[t][e] = p;
    }
  }

  Scores scores;
  scores.prob = rec.prob;
  return {std::move(scores), std::move(rec)};
}

Gradients ToyModel::backward(const ForwardRecord& rec,
                             const Batch& batch) const {
  check_batch(batch);
  if (rec.batch_size != batch.size || rec.rows != batch.rows)
    throw DomainError("forward record does not match batch");

  const std::size_t B = batch.size;
  const std::size_t n_tasks = heads_.size();
  const std::size_t L = trunk_.size();
  const std::size_t top_w = L == 0 ? input_dim_ : trunk_.back().out;

  // Per-task defined counts define the 1/n_t factor of the mean.
  std::vector<double> inv_defined(n_tasks, 0.0);
  for (std::size_t t = 0; t < n_tasks; ++t) {
    std::uint64_t n = 0;
    for (std::size_t e = 0; e < B; ++e)
      if (batch.labels[t][e] != kLabelUndefined) ++n;
    if (n > 0) inv_defined[t] = 1.0 / static_cast<double>(n);
  }

  Gradients grads;
  grads.dense.resize(2 * (L + n_tasks));
  for (std::size_t l = 0; l < L; ++l) {
    grads.dense[2 * l].assign(trunk_[l].w.size(), 0.0);
    grads.dense[2 * l + 1].assign(trunk_[l].b.size(), 0.0);
  }
  for (std::size_t t = 0; t < n_tasks; ++t) {
    grads.dense[2 * (L + t)].assign(heads_[t].w.size(), 0.0);
    grads.dense[2 * (L + t) + 1].assign(heads_[t].b.size(), 0.0);
  }

  std::vector<std::unordered_map<std::uint32_t, std::vector<double>>> row_acc(
      tables_.size());

  std::vector<double> delta;
  std::vector<double> delta_prev;
  for (std::size_t e = 0; e < B; ++e) {
    const double* top = rec.activations[L].data() + e * top_w;

    // dL/d a_L accumulated over heads; head parameter grads on the way.
    delta.assign(top_w, 0.0);
    for (std::size_t t = 0; t < n_tasks; ++t) {
      const std::uint8_t y = batch.labels[t][e];
      if (y == kLabelUndefined) continue;
      double dz = 0.0;
      if (!rec.clamped[t][e])
        dz = config_.loss_weights[t] * inv_defined[t] *
             (rec.prob[t][e] - static_cast<double>(y));
      if (dz == 0.0) continue;
      const Linear& head = heads_[t];
      std::vector<double>& gw = grads.dense[2 * (L + t)];
      for (std::uint32_t i = 0; i < head.in; ++i) {
        gw[i] += dz * top[i];
        delta[i] += dz * head.w[i];
      }
      grads.dense[2 * (L + t) + 1][0] += dz;
    }

    // Trunk, last layer to first. delta holds dL/d a_l (post-ReLU).
    for (std::size_t l = L; l-- > 0;) {
      const Linear& lin = trunk_[l];
      const double* a_out = rec.activations[l + 1].data() + e * lin.out;
      const double* a_in = rec.activations[l].data() + e * lin.in;
      delta_prev.assign(lin.in, 0.0);
      std::vector<double>& gw = grads.dense[2 * l];
      std::vector<double>& gb = grads.dense[2 * l + 1];
      for (std::uint32_t o = 0; o < lin.out; ++o) {
        if (a_out[o] <= 0.0) continue;  // ReLU gate
        const double dz = delta[o];
        if (dz == 0.0) continue;
        const double* wr = lin.w.data() + static_cast<std::size_t>(o) * lin.in;
        double* gwr = gw.data() + static_cast<std::size_t>(o) * lin.in;
        for (std::uint32_t i = 0; i < lin.in; ++i) {
          gwr[i] += dz * a_in[i];
          delta_prev[i] += dz * wr[i];
        }
        gb[o] += dz;
      }
      delta.swap(delta_prev);
    }

    // Split dL/d a_0 into per-table row gradients; continuous inputs take
    // no gradient.
    std::size_t offset = 0;
    for (std::size_t f = 0; f < tables_.size(); ++f) {
      const std::uint32_t d = tables_[f].dim();
      auto& slot = row_acc[f][batch.rows[f][e]];
      if (slot.empty()) slot.assign(d, 0.0);
      for (std::uint32_t k = 0; k < d; ++k) slot[k] += delta[offset + k];
      offset += d;
    }
  }

  grads.tables.resize(tables_.size());
  for (std::size_t f = 0; f < tables_.size(); ++f) {
    auto& rows = grads.tables[f];
    rows.reserve(row_acc[f].size());
    for (auto& [r, g] : row_acc[f]) rows.emplace_back(r, std::move(g));
    std::sort(rows.begin(), rows.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
  }
  return grads;
}

std::size_t ToyModel::embedding_parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tables_)
    n += static_cast<std::size_t>(t.rows()) * t.dim();
  return n;
}

std::size_t ToyModel::dense_parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : trunk_) n += l.w.size() + l.b.size();
  for (const auto& l : heads_) n += l.w.size() + l.b.size();
  return n;
}

}  // namespace emblab
