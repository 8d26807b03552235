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

#include "emblab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "emblab/common.hpp"
#include "emblab/zipf.hpp"

namespace emblab {

double roc_auc(std::span<const double> scores,
               std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size())
    throw DomainError("roc_auc: score/label size mismatch");
  const std::size_t n = scores.size();
  std::size_t n_pos = 0;
  for (std::uint8_t y : labels) {
    if (y != 0 && y != 1) throw DomainError("roc_auc: labels must be binary");
    n_pos += y;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0)
    throw DomainError("roc_auc undefined: single-class input");

  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    return scores[a] < scores[b];
  });

  // Average ranks within tie groups; sum the positive ranks.
  double pos_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // 1-based
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]]) pos_rank_sum += avg_rank;
    i = j;
  }

  const double np = static_cast<double>(n_pos);
  const double nn = static_cast<double>(n_neg);
  return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

double cumulative_auc_gain(const AucSeries& treatment,
                           const AucSeries& control) {
  if (treatment.days.empty() || control.days.empty())
    throw DomainError("cumulative_auc_gain: empty series");
  if (treatment.days != control.days)
    throw DomainError("cumulative_auc_gain: day misalignment between arms '" +
                      treatment.arm + "' and '" + control.arm + "'");
  if (treatment.auc.size() != treatment.days.size() ||
      control.auc.size() != control.days.size())
    throw DomainError("cumulative_auc_gain: ragged series");

  double t_sum = 0.0, c_sum = 0.0;
  for (double a : treatment.auc) t_sum += a;
  for (double a : control.auc) c_sum += a;
  if (!(c_sum > 0.0)) throw DomainError("cumulative_auc_gain: control sum <= 0");
  return (t_sum / c_sum - 1.0) * 100.0;
}

GainReport make_gain_report(const AucSeries& treatment,
                            const AucSeries& control,
                            const std::string& task) {
  GainReport report;
  report.treatment = treatment.arm;
  report.control = control.arm;
  report.task = task;
  report.cumulative_pct = cumulative_auc_gain(treatment, control);
  report.days = treatment.days;
  report.per_day_pct.reserve(treatment.auc.size());
  for (std::size_t i = 0; i < treatment.auc.size(); ++i)
    report.per_day_pct.push_back(
        (treatment.auc[i] / control.auc[i] - 1.0) * 100.0);
  return report;
}

FreqReport freq_report(const EmbeddingTable& table) {
  const auto& freq = table.freq();
  std::vector<std::uint64_t> counts(freq.begin(), freq.end());

  FreqReport report;
  std::uint64_t never = 0;
  for (std::uint64_t c : counts) {
    report.total += c;
    if (c == 0) ++never;
  }
  if (report.total == 0)
    throw DomainError("freq_report: table has no observed frequencies");
  report.never_seen_fraction =
      static_cast<double>(never) / static_cast<double>(counts.size());
  report.coverage50 = coverage_fraction(counts, 0.5);
  report.coverage90 = coverage_fraction(counts, 0.9);
  report.coverage99 = coverage_fraction(counts, 0.99);

  std::vector<std::uint32_t> sorted(freq.begin(), freq.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  // Log-spaced ranks keep the report small on large tables while still
  // tracing the full tail.
  std::uint64_t rank = 1;
  while (rank <= sorted.size()) {
    report.rank_points.emplace_back(rank, sorted[rank - 1]);
    const auto next = static_cast<std::uint64_t>(
        std::ceil(static_cast<double>(rank) * 1.25));
    rank = std::max(rank + 1, next);
  }
  if (report.rank_points.back().first != sorted.size())
    report.rank_points.emplace_back(sorted.size(), sorted.back());
  return report;
}

}  // namespace emblab
