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
#include <span>
#include <string>
#include <vector>

#include "emblab/embedding.hpp"

namespace emblab {

// ROC-AUC via rank sums with half credit for ties: equals
// P(score_pos > score_neg) + 0.5 * P(tie) over all positive/negative
// pairs. O(n log n). Throws DomainError on single-class input; callers
// evaluating a day skip it and flag the gap.
double roc_auc(std::span<const double> scores,
               std::span<const std::uint8_t> labels);

// Per-day AUC values of one arm for one task. Days must align between the
// arms being compared.
struct AucSeries {
  std::string arm;
  std::vector<std::uint32_t> days;
  std::vector<double> auc;
};

// Cumulative AUC gain in percent:
//   (sum_i treatment_i / sum_i control_i - 1) * 100
// Throws DomainError on empty or misaligned series.
double cumulative_auc_gain(const AucSeries& treatment,
                           const AucSeries& control);

struct GainReport {
  std::string treatment;
  std::string control;
  std::string task;
  double cumulative_pct = 0.0;
  std::vector<std::uint32_t> days;
  std::vector<double> per_day_pct;
};

GainReport make_gain_report(const AucSeries& treatment,
                            const AucSeries& control, const std::string& task);

// Frequency-distribution diagnostics of one table's counters.
struct FreqReport {
  std::uint64_t total = 0;
  double coverage50 = 0.0;  // coverage_fraction at mass 0.5
  double coverage90 = 0.0;
  double coverage99 = 0.0;
  double never_seen_fraction = 0.0;
  // Log-spaced rank-frequency points (1-based rank, count), descending.
  std::vector<std::pair<std::uint64_t, std::uint32_t>> rank_points;
};

FreqReport freq_report(const EmbeddingTable& table);

}  // namespace emblab
