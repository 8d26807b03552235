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

#include "emblab/zipf.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "emblab/common.hpp"

namespace emblab {

void ZipfIdSpace::validate() const {
  if (feature_name.empty()) throw ConfigError("feature name must be nonempty");
  if (num_ids == 0)
    throw ConfigError("feature '" + feature_name + "': num_ids must be > 0");
  if (!(exponent > 0.0) || !std::isfinite(exponent))
    throw ConfigError("feature '" + feature_name +
                      "': zipf exponent must be positive and finite");
}

ZipfSampler::ZipfSampler(std::uint32_t num_ids, double exponent) {
  if (num_ids == 0) throw DomainError("zipf sampler needs num_ids > 0");
  if (!(exponent > 0.0)) throw DomainError("zipf exponent must be positive");
  cdf_.resize(num_ids);
  double acc = 0.0;
  for (std::uint32_t r = 1; r <= num_ids; ++r) {
    acc += std::pow(static_cast<double>(r), -exponent);
    cdf_[r - 1] = acc;
  }
  const double total = acc;
  for (double& c : cdf_) c /= total;
  cdf_.back() = 1.0;
}

std::uint32_t ZipfSampler::sample(Rng& rng) const {
  const double u = rng.uniform();
  const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
  const auto idx = static_cast<std::size_t>(it - cdf_.begin());
  return static_cast<std::uint32_t>(std::min(idx, cdf_.size() - 1));
}

double ZipfSampler::rank_probability(std::uint32_t rank) const {
  if (rank < 1 || rank > cdf_.size())
    throw DomainError("rank out of range");
  return rank == 1 ? cdf_[0] : cdf_[rank - 1] - cdf_[rank - 2];
}

double ZipfSampler::top_mass(std::uint32_t k) const {
  if (k == 0) return 0.0;
  if (k > cdf_.size()) throw DomainError("rank count out of range");
  return cdf_[k - 1];
}

namespace {

// Mass of the top k ranks under exponent s, computed directly from the
// rank probabilities. log(r) is precomputed by the caller.
double top_mass_at(const std::vector<double>& log_rank, std::uint32_t k,
                   double s) {
  double top = 0.0;
  double total = 0.0;
  for (std::size_t r = 0; r < log_rank.size(); ++r) {
    const double w = std::exp(-s * log_rank[r]);
    total += w;
    if (r < k) top += w;
  }
  return top / total;
}

}  // namespace

double calibrate_zipf(std::uint32_t num_ids, double target_fraction,
                      double target_mass) {
  if (num_ids < 100) throw DomainError("calibrate_zipf needs num_ids >= 100");
  if (!(target_fraction > 0.0 && target_fraction < 1.0))
    throw DomainError("target_fraction must be in (0,1)");
  if (!(target_mass > 0.0 && target_mass < 1.0))
    throw DomainError("target_mass must be in (0,1)");

  const auto k = static_cast<std::uint32_t>(std::min<double>(
      num_ids, std::ceil(target_fraction * static_cast<double>(num_ids))));

  std::vector<double> log_rank(num_ids);
  for (std::uint32_t r = 1; r <= num_ids; ++r)
    log_rank[r - 1] = std::log(static_cast<double>(r));

  constexpr double kLo = 0.1;
  constexpr double kHi = 5.0;
  const double rel_tol = 0.01 * target_mass;

  // top_mass_at is monotonically increasing in s for k < num_ids.
  double lo = kLo, hi = kHi;
  const double mass_lo = top_mass_at(log_rank, k, lo);
  const double mass_hi = top_mass_at(log_rank, k, hi);
  if (target_mass < mass_lo - rel_tol || target_mass > mass_hi + rel_tol)
    throw CalibrationError(
        "zipf coverage target unreachable for exponent in [0.1, 5.0]: "
        "fraction=" +
        std::to_string(target_fraction) +
        " mass=" + std::to_string(target_mass) +
        " (reachable mass range [" + std::to_string(mass_lo) + ", " +
        std::to_string(mass_hi) + "])");

  double mid = 0.0;
  for (int iter = 0; iter < 100; ++iter) {
    mid = 0.5 * (lo + hi);
    const double m = top_mass_at(log_rank, k, mid);
    if (std::abs(m - target_mass) <= rel_tol && iter >= 20) break;
    if (m < target_mass)
      lo = mid;
    else
      hi = mid;
    if (hi - lo < 1e-13) break;
  }
  const double m = top_mass_at(log_rank, k, mid);
  if (std::abs(m - target_mass) > rel_tol)
    throw CalibrationError("zipf bisection did not converge to target mass");
  return mid;
}

double coverage_fraction(const std::vector<std::uint64_t>& frequencies,
                         double mass) {
  if (!(mass > 0.0 && mass < 1.0))
    throw DomainError("coverage mass must be in (0,1)");
  if (frequencies.empty()) throw DomainError("empty frequency vector");

  std::vector<std::uint64_t> sorted = frequencies;
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  long double total = 0.0L;
  for (std::uint64_t f : sorted) total += static_cast<long double>(f);
  if (total <= 0.0L) throw DomainError("all frequencies are zero");

  const long double need = mass * total;
  long double acc = 0.0L;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    acc += static_cast<long double>(sorted[i]);
    if (acc >= need)
      return static_cast<double>(i + 1) / static_cast<double>(sorted.size());
  }
  return 1.0;
}

}  // namespace emblab
