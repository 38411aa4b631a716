// Copyright 2026 The coarsematch Authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string_view>
#include <vector>

#include "coarsematch/error.hpp"

namespace coarsematch {

enum class PsiClass { Stable, Minor, Major };

inline std::string_view to_string(PsiClass c) {
  switch (c) {
    case PsiClass::Stable: return "stable";
    case PsiClass::Minor: return "minor";
    case PsiClass::Major: return "major";
  }
  return "?";
}

inline PsiClass classify_psi(double value) {
  if (value < 0.1) return PsiClass::Stable;
  if (value < 0.25) return PsiClass::Minor;
  return PsiClass::Major;
}

struct PsiResult {
  double value = 0.0;
  int bins = 0;
  PsiClass classification = PsiClass::Stable;
};

inline constexpr double kPsiSmoothing = 1e-6;

// PSI from bin fractions: sum_i (P_i - Q_i) ln(P_i / Q_i), with additive
// smoothing inside the logarithm so empty bins stay finite.
inline PsiResult psi_binned(std::span<const double> actual_fractions,
                            std::span<const double> expected_fractions) {
  if (actual_fractions.size() != expected_fractions.size() || actual_fractions.empty())
    throw ValidationError("psi: bin fraction vectors must be nonempty and equally long");
  double s = 0.0;
  for (std::size_t i = 0; i < actual_fractions.size(); ++i) {
    const double p = actual_fractions[i], q = expected_fractions[i];
    s += (p - q) * std::log((p + kPsiSmoothing) / (q + kPsiSmoothing));
  }
  return {s, static_cast<int>(actual_fractions.size()), classify_psi(s)};
}

// Quantile (type 7, linear interpolation) of a sorted sample.
inline double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw ValidationError("quantile of empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

// Bins are the n_bins quantile intervals of the expected (baseline) sample,
// with unbounded outer bins; a value equal to an edge falls in the upper bin.
inline PsiResult psi(std::span<const double> actual, std::span<const double> expected,
                     int n_bins = 10) {
  if (actual.empty() || expected.empty())
    throw ValidationError("psi: both samples must be nonempty");
  if (n_bins < 1) throw ValidationError("psi: need at least one bin");
  std::vector<double> sorted(expected.begin(), expected.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> edges;
  for (int i = 1; i < n_bins; ++i)
    edges.push_back(quantile_sorted(sorted, static_cast<double>(i) / n_bins));

  auto fractions = [&](std::span<const double> xs) {
    std::vector<double> f(static_cast<std::size_t>(n_bins), 0.0);
    for (double x : xs) {
      const auto bin = std::upper_bound(edges.begin(), edges.end(), x) - edges.begin();
      f[static_cast<std::size_t>(bin)] += 1.0;
    }
    for (auto& v : f) v /= static_cast<double>(xs.size());
    return f;
  };
  const auto p = fractions(actual);
  const auto q = fractions(expected);
  return psi_binned(p, q);
}

inline double competitive_ratio(double alg_total, double opt_total) {
  if (!(opt_total > 0.0))
    throw UndefinedError("competitive ratio undefined: optimum is 0");
  return alg_total / opt_total;
}

inline double mean(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

// Sample standard deviation (n - 1 denominator); 0 for fewer than 2 values.
inline double stddev(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

struct RatioEstimate {
  double ratio = 0.0;
  double standard_error = 0.0;
};

// E[ALG]/E[OPT] estimated as a ratio of paired sample means, with a
// delta-method standard error.
inline RatioEstimate ratio_of_means(std::span<const double> alg, std::span<const double> opt) {
  if (alg.size() != opt.size() || alg.empty())
    throw ValidationError("ratio_of_means: paired samples of equal nonzero size required");
  const double ma = mean(alg), mo = mean(opt);
  RatioEstimate r;
  r.ratio = competitive_ratio(ma, mo);
  if (alg.size() < 2) return r;
  double s = 0.0;
  for (std::size_t i = 0; i < alg.size(); ++i) {
    const double resid = alg[i] - r.ratio * opt[i];
    s += resid * resid;
  }
  const double n = static_cast<double>(alg.size());
  r.standard_error = std::sqrt(s / (n - 1.0) / n) / mo;
  return r;
}

namespace detail {

// Average ranks of |d| for the nonzero differences, ties share the mean rank.
inline std::vector<double> abs_ranks(const std::vector<double>& d) {
  const std::size_t n = d.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(),
            [&](std::size_t a, std::size_t b) { return std::abs(d[a]) < std::abs(d[b]); });
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && std::abs(d[idx[j + 1]]) == std::abs(d[idx[i]])) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[idx[k]] = r;
    i = j + 1;
  }
  return rank;
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

}  // namespace detail

inline constexpr std::size_t kWilcoxonExactMax = 25;

// Two-sided Wilcoxon signed-rank test of x - y. Zero differences are
// dropped. With n <= 25 nonzero differences the null distribution of W+ is
// computed exactly (doubled ranks keep tied half-ranks integral); otherwise
// a normal approximation with tie correction and continuity correction.
// p = min(1, 2 min(P[W+ <= w], P[W+ >= w])).
inline double wilcoxon_signed_rank(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ValidationError("wilcoxon: samples must be paired");
  if (x.size() < 5) throw ValidationError("wilcoxon: need at least 5 pairs");
  std::vector<double> d;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (x[i] - y[i] != 0.0) d.push_back(x[i] - y[i]);
  const std::size_t n = d.size();
  if (n == 0) return 1.0;
  const auto rank = detail::abs_ranks(d);

  if (n <= kWilcoxonExactMax) {
    std::vector<std::int64_t> r2(n);
    std::int64_t total = 0, w2 = 0;
    for (std::size_t i = 0; i < n; ++i) {
      r2[i] = std::llround(2.0 * rank[i]);
      total += r2[i];
      if (d[i] > 0.0) w2 += r2[i];
    }
    // counts[s] = number of sign patterns whose doubled W+ equals s
    std::vector<double> counts(static_cast<std::size_t>(total) + 1, 0.0);
    counts[0] = 1.0;
    std::int64_t reach = 0;
    for (auto r : r2) {
      for (std::int64_t s = reach; s >= 0; --s)
        if (counts[static_cast<std::size_t>(s)] != 0.0)
          counts[static_cast<std::size_t>(s + r)] += counts[static_cast<std::size_t>(s)];
      reach += r;
    }
    const double all = std::ldexp(1.0, static_cast<int>(n));
    double lower = 0.0, upper = 0.0;
    for (std::int64_t s = 0; s <= total; ++s) {
      const double c = counts[static_cast<std::size_t>(s)];
      if (s <= w2) lower += c;
      if (s >= w2) upper += c;
    }
    return std::min(1.0, 2.0 * std::min(lower, upper) / all);
  }

  double w = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    if (d[i] > 0.0) w += rank[i];
  const double nn = static_cast<double>(n);
  const double mu = nn * (nn + 1.0) / 4.0;
  double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0;
  std::vector<double> sorted_ranks = rank;
  std::sort(sorted_ranks.begin(), sorted_ranks.end());
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && sorted_ranks[j] == sorted_ranks[i]) ++j;
    const double t = static_cast<double>(j - i);
    var -= (t * t * t - t) / 48.0;
    i = j;
  }
  if (!(var > 0.0)) return 1.0;
  const double z = (std::abs(w - mu) - 0.5) / std::sqrt(var);
  return std::min(1.0, 2.0 * (1.0 - detail::normal_cdf(std::max(0.0, z))));
}

}  // namespace coarsematch
