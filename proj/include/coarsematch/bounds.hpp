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
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "coarsematch/clustering.hpp"
#include "coarsematch/error.hpp"
#include "coarsematch/instance.hpp"

namespace coarsematch {

// g_b(eps) = 1 - b^(-1/2 + eps) - exp(-b^(2 eps) / 3)
inline double alpha_objective(double b, double eps) {
  return 1.0 - std::pow(b, -0.5 + eps) - std::exp(-std::pow(b, 2.0 * eps) / 3.0);
}

struct AlphaResult {
  double value = 0.0;    // clamped at 0
  double raw = 0.0;      // supremum before clamping
  double epsilon = 0.0;  // maximiser (or the boundary approached)
};

// sup over eps in (0, 1/2] of g_b(eps): a 4096-point scan, then golden-section
// refinement of the best bracket down to 1e-9 in eps.
inline AlphaResult alpha_detail(double b) {
  if (!(b >= 1.0)) throw ValidationError("alpha: b must be >= 1");
  constexpr int kGrid = 4096;
  constexpr double kHi = 0.5;
  constexpr double kLo = 1e-12;  // stands in for the open end at 0
  auto g = [b](double e) { return alpha_objective(b, e); };

  int best_i = 0;
  double best = g(kLo);
  for (int i = 1; i <= kGrid; ++i) {
    const double e = kHi * i / kGrid;
    const double val = g(e);
    if (val > best) {
      best = val;
      best_i = i;
    }
  }
  double lo = best_i == 0 ? kLo : kHi * (best_i - 1) / kGrid;
  double hi = std::min(kHi, kHi * (best_i + 1) / kGrid);
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = hi - phi * (hi - lo), x2 = lo + phi * (hi - lo);
  double f1 = g(x1), f2 = g(x2);
  while (hi - lo > 1e-9) {
    if (f1 < f2) {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + phi * (hi - lo);
      f2 = g(x2);
    } else {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - phi * (hi - lo);
      f1 = g(x1);
    }
  }
  AlphaResult r;
  const double refined_eps = 0.5 * (lo + hi);
  const double refined = g(refined_eps);
  if (refined >= best) {
    r.raw = refined;
    r.epsilon = refined_eps;
  } else {
    r.raw = best;
    r.epsilon = best_i == 0 ? kLo : kHi * best_i / kGrid;
  }
  r.value = std::max(0.0, r.raw);
  return r;
}

inline double alpha(double b) { return alpha_detail(b).value; }

struct BoundReport {
  int b = 1;
  double alpha = 0.0;
  double delta = 0.0;
  double eta = 0.0;
  double rho = 0.0;
  double thm2_bound = 0.0;   // alpha (1 - 2 delta)
  double thm3_bound = 0.0;   // (1 - 2 eta) thm2
  double thm4_bound = 0.0;   // alpha (1 - rho) (1 - 2 delta)
  double thmA6_bound = 0.0;  // (1 - 2 eta) thm4
  // Ex post quantities; NaN when not measured.
  double delta_opt = std::numeric_limits<double>::quiet_NaN();
  double delta_alg = std::numeric_limits<double>::quiet_NaN();
  double thmA1_bound = std::numeric_limits<double>::quiet_NaN();
  double hcr = std::numeric_limits<double>::quiet_NaN();
};

inline double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

// Closed-form lower bounds on the competitive ratio, clamped to [0, 1].
inline BoundReport theorem_bounds(int b, double delta, double eta, double rho) {
  if (b < 1) throw ValidationError("theorem_bounds: b must be >= 1");
  if (!(delta >= 0.0 && delta < 1.0))
    throw ValidationError("theorem_bounds: delta must lie in [0, 1)");
  if (!(eta >= 0.0 && eta < 1.0))
    throw ValidationError("theorem_bounds: eta must lie in [0, 1)");
  if (!(rho >= 0.0 && rho <= 1.0))
    throw ValidationError("theorem_bounds: rho must lie in [0, 1]");
  BoundReport r;
  r.b = b;
  r.alpha = alpha(b);
  r.delta = delta;
  r.eta = eta;
  r.rho = rho;
  r.thm2_bound = clamp01(r.alpha * (1.0 - 2.0 * delta));
  r.thm3_bound = clamp01((1.0 - 2.0 * eta) * r.alpha * (1.0 - 2.0 * delta));
  r.thm4_bound = clamp01(r.alpha * (1.0 - rho) * (1.0 - 2.0 * delta));
  r.thmA6_bound = clamp01((1.0 - 2.0 * eta) * r.alpha * (1.0 - rho) * (1.0 - 2.0 * delta));
  return r;
}

// alpha(b) (1 - Delta_OPT) (1 - Delta_ALG), clamped.
inline double thmA1_bound(int b, double delta_opt, double delta_alg) {
  return clamp01(alpha(b) * (1.0 - delta_opt) * (1.0 - delta_alg));
}

inline double hcr(double b, double nmae_max) {
  if (!(b >= 1.0)) throw ValidationError("hcr: b must be >= 1");
  if (!(nmae_max >= 0.0 && nmae_max <= 1.0))
    throw ValidationError("hcr: nmae_max must lie in [0, 1]");
  return (1.0 - 1.0 / std::sqrt(b)) * (1.0 - nmae_max);
}

struct CapacityChoice {
  int b = 1;
  double bound = 0.0;
};

// Offline choice of b: maximise alpha(b)(1 - 2 delta(b)), smaller b on ties.
inline CapacityChoice select_capacity(const std::vector<std::pair<int, double>>& grid) {
  if (grid.empty()) throw ValidationError("select_capacity: empty grid");
  std::optional<CapacityChoice> best;
  for (const auto& [b, delta] : grid) {
    if (b < 1) throw ValidationError("select_capacity: b must be >= 1");
    const double c = clamp01(alpha(b) * (1.0 - 2.0 * delta));
    if (!best || c > best->bound || (c == best->bound && b < best->b)) best = {b, c};
  }
  return *best;
}

// An edge used by a policy or the hindsight optimum: (patient, donor type).
struct UsedEdge {
  std::size_t patient = 0;
  std::size_t donor_type = 0;
};

struct ExPostErrors {
  double delta_opt = std::numeric_limits<double>::quiet_NaN();
  double delta_alg = std::numeric_limits<double>::quiet_NaN();
};

// Ex post weighted cluster errors. Delta_OPT weights each optimal edge by
// its true value w p; Delta_ALG weights each algorithm edge by its
// representative value wbar p. Edge lists may pool many runs, in which case
// the sums are Monte Carlo estimates of the expectations. A zero
// denominator yields NaN.
inline ExPostErrors ex_post_errors(const std::vector<UsedEdge>& opt_edges,
                                   const std::vector<UsedEdge>& alg_edges,
                                   const Clustering& clustering,
                                   const std::vector<double>& delta_per_cluster,
                                   const MatchingInstance& inst) {
  if (delta_per_cluster.size() != clustering.num_clusters())
    throw PlanMismatchError("ex_post_errors: one delta per cluster required");
  ExPostErrors out;
  double num = 0.0, den = 0.0;
  for (const auto& e : opt_edges) {
    const std::size_t c = clustering.assignments.at(e.patient);
    const double val = inst.weights(e.patient, e.donor_type) *
                       inst.success_probs(e.patient, e.donor_type);
    num += delta_per_cluster[c] * val;
    den += val;
  }
  if (den > 0.0) out.delta_opt = num / den;
  num = den = 0.0;
  for (const auto& e : alg_edges) {
    const std::size_t c = clustering.assignments.at(e.patient);
    const double val = clustering.representative_weights(c, e.donor_type) *
                       inst.success_probs(e.patient, e.donor_type);
    num += delta_per_cluster[c] * val;
    den += val;
  }
  if (den > 0.0) out.delta_alg = num / den;
  return out;
}

}  // namespace coarsematch
