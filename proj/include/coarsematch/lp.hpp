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
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "coarsematch/clustering.hpp"
#include "coarsematch/error.hpp"
#include "coarsematch/instance.hpp"
#include "coarsematch/matrix.hpp"

namespace coarsematch {

// One LP variable f_e for a compatible edge (u, v). The column has two
// nonzeros: `capacity_coef` (= p_e) in capacity row u and 1 in rate row v.
struct LpEdge {
  std::size_t u = 0;
  std::size_t v = 0;
  double objective = 0.0;  // w_e p_e (or wbar_e p_e when clustered)
  double capacity_coef = 0.0;
};

//   max  sum_e objective_e f_e
//   s.t. sum_{e in d(u)} capacity_coef_e f_e <= capacities[u]
//        sum_{e in d(v)} f_e                 <= rates[v]
//        f >= 0
struct LpProblem {
  std::size_t num_offline = 0;
  std::size_t num_online = 0;
  std::vector<LpEdge> edges;
  std::vector<double> capacities;
  std::vector<double> rates;
  bool clustered = false;
};

struct DispatchPlan {
  Matrix<double> flows;  // offline node (patient or cluster) x donor type
  double objective = 0.0;
  std::vector<double> capacities;
  std::vector<double> rates;
  std::vector<double> capacity_duals;
  std::vector<double> rate_duals;
  double dual_objective = 0.0;
  bool clustered = false;
  std::size_t iterations = 0;

  std::size_t num_offline() const noexcept { return flows.rows(); }
  std::size_t num_online() const noexcept { return flows.cols(); }
  double gap() const noexcept { return std::abs(dual_objective - objective); }
};

// Offline node u is a patient (capacity 1) or, when a clustering is given, a
// cluster whose capacity is its actual size. A cluster is adjacent to v when
// any member is compatible; its edge probability is the mean over those
// members.
inline LpProblem build_lp(const MatchingInstance& inst,
                          const Clustering* clustering = nullptr) {
  LpProblem lp;
  const std::size_t nv = inst.num_donor_types();
  lp.num_online = nv;
  lp.rates.reserve(nv);
  for (const auto& d : inst.donor_types) lp.rates.push_back(d.arrival_rate);

  if (clustering == nullptr) {
    lp.num_offline = inst.num_patients();
    lp.capacities.assign(lp.num_offline, 1.0);
    for (std::size_t u = 0; u < lp.num_offline; ++u)
      for (std::size_t v = 0; v < nv; ++v) {
        if (!inst.compatible(u, v)) continue;
        const double p = inst.success_probs(u, v);
        lp.edges.push_back({u, v, inst.weights(u, v) * p, p});
      }
    return lp;
  }

  lp.clustered = true;
  lp.num_offline = clustering->num_clusters();
  if (clustering->representative_weights.rows() != lp.num_offline ||
      clustering->representative_weights.cols() != nv)
    throw PlanMismatchError("build_lp: representative weights do not match the instance");
  for (std::size_t c = 0; c < lp.num_offline; ++c) {
    const auto& members = clustering->clusters[c];
    lp.capacities.push_back(static_cast<double>(members.size()));
    for (std::size_t v = 0; v < nv; ++v) {
      double p_sum = 0.0;
      std::size_t n_compat = 0;
      for (auto u : members)
        if (inst.compatible(u, v)) {
          p_sum += inst.success_probs(u, v);
          ++n_compat;
        }
      if (n_compat == 0) continue;
      const double p = p_sum / static_cast<double>(n_compat);
      lp.edges.push_back({c, v, clustering->representative_weights(c, v) * p, p});
    }
  }
  return lp;
}

struct LpOptions {
  double feasibility_tol = 1e-8;
  double optimality_tol = 1e-9;
  double pivot_tol = 1e-9;
  std::size_t max_iterations = 0;  // 0: 50 * (rows + columns) + 10000
  std::size_t refactor_interval = 2000;
  std::size_t degenerate_streak_for_bland = 50;
};

namespace detail {

// Dense-inverse revised simplex from the all-slack basis, which is feasible
// because every right-hand side is nonnegative. Dantzig pricing, switching
// to Bland's rule after a run of degenerate pivots.
class RevisedSimplex {
 public:
  RevisedSimplex(const LpProblem& lp, const LpOptions& opt)
      : lp_(lp),
        opt_(opt),
        m_(lp.num_offline + lp.num_online),
        n_(lp.edges.size()),
        binv_(m_ * m_, 0.0),
        xb_(m_),
        y_(m_, 0.0),
        basic_(m_),
        pos_(n_ + m_, npos) {
    for (std::size_t i = 0; i < m_; ++i) {
      binv_[i * m_ + i] = 1.0;
      basic_[i] = n_ + i;
      pos_[n_ + i] = i;
      xb_[i] = rhs(i);
    }
    for (const auto& e : lp_.edges) cost_scale_ = std::max(cost_scale_, std::abs(e.objective));
  }

  DispatchPlan solve() {
    const std::size_t limit =
        opt_.max_iterations ? opt_.max_iterations : 50 * (m_ + n_) + 10000;
    const double dtol = opt_.optimality_tol * cost_scale_;
    std::size_t since_refactor = 0;
    std::size_t degenerate_streak = 0;
    bool bland = false;
    int confirmations = 0;

    for (;;) {
      if (iterations_ >= limit) {
        throw LpIterationLimitError(
            "solve_lp: iteration limit " + std::to_string(limit) + " exceeded",
            primal_objective(), lagrangian_bound());
      }
      const std::size_t q = price(dtol, bland);
      if (q == npos) {
        // Confirm optimality on a fresh factorization.
        if (since_refactor == 0 || confirmations >= 3) break;
        refactor();
        since_refactor = 0;
        ++confirmations;
        continue;
      }
      const double dq = reduced_cost(q);
      column(q, alpha_);
      const std::size_t r = ratio_test(bland);
      // r == npos cannot happen: every column has a positive entry in a rate
      // or slack row, so the LP is bounded.
      if (r == npos) throw Error("solve_lp: unbounded direction (malformed problem)");
      const double theta = std::max(0.0, xb_[r] / alpha_[r]);
      pivot(q, r, theta, dq);
      ++iterations_;
      if (theta <= 1e-12) {
        if (++degenerate_streak >= opt_.degenerate_streak_for_bland) bland = true;
      } else {
        degenerate_streak = 0;
        bland = false;
      }
      if (++since_refactor >= opt_.refactor_interval) {
        refactor();
        since_refactor = 0;
      }
    }
    return extract();
  }

 private:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  double rhs(std::size_t i) const {
    return i < lp_.num_offline ? lp_.capacities[i] : lp_.rates[i - lp_.num_offline];
  }
  double cost(std::size_t j) const { return j < n_ ? lp_.edges[j].objective : 0.0; }

  double reduced_cost(std::size_t j) const {
    if (j >= n_) return -y_[j - n_];
    const auto& e = lp_.edges[j];
    return e.objective - (e.capacity_coef * y_[e.u] + y_[lp_.num_offline + e.v]);
  }

  std::size_t price(double dtol, bool bland) const {
    std::size_t best = npos;
    double best_d = dtol;
    for (std::size_t j = 0; j < n_ + m_; ++j) {
      if (pos_[j] != npos) continue;
      const double d = reduced_cost(j);
      if (d > best_d) {
        if (bland) return j;
        best_d = d;
        best = j;
      }
    }
    return best;
  }

  // alpha = B^{-1} a_j
  void column(std::size_t j, std::vector<double>& out) const {
    out.assign(m_, 0.0);
    if (j >= n_) {
      const std::size_t row = j - n_;
      for (std::size_t i = 0; i < m_; ++i) out[i] = binv_[i * m_ + row];
      return;
    }
    const auto& e = lp_.edges[j];
    const std::size_t ru = e.u, rv = lp_.num_offline + e.v;
    for (std::size_t i = 0; i < m_; ++i)
      out[i] = e.capacity_coef * binv_[i * m_ + ru] + binv_[i * m_ + rv];
  }

  std::size_t ratio_test(bool bland) const {
    std::size_t r = npos;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < m_; ++i) {
      if (alpha_[i] <= opt_.pivot_tol) continue;
      const double ratio = std::max(0.0, xb_[i]) / alpha_[i];
      if (r == npos || ratio < best - 1e-12) {
        best = ratio;
        r = i;
      } else if (ratio <= best + 1e-12) {
        const bool take = bland ? basic_[i] < basic_[r] : alpha_[i] > alpha_[r];
        if (take) {
          best = std::min(best, ratio);
          r = i;
        }
      }
    }
    return r;
  }

  void pivot(std::size_t q, std::size_t r, double theta, double dq) {
    for (std::size_t i = 0; i < m_; ++i) xb_[i] -= theta * alpha_[i];
    xb_[r] = theta;

    double* row_r = &binv_[r * m_];
    const double inv = 1.0 / alpha_[r];
    for (std::size_t k = 0; k < m_; ++k) row_r[k] *= inv;
    for (std::size_t i = 0; i < m_; ++i) {
      if (i == r) continue;
      const double a = alpha_[i];
      if (a == 0.0) continue;
      double* row_i = &binv_[i * m_];
      for (std::size_t k = 0; k < m_; ++k) row_i[k] -= a * row_r[k];
    }
    for (std::size_t k = 0; k < m_; ++k) y_[k] += dq * row_r[k];

    pos_[basic_[r]] = npos;
    basic_[r] = q;
    pos_[q] = r;
  }

  // Rebuilds B^{-1} by Gauss-Jordan elimination, then x_B and y from it.
  void refactor() {
    std::vector<double> a(m_ * m_, 0.0);
    for (std::size_t i = 0; i < m_; ++i) {
      const std::size_t j = basic_[i];
      if (j >= n_) {
        a[(j - n_) * m_ + i] = 1.0;
      } else {
        const auto& e = lp_.edges[j];
        a[e.u * m_ + i] += e.capacity_coef;
        a[(lp_.num_offline + e.v) * m_ + i] += 1.0;
      }
    }
    std::vector<double> inv(m_ * m_, 0.0);
    for (std::size_t i = 0; i < m_; ++i) inv[i * m_ + i] = 1.0;
    for (std::size_t c = 0; c < m_; ++c) {
      std::size_t piv = c;
      for (std::size_t i = c + 1; i < m_; ++i)
        if (std::abs(a[i * m_ + c]) > std::abs(a[piv * m_ + c])) piv = i;
      if (std::abs(a[piv * m_ + c]) < 1e-14)
        throw Error("solve_lp: singular basis during refactorization");
      if (piv != c) {
        for (std::size_t k = 0; k < m_; ++k) {
          std::swap(a[piv * m_ + k], a[c * m_ + k]);
          std::swap(inv[piv * m_ + k], inv[c * m_ + k]);
        }
      }
      const double d = 1.0 / a[c * m_ + c];
      for (std::size_t k = 0; k < m_; ++k) {
        a[c * m_ + k] *= d;
        inv[c * m_ + k] *= d;
      }
      for (std::size_t i = 0; i < m_; ++i) {
        if (i == c) continue;
        const double f = a[i * m_ + c];
        if (f == 0.0) continue;
        for (std::size_t k = 0; k < m_; ++k) {
          a[i * m_ + k] -= f * a[c * m_ + k];
          inv[i * m_ + k] -= f * inv[c * m_ + k];
        }
      }
    }
    binv_ = std::move(inv);
    for (std::size_t i = 0; i < m_; ++i) {
      double s = 0.0;
      const double* row = &binv_[i * m_];
      for (std::size_t k = 0; k < m_; ++k) s += row[k] * rhs(k);
      xb_[i] = std::abs(s) < 1e-13 ? 0.0 : s;
    }
    std::fill(y_.begin(), y_.end(), 0.0);
    for (std::size_t i = 0; i < m_; ++i) {
      const double cb = cost(basic_[i]);
      if (cb == 0.0) continue;
      const double* row = &binv_[i * m_];
      for (std::size_t k = 0; k < m_; ++k) y_[k] += cb * row[k];
    }
  }

  double primal_objective() const {
    double s = 0.0;
    for (std::size_t i = 0; i < m_; ++i) s += cost(basic_[i]) * std::max(0.0, xb_[i]);
    return s;
  }

  // Valid upper bound for any y >= 0: sum_i rhs_i y_i plus the positive
  // part of every reduced cost times an upper bound on its variable.
  double lagrangian_bound() const {
    double bound = 0.0;
    std::vector<double> yp(m_);
    for (std::size_t i = 0; i < m_; ++i) {
      yp[i] = std::max(0.0, y_[i]);
      bound += rhs(i) * yp[i];
    }
    for (const auto& e : lp_.edges) {
      const double d =
          e.objective - (e.capacity_coef * yp[e.u] + yp[lp_.num_offline + e.v]);
      if (d <= 0.0) continue;
      double ub = lp_.rates[e.v];
      if (e.capacity_coef > 0.0) ub = std::min(ub, lp_.capacities[e.u] / e.capacity_coef);
      bound += d * ub;
    }
    return bound;
  }

  DispatchPlan extract() const {
    DispatchPlan plan;
    plan.flows = Matrix<double>(lp_.num_offline, lp_.num_online, 0.0);
    plan.capacities = lp_.capacities;
    plan.rates = lp_.rates;
    plan.clustered = lp_.clustered;
    plan.iterations = iterations_;
    for (std::size_t i = 0; i < m_; ++i) {
      const std::size_t j = basic_[i];
      if (j >= n_) continue;
      const double x = xb_[i] > 1e-13 ? xb_[i] : 0.0;
      plan.flows(lp_.edges[j].u, lp_.edges[j].v) = x;
    }
    for (const auto& e : lp_.edges) plan.objective += e.objective * plan.flows(e.u, e.v);
    plan.capacity_duals.resize(lp_.num_offline);
    plan.rate_duals.resize(lp_.num_online);
    for (std::size_t i = 0; i < m_; ++i) {
      const double yi = y_[i] > 0.0 ? y_[i] : 0.0;
      if (i < lp_.num_offline)
        plan.capacity_duals[i] = yi;
      else
        plan.rate_duals[i - lp_.num_offline] = yi;
      plan.dual_objective += rhs(i) * yi;
    }
    return plan;
  }

  const LpProblem& lp_;
  LpOptions opt_;
  std::size_t m_;
  std::size_t n_;
  std::vector<double> binv_;
  std::vector<double> xb_;
  std::vector<double> y_;
  std::vector<std::size_t> basic_;
  std::vector<std::size_t> pos_;
  std::vector<double> alpha_;
  double cost_scale_ = 1.0;
  std::size_t iterations_ = 0;
};

}  // namespace detail

inline DispatchPlan solve_lp(const LpProblem& lp, const LpOptions& opt = {}) {
  if (lp.capacities.size() != lp.num_offline || lp.rates.size() != lp.num_online)
    throw ValidationError("solve_lp: right-hand side sizes do not match the problem");
  for (double b : lp.capacities)
    if (!(b >= 0.0)) throw ValidationError("solve_lp: negative capacity");
  for (double r : lp.rates)
    if (!(r >= 0.0)) throw ValidationError("solve_lp: negative rate");
  return detail::RevisedSimplex(lp, opt).solve();
}

// Residuals of a plan against the problem it claims to solve, computed from
// the problem data alone.
struct PlanCheck {
  double max_capacity_violation = 0.0;
  double max_rate_violation = 0.0;
  double min_flow = 0.0;
  double max_dual_infeasibility = 0.0;
  double max_complementarity = 0.0;
  double primal_objective = 0.0;
  double dual_objective = 0.0;
};

inline PlanCheck check_plan(const LpProblem& lp, const DispatchPlan& plan) {
  PlanCheck c;
  std::vector<double> cap_use(lp.num_offline, 0.0), rate_use(lp.num_online, 0.0);
  for (const auto& e : lp.edges) {
    const double f = plan.flows(e.u, e.v);
    c.min_flow = std::min(c.min_flow, f);
    cap_use[e.u] += e.capacity_coef * f;
    rate_use[e.v] += f;
    c.primal_objective += e.objective * f;
    const double reduced =
        e.objective - (e.capacity_coef * plan.capacity_duals[e.u] + plan.rate_duals[e.v]);
    c.max_dual_infeasibility = std::max(c.max_dual_infeasibility, reduced);
    c.max_complementarity = std::max(c.max_complementarity, std::abs(f * reduced));
  }
  for (std::size_t u = 0; u < lp.num_offline; ++u) {
    c.max_capacity_violation =
        std::max(c.max_capacity_violation, cap_use[u] - lp.capacities[u]);
    c.max_complementarity =
        std::max(c.max_complementarity,
                 std::abs(plan.capacity_duals[u] * (lp.capacities[u] - cap_use[u])));
    c.dual_objective += lp.capacities[u] * plan.capacity_duals[u];
  }
  for (std::size_t v = 0; v < lp.num_online; ++v) {
    c.max_rate_violation = std::max(c.max_rate_violation, rate_use[v] - lp.rates[v]);
    c.max_complementarity =
        std::max(c.max_complementarity,
                 std::abs(plan.rate_duals[v] * (lp.rates[v] - rate_use[v])));
    c.dual_objective += lp.rates[v] * plan.rate_duals[v];
  }
  return c;
}

inline DispatchPlan plan_dispatch(const MatchingInstance& inst,
                                  const Clustering* clustering = nullptr,
                                  const LpOptions& opt = {}) {
  return solve_lp(build_lp(inst, clustering), opt);
}

}  // namespace coarsematch
