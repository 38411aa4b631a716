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

// Test-only oracles for the LP planner. Deliberately share nothing with the
// production solver: a textbook dense tableau with Bland's rule, and a
// brute-force vertex enumeration for very small problems.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

namespace reference {

struct DenseLp {
  // max c^T x  s.t.  A x <= b,  x >= 0,  b >= 0
  std::vector<std::vector<double>> a;
  std::vector<double> b;
  std::vector<double> c;
};

struct DenseSolution {
  double objective = 0.0;
  std::vector<double> x;
};

inline DenseSolution tableau_simplex(const DenseLp& lp) {
  const std::size_t m = lp.b.size();
  const std::size_t n = lp.c.size();
  const std::size_t cols = n + m + 1;
  std::vector<std::vector<double>> t(m + 1, std::vector<double>(cols, 0.0));
  std::vector<std::size_t> basis(m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) t[i][j] = lp.a[i][j];
    t[i][n + i] = 1.0;
    t[i][cols - 1] = lp.b[i];
    basis[i] = n + i;
  }
  for (std::size_t j = 0; j < n; ++j) t[m][j] = -lp.c[j];

  for (int guard = 0; guard < 100000; ++guard) {
    std::size_t enter = cols;
    for (std::size_t j = 0; j + 1 < cols; ++j)
      if (t[m][j] < -1e-11) {
        enter = j;
        break;
      }
    if (enter == cols) break;
    std::size_t leave = m;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < m; ++i) {
      if (t[i][enter] <= 1e-12) continue;
      const double r = t[i][cols - 1] / t[i][enter];
      if (r < best - 1e-13 || (r <= best + 1e-13 && leave < m && basis[i] < basis[leave])) {
        if (r < best) best = r;
        leave = i;
      }
    }
    if (leave == m) break;  // unbounded; not reachable for our problems
    const double p = t[leave][enter];
    for (auto& v : t[leave]) v /= p;
    for (std::size_t i = 0; i <= m; ++i) {
      if (i == leave) continue;
      const double f = t[i][enter];
      if (f == 0.0) continue;
      for (std::size_t j = 0; j < cols; ++j) t[i][j] -= f * t[leave][j];
    }
    basis[leave] = enter;
  }
  DenseSolution s;
  s.x.assign(n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    if (basis[i] < n) s.x[basis[i]] = t[i][cols - 1];
  for (std::size_t j = 0; j < n; ++j) s.objective += lp.c[j] * s.x[j];
  return s;
}

// Solves the n x n system by Gaussian elimination; false if singular.
inline bool solve_square(std::vector<std::vector<double>> a, std::vector<double> b,
                         std::vector<double>& x) {
  const std::size_t n = b.size();
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t p = c;
    for (std::size_t i = c + 1; i < n; ++i)
      if (std::abs(a[i][c]) > std::abs(a[p][c])) p = i;
    if (std::abs(a[p][c]) < 1e-12) return false;
    std::swap(a[p], a[c]);
    std::swap(b[p], b[c]);
    for (std::size_t i = c + 1; i < n; ++i) {
      const double f = a[i][c] / a[c][c];
      for (std::size_t k = c; k < n; ++k) a[i][k] -= f * a[c][k];
      b[i] -= f * b[c];
    }
  }
  x.assign(n, 0.0);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t k = i + 1; k < n; ++k) s -= a[i][k] * x[k];
    x[i] = s / a[i][i];
  }
  return true;
}

// Enumerates every choice of n tight constraints among the m rows and n
// nonnegativity bounds; the best feasible vertex is optimal. Exponential,
// so only for n + m small.
inline double vertex_enumeration(const DenseLp& lp) {
  const std::size_t m = lp.b.size();
  const std::size_t n = lp.c.size();
  std::vector<std::vector<double>> rows = lp.a;
  std::vector<double> rhs = lp.b;
  for (std::size_t j = 0; j < n; ++j) {
    std::vector<double> r(n, 0.0);
    r[j] = -1.0;
    rows.push_back(r);
    rhs.push_back(0.0);
  }
  const std::size_t total = m + n;
  double best = -std::numeric_limits<double>::infinity();
  std::vector<std::size_t> pick(n);
  // iterate over all n-subsets of `total`
  std::vector<bool> mask(total, false);
  std::fill(mask.end() - static_cast<std::ptrdiff_t>(n), mask.end(), true);
  do {
    std::vector<std::vector<double>> a;
    std::vector<double> b;
    for (std::size_t i = 0; i < total; ++i)
      if (mask[i]) {
        a.push_back(rows[i]);
        b.push_back(rhs[i]);
      }
    std::vector<double> x;
    if (!solve_square(a, b, x)) continue;
    bool feasible = true;
    for (std::size_t i = 0; i < total && feasible; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += rows[i][j] * x[j];
      if (s > rhs[i] + 1e-9) feasible = false;
    }
    if (!feasible) continue;
    double obj = 0.0;
    for (std::size_t j = 0; j < n; ++j) obj += lp.c[j] * x[j];
    best = std::max(best, obj);
  } while (std::next_permutation(mask.begin(), mask.end()));
  return best;
}

}  // namespace reference
