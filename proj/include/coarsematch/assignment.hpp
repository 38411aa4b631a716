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

#include <cstddef>
#include <limits>
#include <vector>

#include "coarsematch/matrix.hpp"

namespace coarsematch {

struct AssignmentResult {
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
  double total = 0.0;
  std::vector<std::size_t> row_to_col;  // npos when the row is left unmatched
};

// Maximum-weight bipartite matching on a nonnegative weight matrix. Pairs
// of weight 0 are reported as unmatched, since they add nothing.
// Shortest augmenting path Hungarian method with potentials, O(n^2 m) for
// n = min(rows, cols).
inline AssignmentResult max_weight_matching(const Matrix<double>& weights) {
  AssignmentResult res;
  res.row_to_col.assign(weights.rows(), AssignmentResult::npos);
  if (weights.rows() == 0 || weights.cols() == 0) return res;

  const bool flip = weights.rows() > weights.cols();
  const std::size_t n = flip ? weights.cols() : weights.rows();
  const std::size_t m = flip ? weights.rows() : weights.cols();
  auto cost = [&](std::size_t i, std::size_t j) {  // 1-based, minimised
    return flip ? -weights(j - 1, i - 1) : -weights(i - 1, j - 1);
  };

  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> pu(n + 1, 0.0), pv(m + 1, 0.0), minv(m + 1);
  std::vector<std::size_t> match(m + 1, 0), way(m + 1, 0);
  std::vector<unsigned char> used(m + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    match[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = match[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0, j) - pu[i0] - pv[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          pu[match[j]] += delta;
          pv[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  for (std::size_t j = 1; j <= m; ++j) {
    if (match[j] == 0) continue;
    const std::size_t r = flip ? j - 1 : match[j] - 1;
    const std::size_t c = flip ? match[j] - 1 : j - 1;
    const double w = weights(r, c);
    if (w > 0.0) {
      res.row_to_col[r] = c;
      res.total += w;
    }
  }
  return res;
}

}  // namespace coarsematch
