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
#include <span>
#include <vector>

#include "coarsematch/matrix.hpp"
#include "coarsematch/random.hpp"

namespace coarsematch {

struct KMeansResult {
  std::vector<std::size_t> labels;  // per member of the input subset
  Matrix<double> centroids;         // k x dim
  int iterations = 0;
};

namespace detail {

inline std::size_t nearest_center(std::span<const double> x,
                                  const Matrix<double>& centers, double* dist) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centers.rows(); ++c) {
    const double d = squared_distance(x, centers.row(c));
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  if (dist) *dist = best_d;
  return best;
}

}  // namespace detail

inline Matrix<double> centroid_of(const Matrix<double>& points,
                                  std::span<const std::size_t> members) {
  Matrix<double> c(1, points.cols(), 0.0);
  for (auto i : members) {
    auto r = points.row(i);
    for (std::size_t d = 0; d < r.size(); ++d) c(0, d) += r[d];
  }
  if (!members.empty())
    for (auto& x : c.data()) x /= static_cast<double>(members.size());
  return c;
}

// Lloyd's algorithm with k-means++ seeding over the rows `subset` of
// `points`. Distances are squared Euclidean; ties go to the lower center id.
inline KMeansResult kmeans(const Matrix<double>& points,
                           std::span<const std::size_t> subset, std::size_t k,
                           Rng& rng, int max_iter = 100) {
  const std::size_t n = subset.size();
  const std::size_t dim = points.cols();
  KMeansResult res;
  res.labels.assign(n, 0);
  res.centroids = Matrix<double>(k, dim, 0.0);
  if (n == 0 || k == 0) return res;
  if (k > n) k = n;

  // k-means++ seeding.
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  std::vector<unsigned char> chosen(n, 0);
  std::size_t first = uniform_index(rng, n);
  auto set_center = [&](std::size_t c, std::size_t pos) {
    chosen[pos] = 1;
    auto src = points.row(subset[pos]);
    auto dst = res.centroids.row(c);
    std::copy(src.begin(), src.end(), dst.begin());
    for (std::size_t i = 0; i < n; ++i) {
      const double d = squared_distance(points.row(subset[i]), dst);
      if (d < d2[i]) d2[i] = d;
    }
  };
  set_center(0, first);
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (double d : d2) total += d;
    std::size_t pick = n;
    if (total > 0.0) {
      double target = uniform01(rng) * total;
      for (std::size_t i = 0; i < n; ++i) {
        if (d2[i] <= 0.0) continue;
        target -= d2[i];
        if (target < 0.0) {
          pick = i;
          break;
        }
      }
      if (pick == n)  // rounding at the tail
        for (std::size_t i = n; i-- > 0;)
          if (d2[i] > 0.0) {
            pick = i;
            break;
          }
    } else {
      // Every remaining point coincides with a center; take an unused one.
      std::vector<std::size_t> free;
      for (std::size_t i = 0; i < n; ++i)
        if (!chosen[i]) free.push_back(i);
      pick = free[uniform_index(rng, free.size())];
    }
    set_center(c, pick);
  }

  std::vector<std::size_t> counts(k);
  for (int it = 0; it < max_iter; ++it) {
    res.iterations = it + 1;
    bool changed = it == 0;
    std::vector<double> dist(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c =
          detail::nearest_center(points.row(subset[i]), res.centroids, &dist[i]);
      if (c != res.labels[i]) changed = true;
      res.labels[i] = c;
    }
    if (!changed) break;

    std::fill(counts.begin(), counts.end(), 0);
    Matrix<double> sums(k, dim, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[res.labels[i]];
      auto r = points.row(subset[i]);
      auto s = sums.row(res.labels[i]);
      for (std::size_t d = 0; d < dim; ++d) s[d] += r[d];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) {
        // Re-seed an empty center at the point farthest from its center.
        std::size_t far = 0;
        for (std::size_t i = 1; i < n; ++i)
          if (dist[i] > dist[far]) far = i;
        auto src = points.row(subset[far]);
        std::copy(src.begin(), src.end(), res.centroids.row(c).begin());
        dist[far] = 0.0;
        continue;
      }
      auto s = sums.row(c);
      auto dst = res.centroids.row(c);
      for (std::size_t d = 0; d < dim; ++d)
        dst[d] = s[d] / static_cast<double>(counts[c]);
    }
  }
  return res;
}

}  // namespace coarsematch
