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

#include <gtest/gtest.h>

#include <algorithm>
#include <functional>
#include <numeric>
#include <random>

#include "coarsematch.hpp"

namespace cm = coarsematch;

namespace {

// Best partial matching by trying every injective map of rows into
// columns-or-nothing.
double brute_force(const cm::Matrix<double>& w) {
  std::vector<char> used(w.cols(), 0);
  std::function<double(std::size_t)> rec = [&](std::size_t i) -> double {
    if (i == w.rows()) return 0.0;
    double best = rec(i + 1);
    for (std::size_t j = 0; j < w.cols(); ++j) {
      if (used[j]) continue;
      used[j] = 1;
      best = std::max(best, w(i, j) + rec(i + 1));
      used[j] = 0;
    }
    return best;
  };
  return rec(0);
}

cm::Matrix<double> random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  cm::Matrix<double> m(r, c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) m(i, j) = unit(rng) < 0.3 ? 0.0 : 10.0 * unit(rng);
  return m;
}

void expect_consistent(const cm::Matrix<double>& w, const cm::AssignmentResult& res) {
  std::vector<char> seen(w.cols(), 0);
  double total = 0.0;
  for (std::size_t i = 0; i < w.rows(); ++i) {
    const auto j = res.row_to_col[i];
    if (j == cm::AssignmentResult::npos) continue;
    ASSERT_LT(j, w.cols());
    EXPECT_FALSE(seen[j]);
    seen[j] = 1;
    total += w(i, j);
  }
  EXPECT_NEAR(total, res.total, 1e-9);
}

}  // namespace

TEST(Assignment, MatchesBruteForce) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t r = 1 + rng() % 6, c = 1 + rng() % 6;
    const auto w = random_matrix(r, c, rng);
    const auto res = cm::max_weight_matching(w);
    EXPECT_NEAR(res.total, brute_force(w), 1e-9);
    expect_consistent(w, res);
  }
}

TEST(Assignment, Rectangular) {
  cm::Matrix<double> w(3, 1);
  w(0, 0) = 1.0;
  w(1, 0) = 4.0;
  w(2, 0) = 2.0;
  const auto res = cm::max_weight_matching(w);
  EXPECT_EQ(res.total, 4.0);
  EXPECT_EQ(res.row_to_col[1], 0u);
  EXPECT_EQ(res.row_to_col[0], cm::AssignmentResult::npos);
  EXPECT_EQ(res.row_to_col[2], cm::AssignmentResult::npos);
}

TEST(Assignment, ZeroMatrixLeavesEverythingUnmatched) {
  const cm::Matrix<double> w(4, 3, 0.0);
  const auto res = cm::max_weight_matching(w);
  EXPECT_EQ(res.total, 0.0);
  for (auto j : res.row_to_col) EXPECT_EQ(j, cm::AssignmentResult::npos);
}

TEST(Assignment, Empty) {
  EXPECT_EQ(cm::max_weight_matching(cm::Matrix<double>(0, 5)).total, 0.0);
  EXPECT_EQ(cm::max_weight_matching(cm::Matrix<double>(3, 0)).row_to_col.size(), 3u);
}

TEST(Assignment, AvoidsGreedyTrap) {
  // greedy would take (0,0)=3 and then (1,1)=0
  cm::Matrix<double> w(2, 2, 0.0);
  w(0, 0) = 3.0;
  w(0, 1) = 2.0;
  w(1, 0) = 2.0;
  EXPECT_EQ(cm::max_weight_matching(w).total, 4.0);
}

TEST(Assignment, LargerRandomAgainstPermutations) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 8;
    const auto w = random_matrix(n, n, rng);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double best = 0.0;
    do {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += w(i, perm[i]);
      best = std::max(best, s);
    } while (std::next_permutation(perm.begin(), perm.end()));
    EXPECT_NEAR(cm::max_weight_matching(w).total, best, 1e-9);
  }
}
