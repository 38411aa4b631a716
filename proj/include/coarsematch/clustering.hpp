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
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "coarsematch/error.hpp"
#include "coarsematch/instance.hpp"
#include "coarsematch/kmeans.hpp"
#include "coarsematch/matrix.hpp"
#include "coarsematch/random.hpp"

namespace coarsematch {

enum class ClusterMethod {
  ConstrainedKMeans,
  ConstrainedAgglomerative,
  RecursiveBisection,
};

inline std::string_view to_string(ClusterMethod m) {
  switch (m) {
    case ClusterMethod::ConstrainedKMeans: return "constrained-kmeans";
    case ClusterMethod::ConstrainedAgglomerative: return "constrained-agglomerative";
    case ClusterMethod::RecursiveBisection: return "recursive-bisection";
  }
  return "?";
}

inline std::optional<ClusterMethod> parse_cluster_method(std::string_view s) {
  if (s == "constrained-kmeans" || s == "kmeans") return ClusterMethod::ConstrainedKMeans;
  if (s == "constrained-agglomerative" || s == "agglomerative")
    return ClusterMethod::ConstrainedAgglomerative;
  if (s == "recursive-bisection" || s == "bisection")
    return ClusterMethod::RecursiveBisection;
  return std::nullopt;
}

using ClusterList = std::vector<std::vector<std::size_t>>;

// Partition of the patients into clusters of at least `min_size` members.
// Clusters are kept in canonical order: members ascending, clusters ordered
// by their smallest member.
struct Clustering {
  std::vector<std::size_t> assignments;  // patient -> cluster
  ClusterList clusters;
  std::size_t min_size = 1;
  Matrix<double> representative_weights;  // cluster x donor type
  double delta_max = 0.0;
  ClusterMethod method = ClusterMethod::ConstrainedKMeans;

  std::size_t num_clusters() const noexcept { return clusters.size(); }
  std::size_t size_of(std::size_t c) const { return clusters[c].size(); }
};

struct ClusterErrorReport {
  std::vector<double> nmae_per_patient;
  std::vector<double> nmae_per_cluster;  // mean NMAE of the members
  double nmae_mean = 0.0;
  double nmae_max = 0.0;
  // Smallest delta with (1-delta) wbar <= w <= (1+delta) wbar inside each
  // cluster; +inf when wbar is 0 but some member weight is not.
  std::vector<double> delta_per_cluster;
  double delta_max = 0.0;  // over clusters with a finite delta
  std::vector<std::size_t> unbounded_clusters;
};

// Mean of the members' weight rows, per cluster.
inline Matrix<double> representative_weights(const MatchingInstance& inst,
                                             const ClusterList& clusters) {
  const std::size_t nv = inst.num_donor_types();
  Matrix<double> rep(clusters.size(), nv, 0.0);
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    if (clusters[c].empty())
      throw ValidationError("representative_weights: cluster " +
                            std::to_string(c) + " is empty");
    auto out = rep.row(c);
    for (auto u : clusters[c]) {
      auto w = inst.weights.row(u);
      for (std::size_t v = 0; v < nv; ++v) out[v] += w[v];
    }
    const double count = static_cast<double>(clusters[c].size());
    for (auto& x : out) x /= count;
  }
  return rep;
}

inline ClusterErrorReport compute_cluster_errors(const MatchingInstance& inst,
                                                 const Clustering& clustering) {
  const std::size_t nu = inst.num_patients();
  const std::size_t nv = inst.num_donor_types();
  double w_max = 0.0;
  for (double w : inst.weights.data()) w_max = std::max(w_max, w);
  if (!(w_max > 0.0))
    throw UndefinedError("compute_cluster_errors: NMAE undefined, maximum weight is 0");

  const Matrix<double>& rep = clustering.representative_weights;
  ClusterErrorReport r;
  r.nmae_per_patient.assign(nu, 0.0);
  r.nmae_per_cluster.assign(clustering.num_clusters(), 0.0);
  r.delta_per_cluster.assign(clustering.num_clusters(), 0.0);

  for (std::size_t c = 0; c < clustering.num_clusters(); ++c) {
    double delta = 0.0;
    double nmae_sum = 0.0;
    for (auto u : clustering.clusters[c]) {
      double abs_sum = 0.0;
      for (std::size_t v = 0; v < nv; ++v) {
        const double w = inst.weights(u, v);
        const double wb = rep(c, v);
        const double diff = std::abs(w - wb);
        abs_sum += diff;
        if (wb > 0.0)
          delta = std::max(delta, diff / wb);
        else if (w != 0.0)
          delta = std::numeric_limits<double>::infinity();
      }
      const double nmae = nv > 0 ? abs_sum / static_cast<double>(nv) / w_max : 0.0;
      r.nmae_per_patient[u] = nmae;
      nmae_sum += nmae;
    }
    r.nmae_per_cluster[c] =
        nmae_sum / static_cast<double>(clustering.clusters[c].size());
    r.delta_per_cluster[c] = delta;
    if (std::isinf(delta))
      r.unbounded_clusters.push_back(c);
    else
      r.delta_max = std::max(r.delta_max, delta);
  }
  for (double x : r.nmae_per_patient) {
    r.nmae_mean += x;
    r.nmae_max = std::max(r.nmae_max, x);
  }
  if (nu > 0) r.nmae_mean /= static_cast<double>(nu);
  return r;
}

namespace detail {

inline void canonicalize(ClusterList& clusters) {
  std::erase_if(clusters, [](const auto& c) { return c.empty(); });
  for (auto& c : clusters) std::sort(c.begin(), c.end());
  std::sort(clusters.begin(), clusters.end(),
            [](const auto& a, const auto& b) { return a.front() < b.front(); });
}

inline std::vector<double> mean_row(const Matrix<double>& points,
                                    const std::vector<std::size_t>& members) {
  std::vector<double> c(points.cols(), 0.0);
  for (auto i : members) {
    auto r = points.row(i);
    for (std::size_t d = 0; d < c.size(); ++d) c[d] += r[d];
  }
  for (auto& x : c) x /= static_cast<double>(members.size());
  return c;
}

// Splits `members` (size >= 2b) into two parts of size >= b. Tries 2-means
// first; if a side falls below b, projects onto the axis joining the two
// centroids and cuts at the position closest to the median that respects
// the floor.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> bisect(
    const Matrix<double>& points, const std::vector<std::size_t>& members,
    std::size_t b, Rng& rng) {
  const std::size_t n = members.size();
  KMeansResult km = kmeans(points, members, 2, rng, 50);
  std::vector<std::size_t> left, right;
  for (std::size_t i = 0; i < n; ++i)
    (km.labels[i] == 0 ? left : right).push_back(members[i]);
  if (left.size() >= b && right.size() >= b) return {left, right};

  const std::size_t dim = points.cols();
  std::vector<double> axis(dim);
  double norm = 0.0;
  for (std::size_t d = 0; d < dim; ++d) {
    axis[d] = km.centroids(1, d) - km.centroids(0, d);
    norm += axis[d] * axis[d];
  }
  if (!(norm > 0.0)) {
    // Degenerate 2-means; fall back to the coordinate of largest spread.
    std::size_t best = 0;
    double best_var = -1.0;
    auto mu = mean_row(points, members);
    for (std::size_t d = 0; d < dim; ++d) {
      double var = 0.0;
      for (auto i : members) var += (points(i, d) - mu[d]) * (points(i, d) - mu[d]);
      if (var > best_var) {
        best_var = var;
        best = d;
      }
    }
    std::fill(axis.begin(), axis.end(), 0.0);
    if (dim > 0) axis[best] = 1.0;
  }
  std::vector<std::pair<double, std::size_t>> proj;
  proj.reserve(n);
  for (auto i : members) {
    double s = 0.0;
    auto r = points.row(i);
    for (std::size_t d = 0; d < dim; ++d) s += r[d] * axis[d];
    proj.emplace_back(s, i);
  }
  std::sort(proj.begin(), proj.end());
  const std::size_t cut = std::clamp(n / 2, b, n - b);
  left.clear();
  right.clear();
  for (std::size_t i = 0; i < n; ++i)
    (i < cut ? left : right).push_back(proj[i].second);
  return {left, right};
}

// Recursively bisects every cluster with at least 2b members.
inline ClusterList split_large(const Matrix<double>& points, ClusterList clusters,
                               std::size_t b, Rng& rng) {
  ClusterList done;
  while (!clusters.empty()) {
    auto c = std::move(clusters.back());
    clusters.pop_back();
    if (c.size() >= 2 * b && c.size() >= 2) {
      std::sort(c.begin(), c.end());
      auto [l, r] = bisect(points, c, b, rng);
      clusters.push_back(std::move(r));
      clusters.push_back(std::move(l));
    } else {
      done.push_back(std::move(c));
    }
  }
  return done;
}

}  // namespace detail

// Two-phase repair. Merge: repeatedly take the smallest undersized cluster
// (lowest index on ties) and merge it into the nearest centroid, restricted
// to other undersized clusters while any exist. Split: recursively bisect
// clusters of size >= 2b. `points` holds one row per patient.
inline ClusterList repair_clusters(ClusterList raw, std::size_t b,
                                   const Matrix<double>& points,
                                   std::uint64_t seed = 0) {
  if (b == 0) throw InvalidCapacityError("repair_clusters: b must be >= 1");
  std::erase_if(raw, [](const auto& c) { return c.empty(); });
  std::size_t total = 0;
  for (const auto& c : raw) total += c.size();
  if (total < b)
    throw InvalidCapacityError("repair_clusters: " + std::to_string(total) +
                               " members cannot form a cluster of size " +
                               std::to_string(b));

  std::vector<std::vector<double>> centroids;
  centroids.reserve(raw.size());
  for (const auto& c : raw) centroids.push_back(detail::mean_row(points, c));

  for (;;) {
    std::size_t small = raw.size();
    bool any_other_small = false;
    for (std::size_t i = 0; i < raw.size(); ++i) {
      if (raw[i].size() >= b) continue;
      if (small == raw.size() || raw[i].size() < raw[small].size()) small = i;
    }
    if (small == raw.size()) break;
    for (std::size_t i = 0; i < raw.size(); ++i)
      if (i != small && raw[i].size() < b) any_other_small = true;

    std::size_t target = raw.size();
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < raw.size(); ++i) {
      if (i == small) continue;
      if (any_other_small && raw[i].size() >= b) continue;
      const double d = squared_distance(centroids[small], centroids[i]);
      if (d < best) {
        best = d;
        target = i;
      }
    }
    const double ns = static_cast<double>(raw[small].size());
    const double nt = static_cast<double>(raw[target].size());
    for (std::size_t d = 0; d < centroids[target].size(); ++d)
      centroids[target][d] =
          (centroids[target][d] * nt + centroids[small][d] * ns) / (nt + ns);
    raw[target].insert(raw[target].end(), raw[small].begin(), raw[small].end());
    raw.erase(raw.begin() + static_cast<std::ptrdiff_t>(small));
    centroids.erase(centroids.begin() + static_cast<std::ptrdiff_t>(small));
  }

  Rng rng(derive_seed(seed, "split"));
  ClusterList out = detail::split_large(points, std::move(raw), b, rng);
  detail::canonicalize(out);
  return out;
}

namespace detail {

// Ward linkage via the nearest-neighbour chain, cut at k clusters. The
// chain yields merges out of order; they are replayed by height through a
// union-find, which gives the same cut as greedy Ward.
inline ClusterList ward_agglomerative(const Matrix<double>& points, std::size_t k) {
  const std::size_t n = points.rows();
  const std::size_t dim = points.cols();
  if (k >= n) {
    ClusterList out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = {i};
    return out;
  }
  Matrix<double> cent = points;
  std::vector<double> size(n, 1.0);
  std::vector<unsigned char> active(n, 1);
  struct Merge {
    double height;
    std::size_t a, b;
  };
  std::vector<Merge> merges;
  merges.reserve(n - 1);

  auto ward = [&](std::size_t a, std::size_t b) {
    return size[a] * size[b] / (size[a] + size[b]) *
           squared_distance(cent.row(a), cent.row(b));
  };

  std::vector<std::size_t> chain;
  std::size_t remaining = n;
  std::size_t next_start = 0;
  while (remaining > 1) {
    if (chain.empty()) {
      while (!active[next_start]) ++next_start;
      chain.push_back(next_start);
    }
    const std::size_t a = chain.back();
    const std::size_t prev = chain.size() >= 2 ? chain[chain.size() - 2] : n;
    std::size_t nn = n;
    double best = std::numeric_limits<double>::infinity();
    if (prev != n) {
      nn = prev;
      best = ward(a, prev);
    }
    for (std::size_t j = 0; j < n; ++j) {
      if (!active[j] || j == a || j == prev) continue;
      const double d = ward(a, j);
      if (d < best) {
        best = d;
        nn = j;
      }
    }
    if (nn == prev) {
      chain.pop_back();
      chain.pop_back();
      const std::size_t keep = std::min(a, prev);
      const std::size_t drop = std::max(a, prev);
      merges.push_back({best, keep, drop});
      const double sk = size[keep], sd = size[drop];
      auto ck = cent.row(keep);
      auto cd = cent.row(drop);
      for (std::size_t d = 0; d < dim; ++d) ck[d] = (ck[d] * sk + cd[d] * sd) / (sk + sd);
      size[keep] = sk + sd;
      active[drop] = 0;
      --remaining;
    } else {
      chain.push_back(nn);
    }
  }

  std::stable_sort(merges.begin(), merges.end(),
                   [](const Merge& x, const Merge& y) { return x.height < y.height; });
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (std::size_t m = 0; m < n - k; ++m) {
    const std::size_t ra = find(merges[m].a), rb = find(merges[m].b);
    parent[std::max(ra, rb)] = std::min(ra, rb);
  }
  std::vector<std::size_t> label(n, n);
  ClusterList out;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t r = find(i);
    if (label[r] == n) {
      label[r] = out.size();
      out.emplace_back();
    }
    out[label[r]].push_back(i);
  }
  return out;
}

}  // namespace detail

inline Clustering make_clustering(const MatchingInstance& inst, ClusterList clusters,
                                  std::size_t b, ClusterMethod method) {
  detail::canonicalize(clusters);
  Clustering cl;
  cl.min_size = b;
  cl.method = method;
  cl.assignments.assign(inst.num_patients(), SIZE_MAX);
  for (std::size_t c = 0; c < clusters.size(); ++c)
    for (auto u : clusters[c]) {
      if (u >= inst.num_patients() || cl.assignments[u] != SIZE_MAX)
        throw ValidationError("clustering: patient " + std::to_string(u) +
                              " is out of range or assigned twice");
      cl.assignments[u] = c;
    }
  for (std::size_t u = 0; u < inst.num_patients(); ++u)
    if (cl.assignments[u] == SIZE_MAX)
      throw ValidationError("clustering: patient " + std::to_string(u) + " unassigned");
  cl.clusters = std::move(clusters);
  cl.representative_weights = representative_weights(inst, cl.clusters);
  double w_max = 0.0;
  for (double w : inst.weights.data()) w_max = std::max(w_max, w);
  if (w_max > 0.0) cl.delta_max = compute_cluster_errors(inst, cl).delta_max;
  return cl;
}

// Capacitated clustering of the patients' utility rows (rows of the weight
// matrix) into clusters of size >= b. Deterministic given the seed.
inline Clustering cluster_patients(const MatchingInstance& inst, std::size_t b,
                                   ClusterMethod method, std::uint64_t seed) {
  const std::size_t n = inst.num_patients();
  if (b < 1 || b > n)
    throw InvalidCapacityError("cluster_patients: b = " + std::to_string(b) +
                               " must lie in 1.." + std::to_string(n));
  const Matrix<double>& points = inst.weights;
  ClusterList raw;
  if (b == 1) {
    raw.resize(n);
    for (std::size_t u = 0; u < n; ++u) raw[u] = {u};
    return make_clustering(inst, std::move(raw), b, method);
  }
  const std::size_t k = n / b;
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);
  switch (method) {
    case ClusterMethod::ConstrainedKMeans: {
      Rng rng(derive_seed(seed, "kmeans"));
      KMeansResult km = kmeans(points, all, k, rng);
      raw.assign(k, {});
      for (std::size_t i = 0; i < n; ++i) raw[km.labels[i]].push_back(i);
      break;
    }
    case ClusterMethod::ConstrainedAgglomerative:
      raw = detail::ward_agglomerative(points, k);
      break;
    case ClusterMethod::RecursiveBisection: {
      Rng rng(derive_seed(seed, "bisection"));
      raw = detail::split_large(points, ClusterList{all}, b, rng);
      break;
    }
  }
  return make_clustering(inst, repair_clusters(std::move(raw), b, points, seed), b,
                         method);
}

}  // namespace coarsematch
