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

// Small-instance builders and brute-force oracles shared by the tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <vector>

#include "coarsematch.hpp"
#include "support/reference_lp.hpp"

namespace fixtures {

using coarsematch::MatchingInstance;

// Random instance with all-O patients and donors (every edge compatible
// unless `sparsity` masks it), rates summing to the horizon.
inline MatchingInstance random_instance(std::size_t n_patients, std::size_t n_types, int horizon,
                                        std::uint64_t seed, double sparsity = 0.0,
                                        bool random_p = false) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  MatchingInstance inst;
  inst.horizon = horizon;
  for (std::size_t u = 0; u < n_patients; ++u) {
    coarsematch::PatientNode p;
    p.id = "p" + std::to_string(u);
    p.features = {unit(rng)};
    p.status = 1 + static_cast<int>(u % 6);
    inst.patients.push_back(p);
  }
  std::vector<double> raw(n_types);
  double sum = 0.0;
  for (auto& r : raw) sum += (r = 0.2 + unit(rng));
  double acc = 0.0;
  for (std::size_t v = 0; v < n_types; ++v) {
    coarsematch::DonorType d;
    d.id = "d" + std::to_string(v);
    d.features = {unit(rng)};
    d.arrival_rate = v + 1 < n_types ? horizon * raw[v] / sum : horizon - acc;
    acc += d.arrival_rate;
    inst.donor_types.push_back(d);
  }
  inst.weights = coarsematch::Matrix<double>(n_patients, n_types, 0.0);
  inst.success_probs = coarsematch::Matrix<double>(n_patients, n_types, 1.0);
  inst.compatibility = coarsematch::Mask(n_patients, n_types, 0);
  for (std::size_t u = 0; u < n_patients; ++u)
    for (std::size_t v = 0; v < n_types; ++v) {
      if (unit(rng) < sparsity) continue;
      inst.compatibility(u, v) = 1;
      inst.weights(u, v) = std::round(1000.0 * (0.1 + 9.9 * unit(rng))) / 1000.0;
      if (random_p) inst.success_probs(u, v) = 0.2 + 0.8 * unit(rng);
    }
  return inst;
}

// Builds the dense LP  max sum w p f  s.t.  per-node sum p f <= cap,
// per-type sum f <= r  directly from instance data.
inline reference::DenseLp dense_lp(const MatchingInstance& inst,
                                   const coarsematch::ClusterList* clusters = nullptr) {
  const std::size_t nv = inst.num_donor_types();
  coarsematch::ClusterList groups;
  if (clusters) groups = *clusters;
  else for (std::size_t u = 0; u < inst.num_patients(); ++u) groups.push_back({u});
  struct Var { std::size_t g, v; double obj, coef; };
  std::vector<Var> vars;
  for (std::size_t g = 0; g < groups.size(); ++g)
    for (std::size_t v = 0; v < nv; ++v) {
      double wsum = 0.0, psum = 0.0;
      std::size_t nc = 0;
      for (auto u : groups[g]) {
        wsum += inst.weights(u, v);
        if (inst.compatible(u, v)) {
          psum += inst.success_probs(u, v);
          ++nc;
        }
      }
      if (nc == 0) continue;
      const double wbar = wsum / static_cast<double>(groups[g].size());
      const double pbar = psum / static_cast<double>(nc);
      vars.push_back({g, v, wbar * pbar, pbar});
    }
  reference::DenseLp lp;
  lp.c.resize(vars.size());
  for (std::size_t j = 0; j < vars.size(); ++j) lp.c[j] = vars[j].obj;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    std::vector<double> row(vars.size(), 0.0);
    for (std::size_t j = 0; j < vars.size(); ++j)
      if (vars[j].g == g) row[j] = vars[j].coef;
    lp.a.push_back(row);
    lp.b.push_back(static_cast<double>(groups[g].size()));
  }
  for (std::size_t v = 0; v < nv; ++v) {
    std::vector<double> row(vars.size(), 0.0);
    for (std::size_t j = 0; j < vars.size(); ++j)
      if (vars[j].v == v) row[j] = 1.0;
    lp.a.push_back(row);
    lp.b.push_back(inst.donor_types[v].arrival_rate);
  }
  return lp;
}

// Best total over all injective partial assignments of arrivals to
// patients, by exhaustive recursion.
inline double brute_force_hindsight(const MatchingInstance& inst,
                                    const std::vector<coarsematch::ArrivalEvent>& arrivals,
                                    const coarsematch::EdgeOutcomes& outcomes = {}) {
  std::vector<char> used(inst.num_patients(), 0);
  std::function<double(std::size_t)> rec = [&](std::size_t t) -> double {
    if (t == arrivals.size()) return 0.0;
    double best = rec(t + 1);
    const std::size_t v = arrivals[t].donor_type;
    for (std::size_t u = 0; u < inst.num_patients(); ++u) {
      if (used[u] || !inst.compatible(u, v) || !outcomes.succeeds(inst, u, t, v)) continue;
      used[u] = 1;
      best = std::max(best, inst.weights(u, v) + rec(t + 1));
      used[u] = 0;
    }
    return best;
  };
  return rec(0);
}

inline std::vector<coarsematch::ArrivalEvent> sequence(const std::vector<std::size_t>& types) {
  std::vector<coarsematch::ArrivalEvent> out;
  for (std::size_t t = 0; t < types.size(); ++t) out.push_back({static_cast<int>(t) + 1, types[t]});
  return out;
}

// Each successful record names a distinct patient.
inline bool at_most_once(const std::vector<coarsematch::MatchRecord>& recs) {
  std::vector<std::size_t> seen;
  for (const auto& r : recs)
    if (r.patient && r.success) seen.push_back(*r.patient);
  std::sort(seen.begin(), seen.end());
  return std::adjacent_find(seen.begin(), seen.end()) == seen.end();
}

// Single-type instance: `b` identical patients (weight 1, p = 1) and one
// donor type of rate r = horizon.
inline MatchingInstance homogeneous(std::size_t b, int horizon) {
  MatchingInstance inst;
  inst.horizon = horizon;
  for (std::size_t u = 0; u < b; ++u) {
    coarsematch::PatientNode p;
    p.id = "p" + std::to_string(u);
    inst.patients.push_back(p);
  }
  coarsematch::DonorType d;
  d.id = "d0";
  d.arrival_rate = horizon;
  inst.donor_types.push_back(d);
  inst.weights = coarsematch::Matrix<double>(b, 1, 1.0);
  inst.success_probs = coarsematch::Matrix<double>(b, 1, 1.0);
  inst.compatibility = coarsematch::Mask(b, 1, 1);
  return inst;
}

}  // namespace fixtures
