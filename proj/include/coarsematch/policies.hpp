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

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "coarsematch/assignment.hpp"
#include "coarsematch/clustering.hpp"
#include "coarsematch/error.hpp"
#include "coarsematch/instance.hpp"
#include "coarsematch/lp.hpp"
#include "coarsematch/random.hpp"
#include "coarsematch/status_quo.hpp"

namespace coarsematch {

enum class PolicyKind { SmB, Csm, Greedy, StatusQuo, Random };
enum class Dispatch { Discard, Resample };
enum class IntraCluster { UniformRandom, Greedy };

inline std::string_view to_string(PolicyKind k) {
  switch (k) {
    case PolicyKind::SmB: return "sm_b";
    case PolicyKind::Csm: return "csm";
    case PolicyKind::Greedy: return "greedy";
    case PolicyKind::StatusQuo: return "status_quo";
    case PolicyKind::Random: return "random";
  }
  return "?";
}
inline std::string_view to_string(Dispatch d) {
  return d == Dispatch::Discard ? "discard" : "resample";
}
inline std::string_view to_string(IntraCluster s) {
  return s == IntraCluster::UniformRandom ? "uniform_random" : "greedy";
}

inline std::optional<PolicyKind> parse_policy_kind(std::string_view s) {
  for (auto k : {PolicyKind::SmB, PolicyKind::Csm, PolicyKind::Greedy,
                 PolicyKind::StatusQuo, PolicyKind::Random})
    if (s == to_string(k)) return k;
  return std::nullopt;
}
inline std::optional<Dispatch> parse_dispatch(std::string_view s) {
  if (s == "discard") return Dispatch::Discard;
  if (s == "resample") return Dispatch::Resample;
  return std::nullopt;
}
inline std::optional<IntraCluster> parse_intra_cluster(std::string_view s) {
  if (s == "uniform_random" || s == "uniform") return IntraCluster::UniformRandom;
  if (s == "greedy") return IntraCluster::Greedy;
  return std::nullopt;
}

struct PolicyConfig {
  PolicyKind kind = PolicyKind::Csm;
  Dispatch dispatch = Dispatch::Discard;            // sm_b / csm only
  IntraCluster intra_cluster = IntraCluster::UniformRandom;  // csm only
  std::uint64_t seed = 0;

  bool uses_plan() const noexcept {
    return kind == PolicyKind::SmB || kind == PolicyKind::Csm;
  }
  // Stable label, used in file names and to derive per-policy seeds.
  std::string name() const {
    std::string s(to_string(kind));
    if (uses_plan()) s += "-" + std::string(to_string(dispatch));
    if (kind == PolicyKind::Csm) s += "-" + std::string(to_string(intra_cluster));
    return s;
  }
};

struct MatchRecord {
  int round = 0;
  std::size_t donor_type = 0;
  std::optional<std::size_t> patient;  // nullopt: organ discarded
  double realized_weight = 0.0;        // true w, 0 unless matched and successful
  bool success = false;
};

// Edge-failure realizations shared by every policy and the hindsight oracle
// of one replication. Whether the offer of arrival t to patient u succeeds
// is a pure function of (seed, u, t), so paired policies see the same world.
struct EdgeOutcomes {
  std::uint64_t seed = 0;

  bool succeeds(const MatchingInstance& inst, std::size_t u, std::size_t arrival,
                std::size_t v) const {
    const double p = inst.success_probs(u, v);
    if (p >= 1.0) return true;
    if (p <= 0.0) return false;
    const std::uint64_t h = derive_seed(seed, {u, arrival});
    return static_cast<double>(h >> 11) * 0x1.0p-53 < p;
  }
};

inline double total_utility(const std::vector<MatchRecord>& records) {
  double s = 0.0;
  for (const auto& r : records) s += r.realized_weight;
  return s;
}

namespace detail {

enum class MemberSelection { LowestId, UniformRandom, Greedy };

class PatientPool {
 public:
  explicit PatientPool(std::size_t n) : free_(n, 1) {}
  bool is_free(std::size_t u) const { return free_[u] != 0; }
  void take(std::size_t u) { free_[u] = 0; }

 private:
  std::vector<unsigned char> free_;
};

inline std::vector<std::size_t> free_compatible(const MatchingInstance& inst,
                                                const PatientPool& pool,
                                                const std::vector<std::size_t>& members,
                                                std::size_t v) {
  std::vector<std::size_t> out;
  for (auto u : members)
    if (pool.is_free(u) && inst.compatible(u, v)) out.push_back(u);
  return out;
}

inline bool any_free_compatible(const MatchingInstance& inst, const PatientPool& pool,
                                const std::vector<std::size_t>& members,
                                std::size_t v) {
  for (auto u : members)
    if (pool.is_free(u) && inst.compatible(u, v)) return true;
  return false;
}

inline MatchRecord offer(const MatchingInstance& inst, PatientPool& pool,
                         const EdgeOutcomes& outcomes, std::size_t t,
                         const ArrivalEvent& a, std::optional<std::size_t> u) {
  MatchRecord rec{a.round, a.donor_type, u, 0.0, false};
  if (!u) return rec;
  rec.success = outcomes.succeeds(inst, *u, t, a.donor_type);
  if (rec.success) {
    rec.realized_weight = inst.weights(*u, a.donor_type);
    pool.take(*u);
  }
  return rec;
}

inline void check_plan_rates(const DispatchPlan& plan) {
  for (std::size_t u = 0; u < plan.num_offline(); ++u)
    for (std::size_t v = 0; v < plan.num_online(); ++v) {
      const double r = plan.rates[v];
      if (plan.flows(u, v) > r + 1e-8 * std::max(1.0, r))
        throw PlanMismatchError("plan inconsistency: flow " +
                                std::to_string(plan.flows(u, v)) + " on edge (" +
                                std::to_string(u) + ", " + std::to_string(v) +
                                ") exceeds arrival rate " + std::to_string(r));
    }
}

// Shared online phase of SM_b and CSM. Each arrival of type v picks offline
// node u with probability f_{u,v} / r_v (nodes scanned in ascending id, at
// most one pick per arrival), then a free compatible member of u. Every
// arrival draws from its own stream derived from (seed, arrival index).
inline std::vector<MatchRecord> run_lp_dispatch(
    const MatchingInstance& inst, const DispatchPlan& plan,
    const ClusterList& groups, const std::vector<ArrivalEvent>& arrivals,
    Dispatch dispatch, MemberSelection selection, std::uint64_t seed,
    const EdgeOutcomes& outcomes) {
  if (plan.num_online() != inst.num_donor_types() || plan.num_offline() != groups.size())
    throw PlanMismatchError("dispatch: plan dimensions do not match the offline groups");
  check_plan_rates(plan);

  PatientPool pool(inst.num_patients());
  std::vector<MatchRecord> out;
  out.reserve(arrivals.size());
  const std::size_t n_groups = groups.size();

  for (std::size_t t = 0; t < arrivals.size(); ++t) {
    const ArrivalEvent& a = arrivals[t];
    const std::size_t v = a.donor_type;
    Rng rng(derive_seed(seed, {t}));
    const double rate = plan.rates[v];

    std::optional<std::size_t> chosen;
    const double x = uniform01(rng);
    if (rate > 0.0) {
      double cum = 0.0;
      for (std::size_t g = 0; g < n_groups; ++g) {
        const double f = plan.flows(g, v);
        if (f <= 0.0) continue;
        cum += f / rate;
        if (x < cum) {
          chosen = g;
          break;
        }
      }
    }

    if (chosen && !any_free_compatible(inst, pool, groups[*chosen], v)) {
      // Indeterminate match: the node's budget is spent.
      chosen.reset();
      if (dispatch == Dispatch::Discard) {
        out.push_back(offer(inst, pool, outcomes, t, a, std::nullopt));
        continue;
      }
    }
    if (!chosen && dispatch == Dispatch::Resample) {
      std::vector<std::size_t> cand;
      double mass = 0.0;
      for (std::size_t g = 0; g < n_groups; ++g)
        if (any_free_compatible(inst, pool, groups[g], v)) {
          cand.push_back(g);
          mass += plan.flows(g, v);
        }
      if (!cand.empty()) {
        if (mass > 0.0) {
          const double y = uniform01(rng) * mass;
          double cum = 0.0;
          for (auto g : cand) {
            cum += plan.flows(g, v);
            if (y < cum) {
              chosen = g;
              break;
            }
          }
          if (!chosen)  // rounding at the tail
            for (auto it = cand.rbegin(); it != cand.rend(); ++it)
              if (plan.flows(*it, v) > 0.0) {
                chosen = *it;
                break;
              }
        } else {
          chosen = cand[uniform_index(rng, cand.size())];
        }
      }
    }
    if (!chosen) {
      out.push_back(offer(inst, pool, outcomes, t, a, std::nullopt));
      continue;
    }

    const auto members = free_compatible(inst, pool, groups[*chosen], v);
    std::size_t pick = members.front();
    if (members.size() > 1) {
      switch (selection) {
        case MemberSelection::LowestId: break;
        case MemberSelection::UniformRandom:
          pick = members[uniform_index(rng, members.size())];
          break;
        case MemberSelection::Greedy: {
          double best = -1.0;
          for (auto u : members)
            if (inst.weights(u, v) > best) {
              best = inst.weights(u, v);
              pick = u;
            }
          break;
        }
      }
    }
    out.push_back(offer(inst, pool, outcomes, t, a, pick));
  }
  return out;
}

inline ClusterList singleton_groups(std::size_t n) {
  ClusterList g(n);
  for (std::size_t u = 0; u < n; ++u) g[u] = {u};
  return g;
}

inline void check_clustering_matches_plan(const MatchingInstance& inst,
                                          const Clustering& clustering,
                                          const DispatchPlan& plan) {
  if (clustering.assignments.size() != inst.num_patients())
    throw PlanMismatchError("clustering does not cover this instance's patients");
  if (plan.num_offline() != clustering.num_clusters())
    throw PlanMismatchError("plan has " + std::to_string(plan.num_offline()) +
                            " offline nodes but the clustering has " +
                            std::to_string(clustering.num_clusters()) + " clusters");
  for (std::size_t c = 0; c < clustering.num_clusters(); ++c)
    if (plan.capacities[c] != static_cast<double>(clustering.size_of(c)))
      throw PlanMismatchError("plan capacity of cluster " + std::to_string(c) +
                              " differs from its size");
}

}  // namespace detail

// SM_b. With an unclustered plan every patient is an offline node of
// capacity 1; with a clustered plan the cluster members are treated as
// interchangeable copies and the lowest-id free compatible one is used.
inline std::vector<MatchRecord> run_sm_b(const MatchingInstance& inst,
                                         const DispatchPlan& plan,
                                         const std::vector<ArrivalEvent>& arrivals,
                                         std::uint64_t seed,
                                         const Clustering* clustering = nullptr,
                                         Dispatch dispatch = Dispatch::Discard,
                                         const EdgeOutcomes& outcomes = {}) {
  if (plan.clustered) {
    if (!clustering) throw PlanMismatchError("run_sm_b: clustered plan without clustering");
    detail::check_clustering_matches_plan(inst, *clustering, plan);
    return detail::run_lp_dispatch(inst, plan, clustering->clusters, arrivals, dispatch,
                                   detail::MemberSelection::LowestId, seed, outcomes);
  }
  return detail::run_lp_dispatch(inst, plan, detail::singleton_groups(inst.num_patients()),
                                 arrivals, dispatch, detail::MemberSelection::LowestId,
                                 seed, outcomes);
}

// CSM: route to a cluster by the LP over representative weights, then pick a
// free compatible member (uniformly or greedily by true weight). Utility is
// always the chosen patient's true weight.
inline std::vector<MatchRecord> run_csm(const MatchingInstance& inst,
                                        const Clustering& clustering,
                                        const DispatchPlan& plan,
                                        const std::vector<ArrivalEvent>& arrivals,
                                        const PolicyConfig& config, std::uint64_t seed,
                                        const EdgeOutcomes& outcomes = {}) {
  detail::check_clustering_matches_plan(inst, clustering, plan);
  const auto sel = config.intra_cluster == IntraCluster::Greedy
                       ? detail::MemberSelection::Greedy
                       : detail::MemberSelection::UniformRandom;
  return detail::run_lp_dispatch(inst, plan, clustering.clusters, arrivals,
                                 config.dispatch, sel, seed, outcomes);
}

// Each arrival goes to the free compatible patient with the largest w * p
// (lowest id on ties); discarded if no such patient has positive value.
inline std::vector<MatchRecord> run_greedy(const MatchingInstance& inst,
                                           const std::vector<ArrivalEvent>& arrivals,
                                           const EdgeOutcomes& outcomes = {}) {
  detail::PatientPool pool(inst.num_patients());
  std::vector<MatchRecord> out;
  out.reserve(arrivals.size());
  for (std::size_t t = 0; t < arrivals.size(); ++t) {
    const std::size_t v = arrivals[t].donor_type;
    std::optional<std::size_t> best;
    double best_val = 0.0;
    for (std::size_t u = 0; u < inst.num_patients(); ++u) {
      if (!pool.is_free(u) || !inst.compatible(u, v)) continue;
      const double val = inst.weights(u, v) * inst.success_probs(u, v);
      if (val > best_val) {
        best_val = val;
        best = u;
      }
    }
    out.push_back(detail::offer(inst, pool, outcomes, t, arrivals[t], best));
  }
  return out;
}

// Tiered priority: lowest tier number wins; ties within a tier are broken
// uniformly at random from the arrival's stream.
inline std::vector<MatchRecord> run_status_quo(const MatchingInstance& inst,
                                               const std::vector<ArrivalEvent>& arrivals,
                                               std::uint64_t seed,
                                               const EdgeOutcomes& outcomes = {}) {
  detail::PatientPool pool(inst.num_patients());
  std::vector<MatchRecord> out;
  out.reserve(arrivals.size());
  for (std::size_t t = 0; t < arrivals.size(); ++t) {
    const std::size_t v = arrivals[t].donor_type;
    const DonorType& donor = inst.donor_types[v];
    int best_tier = 0;
    std::vector<std::size_t> tied;
    for (std::size_t u = 0; u < inst.num_patients(); ++u) {
      if (!pool.is_free(u) || !inst.compatible(u, v)) continue;
      const auto tier = status_quo_tier(inst.patients[u], donor);
      if (!tier) continue;
      if (tied.empty() || *tier < best_tier) {
        best_tier = *tier;
        tied.assign(1, u);
      } else if (*tier == best_tier) {
        tied.push_back(u);
      }
    }
    std::optional<std::size_t> pick;
    if (!tied.empty()) {
      Rng rng(derive_seed(seed, {t}));
      pick = tied.size() == 1 ? tied.front() : tied[uniform_index(rng, tied.size())];
    }
    out.push_back(detail::offer(inst, pool, outcomes, t, arrivals[t], pick));
  }
  return out;
}

// Uniformly random free compatible patient.
inline std::vector<MatchRecord> run_random(const MatchingInstance& inst,
                                           const std::vector<ArrivalEvent>& arrivals,
                                           std::uint64_t seed,
                                           const EdgeOutcomes& outcomes = {}) {
  detail::PatientPool pool(inst.num_patients());
  std::vector<MatchRecord> out;
  out.reserve(arrivals.size());
  for (std::size_t t = 0; t < arrivals.size(); ++t) {
    const std::size_t v = arrivals[t].donor_type;
    std::vector<std::size_t> cand;
    for (std::size_t u = 0; u < inst.num_patients(); ++u)
      if (pool.is_free(u) && inst.compatible(u, v)) cand.push_back(u);
    std::optional<std::size_t> pick;
    if (!cand.empty()) {
      Rng rng(derive_seed(seed, {t}));
      pick = cand[uniform_index(rng, cand.size())];
    }
    out.push_back(detail::offer(inst, pool, outcomes, t, arrivals[t], pick));
  }
  return out;
}

struct HindsightResult {
  double total = 0.0;
  std::vector<std::optional<std::size_t>> patient_of_arrival;
};

// Omniscient benchmark: maximum-weight matching between the realized
// arrivals and the patients. An (arrival, patient) pair is worth w only if
// compatible and its shared edge outcome succeeds.
inline HindsightResult hindsight_optimal(const MatchingInstance& inst,
                                         const std::vector<ArrivalEvent>& arrivals,
                                         const EdgeOutcomes& outcomes = {}) {
  Matrix<double> w(arrivals.size(), inst.num_patients(), 0.0);
  for (std::size_t t = 0; t < arrivals.size(); ++t) {
    const std::size_t v = arrivals[t].donor_type;
    for (std::size_t u = 0; u < inst.num_patients(); ++u)
      if (inst.compatible(u, v) && outcomes.succeeds(inst, u, t, v))
        w(t, u) = inst.weights(u, v);
  }
  const AssignmentResult a = max_weight_matching(w);
  HindsightResult r;
  r.total = a.total;
  r.patient_of_arrival.resize(arrivals.size());
  for (std::size_t t = 0; t < arrivals.size(); ++t)
    if (a.row_to_col[t] != AssignmentResult::npos) r.patient_of_arrival[t] = a.row_to_col[t];
  return r;
}

// Runs any configured policy. `clustering`/`plan` are required for sm_b and
// csm and ignored otherwise.
inline std::vector<MatchRecord> run_policy(const MatchingInstance& inst,
                                           const PolicyConfig& config,
                                           const Clustering* clustering,
                                           const DispatchPlan* plan,
                                           const std::vector<ArrivalEvent>& arrivals,
                                           const EdgeOutcomes& outcomes = {}) {
  switch (config.kind) {
    case PolicyKind::SmB:
      if (!plan) throw PlanMismatchError("sm_b requires a plan");
      return run_sm_b(inst, *plan, arrivals, config.seed, clustering, config.dispatch,
                      outcomes);
    case PolicyKind::Csm:
      if (!plan || !clustering) throw PlanMismatchError("csm requires a clustering and a plan");
      return run_csm(inst, *clustering, *plan, arrivals, config, config.seed, outcomes);
    case PolicyKind::Greedy: return run_greedy(inst, arrivals, outcomes);
    case PolicyKind::StatusQuo: return run_status_quo(inst, arrivals, config.seed, outcomes);
    case PolicyKind::Random: return run_random(inst, arrivals, config.seed, outcomes);
  }
  return {};
}

}  // namespace coarsematch
