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

#include "coarsematch.hpp"
#include "support/fixtures.hpp"

namespace cm = coarsematch;

namespace {

cm::PolicyConfig csm(cm::Dispatch d = cm::Dispatch::Discard,
                     cm::IntraCluster s = cm::IntraCluster::UniformRandom) {
  cm::PolicyConfig c;
  c.kind = cm::PolicyKind::Csm;
  c.dispatch = d;
  c.intra_cluster = s;
  return c;
}

// Hand-built plan over singleton offline nodes.
cm::DispatchPlan manual_plan(const cm::Matrix<double>& flows, std::vector<double> rates) {
  cm::DispatchPlan p;
  p.flows = flows;
  p.rates = std::move(rates);
  p.capacities.assign(flows.rows(), 1.0);
  return p;
}

}  // namespace

TEST(Hindsight, MatchesBruteForce) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    std::mt19937_64 rng(seed);
    const std::size_t n = 1 + rng() % 6, nv = 1 + rng() % 3, len = rng() % 7;
    const auto inst = fixtures::random_instance(n, nv, 3, seed, 0.3, seed % 3 == 0);
    std::vector<std::size_t> types(len);
    for (auto& t : types) t = rng() % nv;
    const auto arr = fixtures::sequence(types);
    const cm::EdgeOutcomes outcomes{seed * 31 + 1};
    EXPECT_NEAR(cm::hindsight_optimal(inst, arr, outcomes).total,
                fixtures::brute_force_hindsight(inst, arr, outcomes), 1e-9)
        << "seed " << seed;
  }
}

TEST(Hindsight, SmallExamples) {
  auto one = fixtures::random_instance(1, 2, 2, 1);
  one.weights(0, 0) = 3.0;
  one.weights(0, 1) = 5.0;
  EXPECT_EQ(cm::hindsight_optimal(one, fixtures::sequence({0, 1})).total, 5.0);

  auto two = fixtures::homogeneous(2, 1);
  two.weights(0, 0) = 5.0;
  two.weights(1, 0) = 3.0;
  EXPECT_EQ(cm::hindsight_optimal(two, fixtures::sequence({0})).total, 5.0);
}

TEST(Greedy, NeverBeatsHindsightExhaustively) {
  const auto inst = fixtures::random_instance(6, 2, 4, 42, 0.2);
  std::vector<std::vector<std::size_t>> seqs = {{}};
  for (int len = 1; len <= 4; ++len) {
    std::vector<std::vector<std::size_t>> next;
    for (const auto& s : seqs)
      if (static_cast<int>(s.size()) == len - 1)
        for (std::size_t v = 0; v < 2; ++v) {
          auto t = s;
          t.push_back(v);
          next.push_back(t);
        }
    seqs.insert(seqs.end(), next.begin(), next.end());
  }
  ASSERT_EQ(seqs.size(), 31u);
  for (const auto& s : seqs) {
    const auto arr = fixtures::sequence(s);
    const double opt = fixtures::brute_force_hindsight(inst, arr);
    EXPECT_NEAR(cm::hindsight_optimal(inst, arr).total, opt, 1e-9);
    const auto recs = cm::run_greedy(inst, arr);
    EXPECT_LE(cm::total_utility(recs), opt + 1e-9);
    EXPECT_TRUE(fixtures::at_most_once(recs));
  }
}

TEST(Greedy, Examples) {
  auto inst = fixtures::homogeneous(2, 1);
  inst.weights(0, 0) = 5.0;
  inst.weights(1, 0) = 3.0;
  auto recs = cm::run_greedy(inst, fixtures::sequence({0}));
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_EQ(recs[0].patient, std::optional<std::size_t>(0));
  EXPECT_EQ(recs[0].realized_weight, 5.0);

  // ties go to the lowest id
  inst.weights(0, 0) = 3.0;
  recs = cm::run_greedy(inst, fixtures::sequence({0, 0, 0}));
  EXPECT_EQ(recs[0].patient, std::optional<std::size_t>(0));
  EXPECT_EQ(recs[1].patient, std::optional<std::size_t>(1));
  EXPECT_FALSE(recs[2].patient.has_value());
  EXPECT_EQ(recs[2].realized_weight, 0.0);
}

TEST(Policies, AllDominatedByHindsightAndMatchOnce) {
  const cm::PolicyKind kinds[] = {cm::PolicyKind::SmB, cm::PolicyKind::Csm,
                                  cm::PolicyKind::Greedy, cm::PolicyKind::StatusQuo,
                                  cm::PolicyKind::Random};
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    cm::GeneratorConfig g;
    g.n_patients = 30;
    g.n_clusters_planted = 6;
    g.n_donor_types = 8;
    g.horizon = 25;
    g.noise_delta = 0.1;
    g.success_prob_min = seed % 2 ? 0.5 : 1.0;
    g.seed = seed;
    const auto inst = cm::generate_instance(g).instance;
    const auto cl = cm::cluster_patients(inst, 5, cm::ClusterMethod::ConstrainedKMeans, seed);
    const auto plan = cm::plan_dispatch(inst, &cl);
    const auto plan1 = cm::plan_dispatch(inst);
    const auto arr = cm::sample_arrivals(inst, seed);
    const cm::EdgeOutcomes outcomes{seed + 1000};
    const double opt = cm::hindsight_optimal(inst, arr, outcomes).total;
    for (auto k : kinds)
      for (auto d : {cm::Dispatch::Discard, cm::Dispatch::Resample}) {
        cm::PolicyConfig c;
        c.kind = k;
        c.dispatch = d;
        c.seed = seed;
        const auto& p = k == cm::PolicyKind::SmB ? plan1 : plan;
        const auto recs = cm::run_policy(inst, c, &cl, &p, arr, outcomes);
        ASSERT_EQ(recs.size(), arr.size());
        EXPECT_LE(cm::total_utility(recs), opt + 1e-9) << c.name();
        EXPECT_TRUE(fixtures::at_most_once(recs)) << c.name();
        for (std::size_t t = 0; t < recs.size(); ++t) {
          const auto& r = recs[t];
          EXPECT_EQ(r.round, arr[t].round);
          EXPECT_EQ(r.donor_type, arr[t].donor_type);
          if (!r.patient || !r.success) EXPECT_EQ(r.realized_weight, 0.0);
          else {
            EXPECT_TRUE(inst.compatible(*r.patient, r.donor_type));
            EXPECT_EQ(r.realized_weight, inst.weights(*r.patient, r.donor_type));
          }
        }
      }
  }
}

TEST(Csm, SingletonClusteringReproducesSmB) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto inst = fixtures::random_instance(15, 5, 20, seed, 0.3, true);
    const auto cl = cm::cluster_patients(inst, 1, cm::ClusterMethod::ConstrainedKMeans, seed);
    const auto plan_c = cm::plan_dispatch(inst, &cl);
    const auto plan_u = cm::plan_dispatch(inst);
    ASSERT_EQ(plan_c.flows, plan_u.flows);
    const auto arr = cm::sample_arrivals(inst, seed);
    const cm::EdgeOutcomes outcomes{seed};
    for (auto d : {cm::Dispatch::Discard, cm::Dispatch::Resample}) {
      const auto a = cm::run_sm_b(inst, plan_u, arr, 99, nullptr, d, outcomes);
      const auto b = cm::run_csm(inst, cl, plan_c, arr, csm(d), 99, outcomes);
      ASSERT_EQ(a.size(), b.size());
      for (std::size_t t = 0; t < a.size(); ++t) {
        EXPECT_EQ(a[t].patient, b[t].patient);
        EXPECT_EQ(a[t].success, b[t].success);
        EXPECT_EQ(a[t].realized_weight, b[t].realized_weight);
      }
    }
  }
}

TEST(Csm, ResampleNeverDiscardsWhileCandidateExists) {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const auto inst = fixtures::random_instance(20, 4, 40, seed, 0.4);
    const auto cl = cm::cluster_patients(inst, 4, cm::ClusterMethod::ConstrainedKMeans, seed);
    const auto plan = cm::plan_dispatch(inst, &cl);
    const auto arr = cm::sample_arrivals(inst, seed);
    const auto recs = cm::run_csm(inst, cl, plan, arr, csm(cm::Dispatch::Resample), seed);
    std::vector<char> taken(inst.num_patients(), 0);
    for (const auto& r : recs) {
      if (!r.patient) {
        for (std::size_t u = 0; u < inst.num_patients(); ++u)
          EXPECT_FALSE(!taken[u] && inst.compatible(u, r.donor_type))
              << "discarded while patient " << u << " was free";
      } else if (r.success) {
        taken[*r.patient] = 1;
      }
    }
  }
}

TEST(Csm, DiscardAfterExhaustion) {
  // f = r = 3 on the only edge; the cluster holds 3 patients
  auto inst = fixtures::homogeneous(3, 3);
  const auto cl = cm::cluster_patients(inst, 3, cm::ClusterMethod::ConstrainedKMeans, 0);
  const auto plan = cm::plan_dispatch(inst, &cl);
  ASSERT_NEAR(plan.flows(0, 0), 3.0, 1e-12);
  const auto recs = cm::run_csm(inst, cl, plan, fixtures::sequence({0, 0, 0, 0, 0}), csm(), 5);
  for (int t = 0; t < 3; ++t) EXPECT_TRUE(recs[t].patient.has_value());
  for (int t = 3; t < 5; ++t) EXPECT_FALSE(recs[t].patient.has_value());
  EXPECT_EQ(cm::total_utility(recs), 3.0);
}

TEST(SmB, FullFlowMatchesUntilCapacity) {
  const auto inst = fixtures::homogeneous(1, 1);
  const auto plan = cm::plan_dispatch(inst);
  const auto recs = cm::run_sm_b(inst, plan, fixtures::sequence({0, 0}), 1);
  EXPECT_EQ(recs[0].patient, std::optional<std::size_t>(0));
  EXPECT_FALSE(recs[1].patient.has_value());
}

TEST(SmB, ZeroFlowNeverMatches) {
  const auto inst = fixtures::random_instance(4, 2, 6, 3);
  const auto plan = manual_plan(cm::Matrix<double>(4, 2, 0.0), {3.0, 3.0});
  for (auto d : {cm::Dispatch::Discard}) {
    const auto recs = cm::run_sm_b(inst, plan, cm::sample_arrivals(inst, 1), 1, nullptr, d);
    for (const auto& r : recs) EXPECT_FALSE(r.patient.has_value());
  }
}

TEST(SmB, OneCategoricalDrawPerArrival) {
  const auto inst = fixtures::homogeneous(3, 1);
  cm::Matrix<double> f(3, 1);
  f(0, 0) = 0.2;
  f(1, 0) = 0.3;
  f(2, 0) = 0.1;
  const auto plan = manual_plan(f, {1.0});
  const int n = 20000;
  std::array<int, 4> count{};
  for (int s = 0; s < n; ++s) {
    const auto recs = cm::run_sm_b(inst, plan, fixtures::sequence({0}), s);
    ++count[recs[0].patient ? *recs[0].patient : 3];
  }
  const double expected[] = {0.2, 0.3, 0.1, 0.4};
  for (int i = 0; i < 4; ++i) {
    const double sd = std::sqrt(expected[i] * (1 - expected[i]) / n);
    EXPECT_NEAR(count[i] / static_cast<double>(n), expected[i], 4 * sd) << i;
  }
}

TEST(SmB, FlowAboveRateIsPlanMismatch) {
  const auto inst = fixtures::homogeneous(2, 1);
  cm::Matrix<double> f(2, 1, 0.0);
  f(0, 0) = 1.5;
  EXPECT_THROW(cm::run_sm_b(inst, manual_plan(f, {1.0}), fixtures::sequence({0}), 0),
               cm::PlanMismatchError);
}

TEST(Csm, ClusteringPlanMismatch) {
  const auto inst = fixtures::random_instance(10, 3, 5, 1);
  const auto cl5 = cm::cluster_patients(inst, 5, cm::ClusterMethod::ConstrainedKMeans, 0);
  const auto cl2 = cm::cluster_patients(inst, 2, cm::ClusterMethod::ConstrainedKMeans, 0);
  const auto plan5 = cm::plan_dispatch(inst, &cl5);
  EXPECT_THROW(cm::run_csm(inst, cl2, plan5, fixtures::sequence({0}), csm(), 0),
               cm::PlanMismatchError);
  EXPECT_THROW(cm::run_policy(inst, csm(), nullptr, &plan5, fixtures::sequence({0})),
               cm::PlanMismatchError);
}

TEST(Csm, UtilityUsesTrueWeights) {
  // cluster {1, 9}: representative 5, the true weight decides the reward
  auto inst = fixtures::homogeneous(2, 2);
  inst.weights(0, 0) = 1.0;
  inst.weights(1, 0) = 9.0;
  const auto cl = cm::cluster_patients(inst, 2, cm::ClusterMethod::ConstrainedKMeans, 0);
  EXPECT_EQ(cl.representative_weights(0, 0), 5.0);
  const auto plan = cm::plan_dispatch(inst, &cl);
  const auto recs = cm::run_csm(inst, cl, plan, fixtures::sequence({0, 0}), csm(), 0);
  EXPECT_EQ(cm::total_utility(recs), 10.0);
  const auto greedy = cm::run_csm(inst, cl, plan, fixtures::sequence({0}),
                                  csm(cm::Dispatch::Discard, cm::IntraCluster::Greedy), 0);
  EXPECT_EQ(greedy[0].patient, std::optional<std::size_t>(1));
  EXPECT_EQ(greedy[0].realized_weight, 9.0);
}

TEST(Csm, PlantedClustersBeatSingletons) {
  // 4 groups x 25 identical patients; type g values group g most
  const std::size_t groups = 4, per = 25, n = groups * per;
  const int horizon = 100;
  auto inst = fixtures::random_instance(n, groups, horizon, 1);
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t v = 0; v < groups; ++v)
      inst.weights(u, v) = (u / per == v) ? 10.0 : 1.0 + static_cast<double>((u / per + v) % 4);
  for (std::size_t v = 0; v < groups; ++v)
    inst.donor_types[v].arrival_rate = static_cast<double>(horizon) / groups;
  const auto cl25 = cm::cluster_patients(inst, 25, cm::ClusterMethod::ConstrainedKMeans, 0);
  ASSERT_EQ(cl25.delta_max, 0.0);
  const auto cl1 = cm::cluster_patients(inst, 1, cm::ClusterMethod::ConstrainedKMeans, 0);
  const auto p25 = cm::plan_dispatch(inst, &cl25);
  const auto p1 = cm::plan_dispatch(inst, &cl1);
  double s25 = 0.0, s1 = 0.0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto arr = cm::sample_arrivals(inst, seed);
    const double opt = cm::hindsight_optimal(inst, arr).total;
    s25 += cm::total_utility(cm::run_csm(inst, cl25, p25, arr, csm(), seed)) / opt;
    s1 += cm::total_utility(cm::run_csm(inst, cl1, p1, arr, csm(), seed)) / opt;
  }
  EXPECT_GT(s25, s1);
}

TEST(StatusQuo, HigherStatusWins) {
  auto inst = fixtures::homogeneous(2, 1);
  inst.patients[0].status = 6;
  inst.patients[1].status = 1;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto recs = cm::run_status_quo(inst, fixtures::sequence({0}), s);
    EXPECT_EQ(recs[0].patient, std::optional<std::size_t>(1));
  }
}

TEST(StatusQuo, IncompatibleDiscards) {
  auto inst = fixtures::homogeneous(2, 1);
  inst.donor_types[0].blood_type = cm::BloodType::AB;
  for (auto& p : inst.patients) p.blood_type = cm::BloodType::O;
  inst.compatibility = cm::Mask(2, 1, 0);
  inst.weights = cm::Matrix<double>(2, 1, 0.0);
  const auto recs = cm::run_status_quo(inst, fixtures::sequence({0, 0}), 3);
  for (const auto& r : recs) EXPECT_FALSE(r.patient.has_value());
}

TEST(StatusQuo, TiesSpreadUniformly) {
  auto inst = fixtures::homogeneous(2, 1);
  int first = 0;
  const int n = 4000;
  for (int s = 0; s < n; ++s)
    first += *cm::run_status_quo(inst, fixtures::sequence({0}), s)[0].patient == 0;
  EXPECT_NEAR(first / static_cast<double>(n), 0.5, 4 * std::sqrt(0.25 / n));
}

TEST(Random, Deterministic) {
  const auto inst = fixtures::random_instance(10, 3, 10, 1, 0.2);
  const auto arr = cm::sample_arrivals(inst, 4);
  const auto a = cm::run_random(inst, arr, 12), b = cm::run_random(inst, arr, 12);
  for (std::size_t t = 0; t < a.size(); ++t) EXPECT_EQ(a[t].patient, b[t].patient);
}

TEST(EdgeOutcomes, SharedAcrossCalls) {
  const auto inst = fixtures::random_instance(3, 2, 3, 1, 0.0, true);
  const cm::EdgeOutcomes o{77};
  int hits = 0;
  for (std::size_t t = 0; t < 1000; ++t) {
    EXPECT_EQ(o.succeeds(inst, 1, t, 0), o.succeeds(inst, 1, t, 0));
    hits += o.succeeds(inst, 1, t, 0);
  }
  const double p = inst.success_probs(1, 0);
  EXPECT_NEAR(hits / 1000.0, p, 4 * std::sqrt(p * (1 - p) / 1000));
}

TEST(PolicyConfig, Names) {
  EXPECT_EQ(csm(cm::Dispatch::Resample, cm::IntraCluster::Greedy).name(), "csm-resample-greedy");
  cm::PolicyConfig g;
  g.kind = cm::PolicyKind::Greedy;
  EXPECT_EQ(g.name(), "greedy");
}
