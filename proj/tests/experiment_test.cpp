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

#include <filesystem>

#include "coarsematch.hpp"
#include "support/fixtures.hpp"

namespace cm = coarsematch;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / "coarsematch_experiment_test" / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

cm::GeneratorConfig generator() {
  cm::GeneratorConfig g;
  g.n_patients = 40;
  g.n_clusters_planted = 8;
  g.n_donor_types = 10;
  g.horizon = 30;
  g.noise_delta = 0.05;
  g.seed = 3;
  return g;
}

cm::PolicyConfig policy(cm::PolicyKind k) {
  cm::PolicyConfig p;
  p.kind = k;
  return p;
}

cm::ScenarioConfig scenario(const fs::path& out) {
  cm::ScenarioConfig c;
  c.generator = generator();
  c.b_grid = {5};
  c.policies = {policy(cm::PolicyKind::Csm), policy(cm::PolicyKind::Greedy)};
  c.n_replications = 20;
  c.output_dir = out.string();
  c.master_seed = 11;
  c.threads = 4;
  return c;
}

}  // namespace

TEST(Scenario, SingleCellMatchesManualRun) {
  auto cfg = scenario({});
  cfg.policies = {policy(cm::PolicyKind::Csm)};
  cfg.n_replications = 1;
  const auto art = cm::run_scenario(cfg);
  ASSERT_EQ(art.runs.size(), 1u);

  const cm::SeedPlan seeds{cfg.master_seed};
  const auto inst = cm::generate_instance(generator()).instance;
  const auto cl = cm::cluster_patients(inst, 5, cm::ClusterMethod::ConstrainedKMeans,
                                       seeds.clustering(5, cm::ClusterMethod::ConstrainedKMeans));
  const auto plan = cm::plan_dispatch(inst, &cl);
  const auto arr = cm::sample_arrivals(inst, seeds.arrivals(0));
  const cm::EdgeOutcomes out{seeds.outcomes(0)};
  auto pc = policy(cm::PolicyKind::Csm);
  pc.seed = seeds.policy(pc, 5, cm::ClusterMethod::ConstrainedKMeans, 0);
  const double alg = cm::total_utility(cm::run_policy(inst, pc, &cl, &plan, arr, out));
  const double opt = cm::hindsight_optimal(inst, arr, out).total;
  EXPECT_EQ(art.runs[0].alg, alg);
  EXPECT_EQ(art.runs[0].opt, opt);
  EXPECT_EQ(art.runs[0].ratio, alg / opt);
}

TEST(Scenario, WritesRunFilesAndSummaries) {
  const auto dir = fresh_dir("files");
  const auto art = cm::run_scenario(scenario(dir));
  std::size_t n_runs = 0;
  for (const auto& e : fs::directory_iterator(dir / "runs")) n_runs += e.is_regular_file();
  EXPECT_EQ(n_runs, 40u);
  EXPECT_EQ(art.summaries.size(), 2u);
  for (const char* f : {"scenario.json", "instance.json", "runs.csv", "summary.csv",
                        "bounds.csv", "timing.csv", "failures.csv", "arrivals/rep_0.csv"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  EXPECT_TRUE(art.failures.empty());
}

TEST(Scenario, PoliciesShareArrivals) {
  const auto art = cm::run_scenario(scenario({}));
  for (const auto& a : art.runs)
    for (const auto& b : art.runs)
      if (a.replication == b.replication) {
        EXPECT_EQ(a.arrivals, b.arrivals);
        EXPECT_EQ(a.opt, b.opt);
      }
}

TEST(Scenario, RerunIsReproducible) {
  const auto d1 = fresh_dir("rerun1"), d2 = fresh_dir("rerun2");
  auto c1 = scenario(d1), c2 = scenario(d2);
  c2.threads = 1;
  const auto a = cm::run_scenario(c1), b = cm::run_scenario(c2);
  EXPECT_EQ(a.scenario_hash, b.scenario_hash);
  ASSERT_EQ(a.runs.size(), b.runs.size());
  for (std::size_t i = 0; i < a.runs.size(); ++i) {
    EXPECT_EQ(a.runs[i].alg, b.runs[i].alg);
    EXPECT_EQ(a.runs[i].seed, b.runs[i].seed);
  }
  for (const auto& e : fs::directory_iterator(d1 / "runs")) {
    const auto other = d2 / "runs" / e.path().filename();
    ASSERT_TRUE(fs::exists(other));
    EXPECT_EQ(cm::read_csv(e.path()).rows, cm::read_csv(other).rows);
  }
}

TEST(Scenario, SummaryRecomputesFromRunFiles) {
  const auto dir = fresh_dir("recompute");
  const auto art = cm::run_scenario(scenario(dir));
  const auto runs = cm::runs_from_table(cm::read_csv(dir / "runs.csv"));
  for (const auto& s : art.summaries) {
    std::vector<double> ratios;
    for (const auto& r : runs) {
      if (r.policy != s.policy || r.b != s.b) continue;
      const auto recs = cm::records_from_table(cm::read_csv(dir / r.file));
      ratios.push_back(cm::total_utility(recs) / r.opt);
    }
    ASSERT_EQ(ratios.size(), 20u);
    EXPECT_NEAR(cm::mean(ratios), s.mean, 1e-12);
  }
}

TEST(Scenario, JsonRoundTripKeepsHash) {
  auto cfg = scenario({});
  cfg.replan_psi_threshold = 0.2;
  const auto back = cm::scenario_from_json(cm::to_json(cfg));
  EXPECT_EQ(cm::scenario_hash(back), cm::scenario_hash(cfg));
  cfg.master_seed = 12;
  EXPECT_NE(cm::scenario_hash(back), cm::scenario_hash(cfg));
}

TEST(Scenario, FailingCellIsIsolated) {
  const auto dir = fresh_dir("failure");
  auto cfg = scenario(dir);
  cfg.b_grid = {5, 41};  // 41 > n
  const auto art = cm::run_scenario(cfg);
  ASSERT_EQ(art.failures.size(), 1u);
  EXPECT_EQ(art.failures[0].b, 41u);
  EXPECT_EQ(art.failures[0].stage, "cluster");
  EXPECT_EQ(art.summaries.size(), 2u);
  EXPECT_EQ(cm::read_csv(dir / "failures.csv").rows.size(), 1u);
}

TEST(Scenario, InvalidConfigRejected) {
  auto cfg = scenario({});
  cfg.n_replications = 0;
  EXPECT_THROW(cm::run_scenario(cfg), cm::ValidationError);
}

TEST(Scenario, PValuesAgainstSmallestB) {
  auto cfg = scenario({});
  cfg.b_grid = {1, 5};
  cfg.policies = {policy(cm::PolicyKind::Csm)};
  const auto art = cm::run_scenario(cfg);
  ASSERT_EQ(art.summaries.size(), 2u);
  const cm::RatioSummary* s1 = nullptr;
  const cm::RatioSummary* s5 = nullptr;
  for (const auto& s : art.summaries) (s.b == 1 ? s1 : s5) = &s;
  ASSERT_TRUE(s1 && s5);
  EXPECT_NEAR(s5->p_value, cm::wilcoxon_signed_rank(s5->per_seed_ratios, s1->per_seed_ratios),
              1e-15);
}

TEST(Drift, IdenticalPopulationDoesNotReplan) {
  const auto inst = cm::generate_instance(generator()).instance;
  cm::DriftMonitor mon(inst, 5, cm::ClusterMethod::ConstrainedKMeans, 1);
  EXPECT_FALSE(cm::replan_on_drift(mon, inst, 0.1).has_value());
  EXPECT_LT(mon.drift(inst).value, 1e-9);
}

TEST(Drift, ShiftedPopulationReplans) {
  const auto inst = cm::generate_instance(generator()).instance;
  cm::DriftMonitor mon(inst, 5, cm::ClusterMethod::ConstrainedKMeans, 1);
  auto shifted = inst;
  for (double& w : shifted.weights.data()) w *= 3.0;
  const auto r = cm::replan_on_drift(mon, shifted, 0.25);
  ASSERT_TRUE(r.has_value());
  EXPECT_GE(r->psi, 0.25);
  for (const auto& c : r->clustering.clusters) EXPECT_GE(c.size(), 5u);
  EXPECT_EQ(r->plan.num_offline(), r->clustering.num_clusters());
  // baseline now follows the new population
  EXPECT_FALSE(cm::replan_on_drift(mon, shifted, 0.25).has_value());
}

TEST(Drift, ZeroThresholdAlwaysReplans) {
  const auto inst = cm::generate_instance(generator()).instance;
  cm::DriftMonitor mon(inst, 5, cm::ClusterMethod::ConstrainedKMeans, 1);
  EXPECT_TRUE(cm::replan_on_drift(mon, inst, 0.0).has_value());
}

TEST(Drift, ScenarioReportsDrift) {
  const auto dir = fresh_dir("drift");
  auto cfg = scenario(dir);
  cfg.replan_psi_threshold = 0.1;
  const auto art = cm::run_scenario(cfg);
  EXPECT_EQ(art.drift.size(), 20u);
  EXPECT_TRUE(fs::exists(dir / "drift.csv"));
}

TEST(Format, JsonTablesWhenRequested) {
  const auto dir = fresh_dir("json");
  auto cfg = scenario(dir);
  cfg.format = cm::TableFormat::Json;
  cfg.write_run_files = false;
  cm::run_scenario(cfg);
  EXPECT_TRUE(fs::exists(dir / "summary.json"));
  EXPECT_TRUE(fs::exists(dir / "bounds.json"));
  EXPECT_FALSE(fs::exists(dir / "runs"));
}
