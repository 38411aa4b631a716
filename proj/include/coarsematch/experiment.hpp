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
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "coarsematch/bounds.hpp"
#include "coarsematch/clustering.hpp"
#include "coarsematch/instance_io.hpp"
#include "coarsematch/io.hpp"
#include "coarsematch/lp.hpp"
#include "coarsematch/metrics.hpp"
#include "coarsematch/policies.hpp"
#include "coarsematch/synth.hpp"

namespace coarsematch {

inline json to_json(const PolicyConfig& p) {
  return json{{"kind", to_string(p.kind)},
              {"dispatch", to_string(p.dispatch)},
              {"intra_cluster", to_string(p.intra_cluster)}};
}

inline PolicyConfig policy_from_json(const json& j) {
  PolicyConfig p;
  if (j.is_string()) {
    auto k = parse_policy_kind(j.get<std::string>());
    if (!k) throw ParseError("policy: unknown kind '" + j.get<std::string>() + "'");
    p.kind = *k;
    return p;
  }
  try {
    auto k = parse_policy_kind(j.at("kind").get<std::string>());
    if (!k) throw ParseError("policy: unknown kind '" + j.at("kind").get<std::string>() + "'");
    p.kind = *k;
    if (j.contains("dispatch")) {
      auto d = parse_dispatch(j["dispatch"].get<std::string>());
      if (!d) throw ParseError("policy: unknown dispatch");
      p.dispatch = *d;
    }
    if (j.contains("intra_cluster")) {
      auto s = parse_intra_cluster(j["intra_cluster"].get<std::string>());
      if (!s) throw ParseError("policy: unknown intra_cluster");
      p.intra_cluster = *s;
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("policy: ") + e.what());
  }
  return p;
}

struct ScenarioConfig {
  std::string instance_path;                 // used when no generator is given
  std::optional<GeneratorConfig> generator;
  std::vector<std::size_t> b_grid = {1};
  std::vector<ClusterMethod> methods = {ClusterMethod::ConstrainedKMeans};
  std::vector<PolicyConfig> policies;
  std::size_t n_replications = 20;
  ArrivalMode arrival_mode = ArrivalMode::Poisson;
  std::optional<double> replan_psi_threshold;
  std::string output_dir;                    // empty: nothing written
  TableFormat format = TableFormat::Csv;
  bool write_run_files = true;
  std::size_t threads = 0;                   // 0: hardware concurrency
  std::uint64_t master_seed = 0;
};

inline std::vector<std::string> validate_scenario(const ScenarioConfig& c) {
  std::vector<std::string> out;
  if (c.n_replications < 1) out.emplace_back("n_replications must be >= 1");
  if (c.b_grid.empty()) out.emplace_back("b_grid must not be empty");
  for (auto b : c.b_grid)
    if (b < 1) out.emplace_back("b_grid entries must be >= 1");
  if (c.methods.empty()) out.emplace_back("methods must not be empty");
  if (c.policies.empty()) out.emplace_back("policies must not be empty");
  if (!c.generator && c.instance_path.empty())
    out.emplace_back("either generator or instance must be given");
  if (c.replan_psi_threshold && !(*c.replan_psi_threshold >= 0.0))
    out.emplace_back("replan_psi_threshold must be >= 0");
  return out;
}

// Canonical JSON; output_dir, format and threads are omitted since they do
// not change any result.
inline json to_json(const ScenarioConfig& c) {
  json j;
  if (c.generator) j["generator"] = to_json(*c.generator);
  else j["instance"] = c.instance_path;
  j["b_grid"] = c.b_grid;
  json methods = json::array();
  for (auto m : c.methods) methods.push_back(to_string(m));
  j["methods"] = methods;
  json pol = json::array();
  for (const auto& p : c.policies) pol.push_back(to_json(p));
  j["policies"] = pol;
  j["n_replications"] = c.n_replications;
  j["arrival_mode"] = to_string(c.arrival_mode);
  j["replan_psi_threshold"] =
      c.replan_psi_threshold ? json(*c.replan_psi_threshold) : json(nullptr);
  j["write_run_files"] = c.write_run_files;
  j["master_seed"] = c.master_seed;
  return j;
}

inline ScenarioConfig scenario_from_json(const json& j) {
  if (!j.is_object()) throw ParseError("scenario: expected an object");
  ScenarioConfig c;
  try {
    if (j.contains("generator")) c.generator = generator_config_from_json(j["generator"]);
    c.instance_path = j.value("instance", std::string());
    c.b_grid = j.value("b_grid", c.b_grid);
    if (j.contains("methods")) {
      c.methods.clear();
      for (const auto& m : j["methods"]) {
        auto cm = parse_cluster_method(m.get<std::string>());
        if (!cm) throw ParseError("scenario: unknown clustering method '" +
                                  m.get<std::string>() + "'");
        c.methods.push_back(*cm);
      }
    }
    if (j.contains("policies"))
      for (const auto& p : j["policies"]) c.policies.push_back(policy_from_json(p));
    c.n_replications = j.value("n_replications", c.n_replications);
    if (j.contains("arrival_mode")) {
      auto m = parse_arrival_mode(j["arrival_mode"].get<std::string>());
      if (!m) throw ParseError("scenario: unknown arrival_mode");
      c.arrival_mode = *m;
    }
    if (j.contains("replan_psi_threshold") && !j["replan_psi_threshold"].is_null())
      c.replan_psi_threshold = j["replan_psi_threshold"].get<double>();
    c.output_dir = j.value("output_dir", std::string());
    if (j.contains("format")) {
      auto f = parse_table_format(j["format"].get<std::string>());
      if (!f) throw ParseError("scenario: format must be csv or json");
      c.format = *f;
    }
    c.write_run_files = j.value("write_run_files", c.write_run_files);
    c.threads = j.value("threads", c.threads);
    c.master_seed = j.value("master_seed", c.master_seed);
  } catch (const json::exception& e) {
    throw ParseError(std::string("scenario: ") + e.what());
  }
  return c;
}

inline std::uint64_t scenario_hash(const ScenarioConfig& c) { return fnv1a(to_json(c).dump()); }

// Seed tree. Every stream is a pure function of the master seed and a path
// of labels, so adding a policy or a grid cell leaves the others unchanged.
struct SeedPlan {
  std::uint64_t master = 0;
  std::uint64_t instance() const { return derive_seed(master, "instance"); }
  std::uint64_t arrivals(std::size_t rep) const { return derive_seed(master, "arrivals", {rep}); }
  std::uint64_t outcomes(std::size_t rep) const { return derive_seed(master, "outcomes", {rep}); }
  std::uint64_t clustering(std::size_t b, ClusterMethod m) const {
    return derive_seed(master, "clustering", {b, static_cast<std::uint64_t>(m)});
  }
  std::uint64_t policy(const PolicyConfig& p, std::size_t b, ClusterMethod m,
                       std::size_t rep) const {
    return derive_seed(master, p.name(), {b, static_cast<std::uint64_t>(m), rep});
  }
};

struct RunRow {
  std::string policy;
  std::size_t b = 0;   // 0: policy does not use a plan
  std::string method;  // empty when b = 0
  std::size_t replication = 0;
  std::uint64_t seed = 0;
  double alg = 0.0;
  double opt = 0.0;
  double ratio = std::numeric_limits<double>::quiet_NaN();  // NaN when opt = 0
  std::size_t matched = 0;
  std::size_t arrivals = 0;
  std::string file;
};

struct RatioSummary {
  std::string policy;
  std::size_t b = 0;
  std::string method;
  std::vector<double> per_seed_ratios;  // ordered by replication
  double mean = std::numeric_limits<double>::quiet_NaN();
  double std = std::numeric_limits<double>::quiet_NaN();
  double ratio_of_means = std::numeric_limits<double>::quiet_NaN();
  double ratio_se = std::numeric_limits<double>::quiet_NaN();
  std::string reference;  // label of the group the p-value compares against
  double p_value = std::numeric_limits<double>::quiet_NaN();
};

struct TimingRow {
  std::size_t b = 0;
  std::string method;
  std::size_t n_clusters = 0;
  double cluster_seconds = 0.0;
  double lp_seconds = 0.0;
  std::size_t lp_iterations = 0;
};

struct FailureRow {
  std::size_t b = 0;
  std::string method;
  std::string stage;
  std::string message;
};

struct DriftRow {
  std::size_t b = 0;
  std::string method;
  std::string policy;
  std::size_t replication = 0;
  double psi = 0.0;
  bool replan = false;
};

struct RunArtifact {
  std::uint64_t scenario_hash = 0;
  std::vector<RunRow> runs;
  std::vector<RatioSummary> summaries;
  std::vector<BoundReport> bounds;
  std::vector<std::string> bound_methods;  // parallel to bounds
  std::vector<TimingRow> timing;
  std::vector<FailureRow> failures;
  std::vector<DriftRow> drift;
  std::vector<double> hindsight;  // per replication
};

// Edge weights of compatible edges, the population PSI is computed over.
inline std::vector<double> edge_weight_sample(const MatchingInstance& inst,
                                              const std::vector<std::size_t>* patients = nullptr) {
  std::vector<double> out;
  auto add = [&](std::size_t u) {
    for (std::size_t v = 0; v < inst.num_donor_types(); ++v)
      if (inst.compatible(u, v)) out.push_back(inst.weights(u, v));
  };
  if (patients) for (auto u : *patients) add(u);
  else for (std::size_t u = 0; u < inst.num_patients(); ++u) add(u);
  return out;
}

struct ReplanResult {
  Clustering clustering;
  DispatchPlan plan;
  double psi = 0.0;
};

// Keeps a baseline snapshot of the edge-weight distribution and replans
// when the population drifts past a PSI threshold.
struct DriftMonitor {
  std::vector<double> baseline;
  std::size_t b = 1;
  ClusterMethod method = ClusterMethod::ConstrainedKMeans;
  std::uint64_t seed = 0;

  DriftMonitor(const MatchingInstance& population, std::size_t b_, ClusterMethod m,
               std::uint64_t s)
      : baseline(edge_weight_sample(population)), b(b_), method(m), seed(s) {}

  PsiResult drift(const MatchingInstance& population) const {
    return psi(edge_weight_sample(population), baseline);
  }
};

inline std::optional<ReplanResult> replan_on_drift(DriftMonitor& state,
                                                   const MatchingInstance& new_population,
                                                   double threshold) {
  const auto sample = edge_weight_sample(new_population);
  const PsiResult p = psi(sample, state.baseline);
  if (p.value < threshold) return std::nullopt;
  ReplanResult r;
  r.psi = p.value;
  const std::size_t b = std::min(state.b, new_population.num_patients());
  r.clustering = cluster_patients(new_population, b, state.method, state.seed);
  r.plan = plan_dispatch(new_population, &r.clustering);
  state.baseline = sample;
  return r;
}

namespace detail {

// Runs fn(i) for i in [0, n) on up to `threads` workers. The first
// exception is rethrown after all workers finish.
inline void parallel_for(std::size_t n, std::size_t threads,
                         const std::function<void(std::size_t)>& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < threads; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!err) err = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline std::string run_label(const std::string& policy, std::size_t b, const std::string& method) {
  if (b == 0) return policy;
  return policy + "_b" + std::to_string(b) + "_" + method;
}

inline RatioSummary summarize(const std::string& policy, std::size_t b, const std::string& method,
                              std::vector<const RunRow*> rows) {
  std::sort(rows.begin(), rows.end(),
            [](const RunRow* a, const RunRow* c) { return a->replication < c->replication; });
  RatioSummary s;
  s.policy = policy;
  s.b = b;
  s.method = method;
  std::vector<double> alg, opt;
  for (const auto* r : rows) {
    if (!std::isnan(r->ratio)) s.per_seed_ratios.push_back(r->ratio);
    alg.push_back(r->alg);
    opt.push_back(r->opt);
  }
  if (!s.per_seed_ratios.empty()) {
    s.mean = mean(s.per_seed_ratios);
    s.std = stddev(s.per_seed_ratios);
  }
  if (mean(opt) > 0.0) {
    const auto est = ratio_of_means(alg, opt);
    s.ratio_of_means = est.ratio;
    s.ratio_se = est.standard_error;
  }
  return s;
}

}  // namespace detail

// Adds a Wilcoxon p-value to each plan-based summary, against the same
// policy and method at the smallest b of the grid.
inline void attach_p_values(std::vector<RatioSummary>& summaries) {
  for (auto& s : summaries) {
    if (s.b == 0) continue;
    const RatioSummary* ref = nullptr;
    for (const auto& o : summaries)
      if (o.policy == s.policy && o.method == s.method && o.b != 0 && (!ref || o.b < ref->b))
        ref = &o;
    if (!ref || ref == &s) continue;
    s.reference = detail::run_label(ref->policy, ref->b, ref->method);
    if (ref->per_seed_ratios.size() != s.per_seed_ratios.size() ||
        s.per_seed_ratios.size() < 5)
      continue;
    s.p_value = wilcoxon_signed_rank(s.per_seed_ratios, ref->per_seed_ratios);
  }
}

inline Table summary_table(const std::vector<RatioSummary>& summaries) {
  Table t{{"policy", "b", "method", "n", "mean_ratio", "std", "ratio_of_means", "ratio_se",
           "reference", "p_value"},
          {}};
  for (const auto& s : summaries)
    t.add({s.policy, s.b ? std::to_string(s.b) : "", s.method,
           std::to_string(s.per_seed_ratios.size()), fmt(s.mean), fmt(s.std),
           fmt(s.ratio_of_means), fmt(s.ratio_se), s.reference, fmt(s.p_value)});
  return t;
}

inline Table runs_table(const std::vector<RunRow>& runs) {
  Table t{{"policy", "b", "method", "replication", "seed", "alg", "opt", "ratio", "matched",
           "arrivals", "file"},
          {}};
  for (const auto& r : runs)
    t.add({r.policy, r.b ? std::to_string(r.b) : "", r.method, std::to_string(r.replication),
           std::to_string(r.seed), fmt(r.alg), fmt(r.opt), fmt(r.ratio),
           std::to_string(r.matched), std::to_string(r.arrivals), r.file});
  return t;
}

inline std::vector<RunRow> runs_from_table(const Table& t) {
  const auto pc = t.column("policy"), bc = t.column("b"), mc = t.column("method"),
             rc = t.column("replication"), sc = t.column("seed"), ac = t.column("alg"),
             oc = t.column("opt"), qc = t.column("ratio"), nc = t.column("matched"),
             tc = t.column("arrivals"), fc = t.column("file");
  std::vector<RunRow> out;
  for (const auto& row : t.rows) {
    RunRow r;
    r.policy = row[pc];
    r.b = row[bc].empty() ? 0 : std::stoull(row[bc]);
    r.method = row[mc];
    r.replication = std::stoull(row[rc]);
    r.seed = std::stoull(row[sc]);
    r.alg = parse_double(row[ac]);
    r.opt = parse_double(row[oc]);
    r.ratio = parse_double(row[qc]);
    r.matched = std::stoull(row[nc]);
    r.arrivals = std::stoull(row[tc]);
    r.file = row[fc];
    out.push_back(r);
  }
  return out;
}

// Groups run rows by (policy, b, method) in first-seen order.
inline std::vector<RatioSummary> summarize_runs(const std::vector<RunRow>& runs) {
  std::vector<std::tuple<std::string, std::size_t, std::string>> keys;
  std::map<std::tuple<std::string, std::size_t, std::string>, std::vector<const RunRow*>> groups;
  for (const auto& r : runs) {
    auto key = std::make_tuple(r.policy, r.b, r.method);
    if (!groups.count(key)) keys.push_back(key);
    groups[key].push_back(&r);
  }
  std::vector<RatioSummary> out;
  for (const auto& k : keys)
    out.push_back(detail::summarize(std::get<0>(k), std::get<1>(k), std::get<2>(k), groups[k]));
  attach_p_values(out);
  return out;
}

inline Table bounds_table(const std::vector<BoundReport>& bounds,
                          const std::vector<std::string>& methods) {
  Table t{{"b", "method", "alpha", "delta", "eta", "rho", "thm2_bound", "thm3_bound",
           "thm4_bound", "thmA6_bound", "delta_opt", "delta_alg", "thmA1_bound", "hcr"},
          {}};
  for (std::size_t i = 0; i < bounds.size(); ++i) {
    const auto& r = bounds[i];
    t.add({std::to_string(r.b), i < methods.size() ? methods[i] : "", fmt(r.alpha),
           fmt(r.delta), fmt(r.eta), fmt(r.rho), fmt(r.thm2_bound), fmt(r.thm3_bound),
           fmt(r.thm4_bound), fmt(r.thmA6_bound), fmt(r.delta_opt), fmt(r.delta_alg),
           fmt(r.thmA1_bound), fmt(r.hcr)});
  }
  return t;
}

namespace detail {

inline std::vector<UsedEdge> used_edges(const std::vector<MatchRecord>& recs) {
  std::vector<UsedEdge> out;
  for (const auto& r : recs)
    if (r.patient && r.success) out.push_back({*r.patient, r.donor_type});
  return out;
}

struct Cell {
  std::size_t b = 0;
  ClusterMethod method = ClusterMethod::ConstrainedKMeans;
  Clustering clustering;
  DispatchPlan plan;
};

}  // namespace detail

// Generate (or load), then for each (b, method): cluster, plan and simulate
// every plan-based policy over the shared replications. Baseline policies
// run once per replication. Each replication has one arrival sequence, one
// set of edge outcomes and one hindsight optimum, shared by every policy.
inline RunArtifact run_scenario(const ScenarioConfig& cfg) {
  if (auto errs = validate_scenario(cfg); !errs.empty()) {
    std::string msg = "invalid scenario:";
    for (const auto& e : errs) msg += "\n  " + e;
    throw ValidationError(msg);
  }
  RunArtifact art;
  art.scenario_hash = scenario_hash(cfg);
  const SeedPlan seeds{cfg.master_seed};
  const std::filesystem::path out_dir = cfg.output_dir;
  const bool write = !cfg.output_dir.empty();

  MatchingInstance inst;
  if (cfg.generator) {
    GeneratorConfig g = *cfg.generator;
    inst = generate_instance(g).instance;
  } else {
    inst = load_instance(cfg.instance_path);
  }
  if (write) {
    json meta = to_json(cfg);
    meta["scenario_hash"] = art.scenario_hash;
    write_json_file(out_dir / "scenario.json", meta);
    save_instance(out_dir / "instance.json", inst);
  }

  const std::size_t R = cfg.n_replications;
  std::vector<std::vector<ArrivalEvent>> arrivals(R);
  std::vector<EdgeOutcomes> outcomes(R);
  std::vector<HindsightResult> hindsight(R);
  detail::parallel_for(R, cfg.threads, [&](std::size_t r) {
    arrivals[r] = sample_arrivals(inst, seeds.arrivals(r), cfg.arrival_mode);
    outcomes[r] = EdgeOutcomes{seeds.outcomes(r)};
    hindsight[r] = hindsight_optimal(inst, arrivals[r], outcomes[r]);
  });
  for (std::size_t r = 0; r < R; ++r) {
    art.hindsight.push_back(hindsight[r].total);
    if (write)
      write_table(out_dir / "arrivals" / ("rep_" + std::to_string(r)), arrivals_table(arrivals[r]));
  }
  std::vector<std::vector<UsedEdge>> opt_edges(R);
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t t = 0; t < arrivals[r].size(); ++t)
      if (auto u = hindsight[r].patient_of_arrival[t])
        opt_edges[r].push_back({*u, arrivals[r][t].donor_type});

  std::mutex mu;
  auto run_policy_reps = [&](const PolicyConfig& base, std::size_t b, ClusterMethod m,
                             const detail::Cell* cell) {
    const std::string method = b ? std::string(to_string(m)) : "";
    const std::string label = detail::run_label(base.name(), b, method);
    std::vector<RunRow> rows(R);
    std::vector<std::vector<MatchRecord>> recs(R);
    detail::parallel_for(R, cfg.threads, [&](std::size_t r) {
      PolicyConfig pc = base;
      pc.seed = seeds.policy(base, b, m, r);
      recs[r] = run_policy(inst, pc, cell ? &cell->clustering : nullptr,
                           cell ? &cell->plan : nullptr, arrivals[r], outcomes[r]);
      RunRow& row = rows[r];
      row.policy = base.name();
      row.b = b;
      row.method = method;
      row.replication = r;
      row.seed = pc.seed;
      row.alg = total_utility(recs[r]);
      row.opt = hindsight[r].total;
      if (row.opt > 0.0) row.ratio = competitive_ratio(row.alg, row.opt);
      row.arrivals = arrivals[r].size();
      for (const auto& rec : recs[r]) row.matched += rec.patient && rec.success ? 1 : 0;
      if (write && cfg.write_run_files) {
        const std::string stem = label + "_rep" + std::to_string(r);
        row.file = write_table(out_dir / "runs" / stem, records_table(recs[r], row.policy))
                       .lexically_relative(out_dir)
                       .string();
      }
    });
    std::lock_guard lock(mu);
    art.runs.insert(art.runs.end(), rows.begin(), rows.end());
    return recs;
  };

  for (const auto& p : cfg.policies)
    if (!p.uses_plan()) run_policy_reps(p, 0, ClusterMethod::ConstrainedKMeans, nullptr);

  for (std::size_t b : cfg.b_grid)
    for (ClusterMethod m : cfg.methods) {
      const std::string method(to_string(m));
      detail::Cell cell;
      cell.b = b;
      cell.method = m;
      TimingRow timing{b, method, 0, 0.0, 0.0, 0};
      std::string stage = "cluster";
      try {
        auto t0 = std::chrono::steady_clock::now();
        cell.clustering = cluster_patients(inst, b, m, seeds.clustering(b, m));
        timing.cluster_seconds = detail::seconds_since(t0);
        timing.n_clusters = cell.clustering.num_clusters();
        stage = "plan";
        t0 = std::chrono::steady_clock::now();
        cell.plan = plan_dispatch(inst, &cell.clustering);
        timing.lp_seconds = detail::seconds_since(t0);
        timing.lp_iterations = cell.plan.iterations;
        art.timing.push_back(timing);

        stage = "simulate";
        std::vector<UsedEdge> opt_pool, alg_pool;
        bool have_alg = false;
        for (const auto& p : cfg.policies) {
          if (!p.uses_plan()) continue;
          auto recs = run_policy_reps(p, b, m, &cell);
          if (!have_alg) {
            have_alg = true;
            for (std::size_t r = 0; r < R; ++r) {
              auto e = detail::used_edges(recs[r]);
              alg_pool.insert(alg_pool.end(), e.begin(), e.end());
              opt_pool.insert(opt_pool.end(), opt_edges[r].begin(), opt_edges[r].end());
              if (cfg.replan_psi_threshold) {
                std::vector<unsigned char> taken(inst.num_patients(), 0);
                for (const auto& ue : e) taken[ue.patient] = 1;
                std::vector<std::size_t> left;
                for (std::size_t u = 0; u < inst.num_patients(); ++u)
                  if (!taken[u]) left.push_back(u);
                const auto base = edge_weight_sample(inst);
                const auto now = edge_weight_sample(inst, &left);
                DriftRow d{b, method, p.name(), r, 0.0, false};
                if (!now.empty()) d.psi = psi(now, base).value;
                d.replan = d.psi >= *cfg.replan_psi_threshold;
                art.drift.push_back(d);
              }
            }
          }
        }

        stage = "bounds";
        const ClusterErrorReport errs = compute_cluster_errors(inst, cell.clustering);
        const double delta = std::clamp(errs.delta_max, 0.0, 1.0 - 1e-12);
        const double eta = cfg.generator ? cfg.generator->eta : 0.0;
        BoundReport rep = theorem_bounds(static_cast<int>(b), delta, eta, 0.0);
        rep.hcr = hcr(static_cast<double>(b), std::min(1.0, errs.nmae_max));
        if (have_alg) {
          std::vector<double> finite_delta = errs.delta_per_cluster;
          for (double& d : finite_delta)
            if (!std::isfinite(d)) d = 1.0;
          const auto ex = ex_post_errors(opt_pool, alg_pool, cell.clustering, finite_delta, inst);
          rep.delta_opt = ex.delta_opt;
          rep.delta_alg = ex.delta_alg;
          if (!std::isnan(ex.delta_opt) && !std::isnan(ex.delta_alg))
            rep.thmA1_bound = thmA1_bound(static_cast<int>(b), ex.delta_opt, ex.delta_alg);
        }
        art.bounds.push_back(rep);
        art.bound_methods.push_back(method);
      } catch (const std::exception& e) {
        art.failures.push_back({b, method, stage, e.what()});
      }
    }

  art.summaries = summarize_runs(art.runs);

  if (write) {
    write_table(out_dir / "runs", runs_table(art.runs));
    write_table(out_dir / "summary", summary_table(art.summaries), cfg.format);
    write_table(out_dir / "bounds", bounds_table(art.bounds, art.bound_methods), cfg.format);
    Table tt{{"b", "method", "n_clusters", "cluster_seconds", "lp_seconds", "lp_iterations"}, {}};
    for (const auto& t : art.timing) {
      char c[32], l[32];
      std::snprintf(c, sizeof c, "%.3f", t.cluster_seconds);
      std::snprintf(l, sizeof l, "%.3f", t.lp_seconds);
      tt.add({std::to_string(t.b), t.method, std::to_string(t.n_clusters), c, l,
              std::to_string(t.lp_iterations)});
    }
    write_table(out_dir / "timing", tt, cfg.format);
    Table ft{{"b", "method", "stage", "message"}, {}};
    for (const auto& f : art.failures) {
      std::string msg = f.message;
      std::replace(msg.begin(), msg.end(), ',', ';');
      std::replace(msg.begin(), msg.end(), '\n', ' ');
      ft.add({std::to_string(f.b), f.method, f.stage, msg});
    }
    write_table(out_dir / "failures", ft, cfg.format);
    if (cfg.replan_psi_threshold) {
      Table dt{{"b", "method", "policy", "replication", "psi", "class", "replan"}, {}};
      for (const auto& d : art.drift)
        dt.add({std::to_string(d.b), d.method, d.policy, std::to_string(d.replication),
                fmt(d.psi), std::string(to_string(classify_psi(d.psi))), d.replan ? "1" : "0"});
      write_table(out_dir / "drift", dt, cfg.format);
    }
  }
  return art;
}

}  // namespace coarsematch
