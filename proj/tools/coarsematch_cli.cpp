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

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "coarsematch.hpp"

namespace cm = coarsematch;
namespace fs = std::filesystem;

namespace {

struct Globals {
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string out_dir = ".";
  std::string format = "csv";
  cm::TableFormat table_format() const { return *cm::parse_table_format(format); }
};

// Thrown with the name of the stage that failed.
struct StageError : std::runtime_error {
  std::string stage;
  StageError(std::string s, const std::string& what) : std::runtime_error(what), stage(std::move(s)) {}
};

template <typename F>
auto stage(const std::string& name, F&& f) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

cm::MatchingInstance load(const std::string& path) {
  return stage("load-instance", [&] { return cm::load_instance(path); });
}

fs::path or_default(const std::string& path, const Globals& g, const char* name) {
  return path.empty() ? fs::path(g.out_dir) / name : fs::path(path);
}

int cmd_gen(const Globals& g, const std::string& config_path, const std::string& out_path,
            const std::string* truth_path) {
  cm::GeneratorConfig cfg = stage("parse-config", [&] {
    return config_path.empty() ? cm::GeneratorConfig{}
                               : cm::generator_config_from_json(cm::read_json_file(config_path));
  });
  if (g.seed_given) cfg.seed = g.seed;
  auto gen = stage("generate", [&] { return cm::generate_instance(cfg); });
  stage("write", [&] {
    cm::save_instance(or_default(out_path, g, "instance.json"), gen.instance);
    if (truth_path)
      cm::write_json_file(or_default(*truth_path, g, "truth.json"), cm::to_json(gen.truth));
    return 0;
  });
  std::cout << "instance: " << gen.instance.num_patients() << " patients, "
            << gen.instance.num_donor_types() << " donor types, horizon "
            << gen.instance.horizon << "\n";
  return 0;
}

int cmd_cluster(const Globals& g, const std::string& inst_path, std::size_t b,
                const std::string& method_name, const std::string& out_path,
                const std::string& report_path) {
  const auto inst = load(inst_path);
  const auto method = cm::parse_cluster_method(method_name);
  if (!method) throw StageError("parse-args", "unknown clustering method '" + method_name + "'");
  const auto cl = stage("cluster", [&] { return cm::cluster_patients(inst, b, *method, g.seed); });
  const auto errs = stage("cluster-errors", [&] { return cm::compute_cluster_errors(inst, cl); });
  stage("write", [&] {
    cm::write_json_file(or_default(out_path, g, "clustering.json"), cm::to_json(cl));
    cm::Table t{{"cluster", "size", "delta", "nmae"}, {}};
    for (std::size_t c = 0; c < cl.num_clusters(); ++c)
      t.add({std::to_string(c), std::to_string(cl.size_of(c)), cm::fmt(errs.delta_per_cluster[c]),
             cm::fmt(errs.nmae_per_cluster[c])});
    if (report_path.empty())
      cm::write_table(fs::path(g.out_dir) / "cluster_errors", t, g.table_format());
    else
      cm::write_table(fs::path(report_path).replace_extension(), t);
    return 0;
  });
  std::cout << "clusters: " << cl.num_clusters() << ", delta_max " << errs.delta_max
            << ", nmae_max " << errs.nmae_max << "\n";
  return 0;
}

int cmd_plan(const Globals& g, const std::string& inst_path, const std::string& clustering_path,
             const std::string& out_path) {
  const auto inst = load(inst_path);
  std::optional<cm::Clustering> cl;
  if (!clustering_path.empty())
    cl = stage("load-clustering", [&] {
      return cm::clustering_from_json(cm::read_json_file(clustering_path), inst);
    });
  const auto plan = stage("plan", [&] { return cm::plan_dispatch(inst, cl ? &*cl : nullptr); });
  stage("write", [&] {
    cm::write_json_file(or_default(out_path, g, "plan.json"), cm::to_json(plan));
    return 0;
  });
  std::printf("objective %.10g, dual %.10g, iterations %zu\n", plan.objective,
              plan.dual_objective, plan.iterations);
  return 0;
}

int cmd_simulate(const Globals& g, const std::string& inst_path, const std::string& plan_path,
                 const std::string& clustering_path, const std::string& policy_name,
                 const std::string& dispatch_name, const std::string& intra_name,
                 std::size_t replications, const std::string& mode_name) {
  const auto inst = load(inst_path);
  cm::PolicyConfig pc;
  {
    auto k = cm::parse_policy_kind(policy_name);
    auto d = cm::parse_dispatch(dispatch_name);
    auto s = cm::parse_intra_cluster(intra_name);
    auto m = cm::parse_arrival_mode(mode_name);
    if (!k || !d || !s || !m) throw StageError("parse-args", "unknown policy, dispatch, intra-cluster rule or arrival mode");
    pc.kind = *k;
    pc.dispatch = *d;
    pc.intra_cluster = *s;
  }
  const auto mode = *cm::parse_arrival_mode(mode_name);
  std::optional<cm::Clustering> cl;
  std::optional<cm::DispatchPlan> plan;
  if (!clustering_path.empty())
    cl = stage("load-clustering", [&] {
      return cm::clustering_from_json(cm::read_json_file(clustering_path), inst);
    });
  if (pc.uses_plan()) {
    if (plan_path.empty()) throw StageError("parse-args", "policy needs --plan");
    plan = stage("load-plan", [&] { return cm::plan_from_json(cm::read_json_file(plan_path)); });
  }
  const cm::SeedPlan seeds{g.seed};
  const fs::path out = g.out_dir;
  std::vector<cm::RunRow> rows;
  stage("simulate", [&] {
    for (std::size_t r = 0; r < replications; ++r) {
      const auto arrivals = cm::sample_arrivals(inst, seeds.arrivals(r), mode);
      const cm::EdgeOutcomes outcomes{seeds.outcomes(r)};
      cm::PolicyConfig run = pc;
      run.seed = cm::derive_seed(g.seed, pc.name(), {r});
      const auto recs = cm::run_policy(inst, run, cl ? &*cl : nullptr, plan ? &*plan : nullptr,
                                       arrivals, outcomes);
      const auto opt = cm::hindsight_optimal(inst, arrivals, outcomes);
      cm::RunRow row;
      row.policy = pc.name();
      row.b = cl ? cl->min_size : 0;
      row.method = cl ? std::string(cm::to_string(cl->method)) : "";
      row.replication = r;
      row.seed = run.seed;
      row.alg = cm::total_utility(recs);
      row.opt = opt.total;
      if (row.opt > 0.0) row.ratio = cm::competitive_ratio(row.alg, row.opt);
      row.arrivals = arrivals.size();
      for (const auto& rec : recs) row.matched += rec.patient && rec.success ? 1 : 0;
      const std::string stem = pc.name() + "_rep" + std::to_string(r);
      row.file = cm::write_table(out / "runs" / stem, cm::records_table(recs, row.policy))
                     .lexically_relative(out)
                     .string();
      cm::write_table(out / "arrivals" / ("rep_" + std::to_string(r)), cm::arrivals_table(arrivals));
      rows.push_back(row);
    }
    return 0;
  });
  const auto summaries = stage("summarize", [&] { return cm::summarize_runs(rows); });
  stage("write", [&] {
    cm::write_table(out / "runs", cm::runs_table(rows));
    cm::write_table(out / "summary", cm::summary_table(summaries), g.table_format());
    return 0;
  });
  for (const auto& s : summaries)
    std::printf("%s: mean ratio %.6f (std %.6f) over %zu runs\n", s.policy.c_str(), s.mean, s.std,
                s.per_seed_ratios.size());
  return 0;
}

int cmd_bounds(const Globals& g, const std::vector<std::size_t>& bs, double delta, double eta,
               double rho, double nmae_max, const std::string& inst_path,
               const std::string& clustering_path) {
  if (!clustering_path.empty()) {
    if (inst_path.empty()) throw StageError("parse-args", "--clustering needs --instance");
    const auto inst = load(inst_path);
    delta = stage("cluster-errors", [&] {
      const auto cl = cm::clustering_from_json(cm::read_json_file(clustering_path), inst);
      return cm::compute_cluster_errors(inst, cl).delta_max;
    });
    if (!std::isfinite(delta) || delta >= 1.0)
      throw StageError("cluster-errors", "clustering has unbounded relative error");
    std::printf("delta from clustering: %.6f\n", delta);
  }
  std::vector<cm::BoundReport> reps;
  std::vector<std::pair<int, double>> grid;
  stage("bounds", [&] {
    for (auto b : bs) {
      auto r = cm::theorem_bounds(static_cast<int>(b), delta, eta, rho);
      if (nmae_max >= 0.0) r.hcr = cm::hcr(static_cast<double>(b), nmae_max);
      reps.push_back(r);
      grid.emplace_back(static_cast<int>(b), delta);
    }
    return 0;
  });
  stage("write", [&] {
    cm::write_table(fs::path(g.out_dir) / "bounds", cm::bounds_table(reps, {}), g.table_format());
    return 0;
  });
  for (const auto& r : reps)
    std::printf("b=%d alpha=%.6f thm2=%.6f thm3=%.6f thm4=%.6f\n", r.b, r.alpha, r.thm2_bound,
                r.thm3_bound, r.thm4_bound);
  if (!grid.empty()) {
    const auto choice = cm::select_capacity(grid);
    std::printf("selected b=%d (bound %.6f)\n", choice.b, choice.bound);
  }
  return 0;
}

int cmd_evaluate(const Globals& g, const std::vector<std::string>& run_files,
                 const std::string& inst_path, const std::string& baseline_path) {
  std::vector<cm::RunRow> rows;
  stage("load-runs", [&] {
    for (const auto& f : run_files) {
      auto part = cm::runs_from_table(cm::read_csv(f));
      rows.insert(rows.end(), part.begin(), part.end());
    }
    return 0;
  });
  const auto summaries = stage("summarize", [&] { return cm::summarize_runs(rows); });
  stage("write", [&] {
    cm::write_table(fs::path(g.out_dir) / "summary", cm::summary_table(summaries), g.table_format());
    return 0;
  });
  for (const auto& s : summaries)
    std::printf("%s b=%s %s: mean %.6f std %.6f p=%s\n", s.policy.c_str(),
                s.b ? std::to_string(s.b).c_str() : "-", s.method.c_str(), s.mean, s.std,
                cm::fmt(s.p_value).c_str());
  if (!inst_path.empty() && !baseline_path.empty()) {
    const auto now = load(inst_path);
    const auto base = load(baseline_path);
    stage("psi", [&] {
      cm::Table t{{"group", "psi", "class"}, {}};
      auto row = [&](const std::string& name, const std::vector<double>& a,
                     const std::vector<double>& e) {
        if (a.empty() || e.empty()) return;
        const auto p = cm::psi(a, e);
        t.add({name, cm::fmt(p.value), std::string(cm::to_string(p.classification))});
      };
      row("all", cm::edge_weight_sample(now), cm::edge_weight_sample(base));
      for (auto bt : cm::kBloodTypes) {
        auto pick = [&](const cm::MatchingInstance& inst) {
          std::vector<std::size_t> ids;
          for (std::size_t u = 0; u < inst.num_patients(); ++u)
            if (inst.patients[u].blood_type == bt) ids.push_back(u);
          return cm::edge_weight_sample(inst, &ids);
        };
        row("blood_" + std::string(cm::to_string(bt)), pick(now), pick(base));
      }
      cm::write_table(fs::path(g.out_dir) / "psi", t, g.table_format());
      return 0;
    });
  }
  return 0;
}

int cmd_scenario(const Globals& g, const std::string& config_path, bool out_dir_given) {
  auto cfg = stage("parse-config", [&] { return cm::scenario_from_json(cm::read_json_file(config_path)); });
  if (g.seed_given) cfg.master_seed = g.seed;
  if (out_dir_given || cfg.output_dir.empty()) cfg.output_dir = g.out_dir;
  cfg.format = g.table_format();
  const auto art = stage("scenario", [&] { return cm::run_scenario(cfg); });
  for (const auto& f : art.failures)
    std::fprintf(stderr, "cell b=%zu %s failed at %s: %s\n", f.b, f.method.c_str(),
                 f.stage.c_str(), f.message.c_str());
  for (const auto& s : art.summaries)
    std::printf("%-36s b=%-4s mean %.4f std %.4f\n", s.policy.c_str(),
                s.b ? std::to_string(s.b).c_str() : "-", s.mean, s.std);
  std::printf("scenario hash %016llx\n", static_cast<unsigned long long>(art.scenario_hash));
  return art.failures.empty() ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"coarsematch: coarsened online stochastic matching toolkit"};
  app.require_subcommand(1);
  Globals g;
  auto* seed_opt = app.add_option("--seed", g.seed, "Master seed");
  auto* out_opt = app.add_option("--out-dir", g.out_dir, "Output directory");
  app.add_option("--format", g.format, "Table format")->check(CLI::IsMember({"csv", "json"}));

  std::string config, instance, clustering, plan, method = "constrained-kmeans";
  std::string out_path, truth_path, report_path;
  std::string policy = "csm", dispatch = "discard", intra = "uniform_random", mode = "poisson";
  std::string baseline;
  std::size_t b = 1, reps = 20;
  std::vector<std::size_t> b_list;
  std::vector<std::string> run_files;
  double delta = 0.0, eta = 0.0, rho = 0.0, nmae = -1.0;

  auto* gen = app.add_subcommand("gen", "Generate a synthetic instance");
  gen->add_option("--config", config, "GeneratorConfig JSON");
  gen->add_option("--out", out_path, "Instance JSON path (default <out-dir>/instance.json)");
  auto* truth_opt = gen->add_option("--truth", truth_path, "Write planted truth (default <out-dir>/truth.json)")
                        ->expected(0, 1);

  auto* cl = app.add_subcommand("cluster", "Capacitated clustering of patients");
  cl->add_option("--instance", instance)->required();
  cl->add_option("-b,--b", b, "Minimum cluster size")->required();
  cl->add_option("--method", method);
  cl->add_option("--out", out_path, "Clustering JSON path");
  cl->add_option("--report", report_path, "Cluster error CSV path");

  auto* pl = app.add_subcommand("plan", "Solve the dispatch LP");
  pl->add_option("--instance", instance)->required();
  pl->add_option("--clustering", clustering);
  pl->add_option("--out", out_path, "Plan JSON path");

  auto* sim = app.add_subcommand("simulate", "Simulate a policy against the hindsight optimum");
  sim->add_option("--instance", instance)->required();
  sim->add_option("--plan", plan);
  sim->add_option("--clustering", clustering);
  sim->add_option("--policy", policy);
  sim->add_option("--dispatch", dispatch);
  sim->add_option("--intra-cluster", intra);
  sim->add_option("--replications", reps);
  sim->add_option("--arrival-mode", mode);

  auto* bd = app.add_subcommand("bounds", "Evaluate competitive-ratio bounds");
  bd->add_option("-b,--b,--b-grid", b_list, "Capacities, comma separated")->required()->delimiter(',');
  bd->add_option("--delta", delta);
  bd->add_option("--eta", eta);
  bd->add_option("--rho", rho);
  bd->add_option("--nmae-max", nmae);
  bd->add_option("--instance", instance);
  bd->add_option("--clustering", clustering, "Derive delta from this clustering");

  auto* ev = app.add_subcommand("evaluate", "Summarize run manifests");
  ev->add_option("--runs", run_files)->required();
  ev->add_option("--instance", instance);
  ev->add_option("--baseline-instance", baseline);

  auto* sc = app.add_subcommand("scenario", "Run an end-to-end scenario");
  sc->add_option("--config", config)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  g.seed_given = seed_opt->count() > 0;

  try {
    if (gen->parsed()) return cmd_gen(g, config, out_path, truth_opt->count() ? &truth_path : nullptr);
    if (cl->parsed()) return cmd_cluster(g, instance, b, method, out_path, report_path);
    if (pl->parsed()) return cmd_plan(g, instance, clustering, out_path);
    if (sim->parsed())
      return cmd_simulate(g, instance, plan, clustering, policy, dispatch, intra, reps, mode);
    if (bd->parsed()) return cmd_bounds(g, b_list, delta, eta, rho, nmae, instance, clustering);
    if (ev->parsed()) return cmd_evaluate(g, run_files, instance, baseline);
    if (sc->parsed()) return cmd_scenario(g, config, out_opt->count() > 0);
  } catch (const StageError& e) {
    std::cerr << "error: stage '" << e.stage << "' failed: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: stage 'unknown' failed: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
