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
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "coarsematch/clustering.hpp"
#include "coarsematch/error.hpp"
#include "coarsematch/instance.hpp"
#include "coarsematch/instance_io.hpp"
#include "coarsematch/kmeans.hpp"
#include "coarsematch/random.hpp"

namespace coarsematch {

enum class ArrivalMode { Poisson, IidRounds };

inline std::string_view to_string(ArrivalMode m) {
  return m == ArrivalMode::Poisson ? "poisson" : "iid-rounds";
}

inline std::optional<ArrivalMode> parse_arrival_mode(std::string_view s) {
  if (s == "poisson") return ArrivalMode::Poisson;
  if (s == "iid-rounds" || s == "iid_rounds") return ArrivalMode::IidRounds;
  return std::nullopt;
}

struct GeneratorConfig {
  std::size_t n_patients = 200;
  std::size_t n_clusters_planted = 20;
  std::size_t feature_dim = 34;
  std::size_t n_donor_types = 20;
  int horizon = 100;
  double noise_delta = 0.0;  // member weights are center * (1 + xi), |xi| <= noise_delta
  double eta = 0.0;          // true weights within (1 +- eta) of emitted ones
  double bad_cluster_fraction = 0.0;
  double bad_cluster_value_share = 0.01;  // scale applied to bad cluster centers
  double bad_cluster_noise = 0.9;         // noise_delta used inside bad clusters
  std::array<double, 4> blood_type_frequencies = {0.44, 0.42, 0.10, 0.04};  // O A B AB
  double base_weight = 1.0;
  double affinity = 1.0;       // spread of log-weights driven by feature affinity
  double value_spread = 0.5;   // spread of a per-cluster log-value shift
  double success_prob_min = 1.0;
  double success_prob_max = 1.0;
  double rate_shape = 2.0;     // gamma shape of the unnormalised arrival rates
  double region_nm = 1500.0;   // locations are uniform in a region_nm x region_nm square
  std::uint64_t seed = 0;
};

inline std::vector<std::string> validate_config(const GeneratorConfig& c) {
  std::vector<std::string> out;
  if (c.n_patients == 0) out.emplace_back("n_patients must be positive");
  if (c.n_clusters_planted == 0) out.emplace_back("n_clusters_planted must be positive");
  if (c.n_patients < c.n_clusters_planted)
    out.emplace_back("n_patients must be at least n_clusters_planted");
  if (c.n_donor_types == 0) out.emplace_back("n_donor_types must be positive");
  if (c.horizon <= 0) out.emplace_back("horizon must be positive");
  if (!(c.noise_delta >= 0.0 && c.noise_delta < 1.0))
    out.emplace_back("noise_delta must lie in [0, 1)");
  if (!(c.bad_cluster_noise >= 0.0 && c.bad_cluster_noise < 1.0))
    out.emplace_back("bad_cluster_noise must lie in [0, 1)");
  if (!(c.eta >= 0.0 && c.eta < 1.0)) out.emplace_back("eta must lie in [0, 1)");
  for (double p : {c.bad_cluster_fraction, c.bad_cluster_value_share, c.success_prob_min,
                   c.success_prob_max})
    if (!(p >= 0.0 && p <= 1.0)) {
      out.emplace_back("probabilities and fractions must lie in [0, 1]");
      break;
    }
  if (c.success_prob_min > c.success_prob_max)
    out.emplace_back("success_prob_min exceeds success_prob_max");
  double fsum = 0.0;
  for (double f : c.blood_type_frequencies) {
    if (!(f >= 0.0)) out.emplace_back("blood type frequencies must be nonnegative");
    fsum += f;
  }
  if (std::abs(fsum - 1.0) > 1e-9) out.emplace_back("blood type frequencies must sum to 1");
  if (!(c.base_weight > 0.0)) out.emplace_back("base_weight must be positive");
  if (!(c.rate_shape > 0.0)) out.emplace_back("rate_shape must be positive");
  return out;
}

inline json to_json(const GeneratorConfig& c) {
  return json{{"n_patients", c.n_patients},
              {"n_clusters_planted", c.n_clusters_planted},
              {"feature_dim", c.feature_dim},
              {"n_donor_types", c.n_donor_types},
              {"horizon", c.horizon},
              {"noise_delta", c.noise_delta},
              {"eta", c.eta},
              {"bad_cluster_fraction", c.bad_cluster_fraction},
              {"bad_cluster_value_share", c.bad_cluster_value_share},
              {"bad_cluster_noise", c.bad_cluster_noise},
              {"blood_type_frequencies", c.blood_type_frequencies},
              {"base_weight", c.base_weight},
              {"affinity", c.affinity},
              {"value_spread", c.value_spread},
              {"success_prob_min", c.success_prob_min},
              {"success_prob_max", c.success_prob_max},
              {"rate_shape", c.rate_shape},
              {"region_nm", c.region_nm},
              {"seed", c.seed}};
}

// Missing keys keep their defaults; unknown keys are rejected.
inline GeneratorConfig generator_config_from_json(const json& j) {
  if (!j.is_object()) throw ParseError("generator config: expected an object");
  GeneratorConfig c;
  const json defaults = to_json(c);
  for (const auto& [key, _] : j.items())
    if (!defaults.contains(key)) throw ParseError("generator config: unknown key '" + key + "'");
  try {
    c.n_patients = j.value("n_patients", c.n_patients);
    c.n_clusters_planted = j.value("n_clusters_planted", c.n_clusters_planted);
    c.feature_dim = j.value("feature_dim", c.feature_dim);
    c.n_donor_types = j.value("n_donor_types", c.n_donor_types);
    c.horizon = j.value("horizon", c.horizon);
    c.noise_delta = j.value("noise_delta", c.noise_delta);
    c.eta = j.value("eta", c.eta);
    c.bad_cluster_fraction = j.value("bad_cluster_fraction", c.bad_cluster_fraction);
    c.bad_cluster_value_share = j.value("bad_cluster_value_share", c.bad_cluster_value_share);
    c.bad_cluster_noise = j.value("bad_cluster_noise", c.bad_cluster_noise);
    c.blood_type_frequencies = j.value("blood_type_frequencies", c.blood_type_frequencies);
    c.base_weight = j.value("base_weight", c.base_weight);
    c.affinity = j.value("affinity", c.affinity);
    c.value_spread = j.value("value_spread", c.value_spread);
    c.success_prob_min = j.value("success_prob_min", c.success_prob_min);
    c.success_prob_max = j.value("success_prob_max", c.success_prob_max);
    c.rate_shape = j.value("rate_shape", c.rate_shape);
    c.region_nm = j.value("region_nm", c.region_nm);
    c.seed = j.value("seed", c.seed);
  } catch (const json::exception& e) {
    throw ParseError(std::string("generator config: ") + e.what());
  }
  return c;
}

struct GroundTruth {
  ClusterList planted;                // canonical order
  std::vector<std::size_t> bad_clusters;  // indices into planted
  Matrix<double> true_weights;        // equals the emitted weights when eta = 0
};

struct GeneratedInstance {
  MatchingInstance instance;
  GroundTruth truth;
};

inline json to_json(const GroundTruth& t) {
  return json{{"planted_clusters", t.planted},
              {"bad_clusters", t.bad_clusters},
              {"true_weights", detail::matrix_to_json(t.true_weights)}};
}

inline GroundTruth ground_truth_from_json(const json& j) {
  try {
    GroundTruth t;
    t.planted = j.at("planted_clusters").get<ClusterList>();
    t.bad_clusters = j.at("bad_clusters").get<std::vector<std::size_t>>();
    t.true_weights = detail::matrix_from_json<double>(j.at("true_weights"), "true_weights");
    return t;
  } catch (const json::exception& e) {
    throw ParseError(std::string("truth: ") + e.what());
  }
}

namespace detail {

// Largest-remainder apportionment of `total` items to the given shares.
inline std::vector<std::size_t> apportion(std::size_t total, std::span<const double> shares) {
  std::vector<std::size_t> out(shares.size());
  std::vector<std::pair<double, std::size_t>> rem;
  std::size_t given = 0;
  for (std::size_t i = 0; i < shares.size(); ++i) {
    const double exact = shares[i] * static_cast<double>(total);
    out[i] = static_cast<std::size_t>(std::floor(exact));
    given += out[i];
    rem.emplace_back(exact - std::floor(exact), i);
  }
  std::stable_sort(rem.begin(), rem.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; given < total; ++i, ++given) ++out[rem[i % rem.size()].second];
  return out;
}

// Deterministically shuffled list of blood types with quota counts.
inline std::vector<BloodType> blood_type_quota(std::size_t n,
                                               const std::array<double, 4>& freq, Rng& rng) {
  const auto counts = apportion(n, freq);
  std::vector<BloodType> out;
  for (std::size_t i = 0; i < 4; ++i) out.insert(out.end(), counts[i], kBloodTypes[i]);
  shuffle(out, rng);
  return out;
}

inline Location random_location(Rng& rng, double side) {
  return {uniform(rng, 0.0, side), uniform(rng, 0.0, side)};
}

// Zero-mean multipliers for one cluster: antithetic pairs (+xi, -xi) with
// xi uniform in [0, spread]; an odd member out gets 0. The mean is exactly 0,
// so the member mean of center * (1 + xi) is the center.
inline std::vector<double> antithetic_noise(std::size_t m, double spread, Rng& rng) {
  std::vector<double> xi(m, 0.0);
  for (std::size_t i = 0; i + 1 < m; i += 2) {
    const double x = spread * uniform01(rng);
    xi[i] = x;
    xi[i + 1] = -x;
  }
  shuffle(xi, rng);
  return xi;
}

}  // namespace detail

// Planted-cluster instance. Every planted cluster shares a blood type, a
// location neighbourhood, success probabilities and a center row c[v]; the
// members' weights are c[v](1 + xi) with mean-zero xi bounded by the noise
// level, so the planted partition has delta <= noise_delta.
inline GeneratedInstance generate_instance(const GeneratorConfig& cfg) {
  if (auto errs = validate_config(cfg); !errs.empty()) {
    std::string msg = "invalid generator config:";
    for (const auto& e : errs) msg += "\n  " + e;
    throw ValidationError(msg);
  }
  const std::size_t n = cfg.n_patients, k = cfg.n_clusters_planted;
  const std::size_t nv = cfg.n_donor_types, dim = cfg.feature_dim;
  const std::size_t latent = std::max<std::size_t>(dim, 1);

  GeneratedInstance out;
  MatchingInstance& inst = out.instance;
  inst.horizon = cfg.horizon;

  // planted partition: sizes differ by at most one, members contiguous
  Rng part_rng(derive_seed(cfg.seed, "partition"));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  shuffle(order, part_rng);
  ClusterList planted(k);
  for (std::size_t i = 0, pos = 0; i < k; ++i) {
    const std::size_t sz = n / k + (i < n % k ? 1 : 0);
    for (std::size_t j = 0; j < sz; ++j) planted[i].push_back(order[pos++]);
  }
  for (auto& c : planted) std::sort(c.begin(), c.end());
  std::sort(planted.begin(), planted.end());

  Rng blood_rng(derive_seed(cfg.seed, "blood"));
  const auto cluster_blood = detail::blood_type_quota(k, cfg.blood_type_frequencies, blood_rng);
  const auto donor_blood = detail::blood_type_quota(nv, cfg.blood_type_frequencies, blood_rng);

  Rng bad_rng(derive_seed(cfg.seed, "bad"));
  const std::size_t n_bad = static_cast<std::size_t>(
      std::llround(cfg.bad_cluster_fraction * static_cast<double>(k)));
  std::vector<std::size_t> cidx(k);
  std::iota(cidx.begin(), cidx.end(), 0);
  shuffle(cidx, bad_rng);
  std::vector<unsigned char> is_bad(k, 0);
  for (std::size_t i = 0; i < n_bad; ++i) {
    is_bad[cidx[i]] = 1;
    out.truth.bad_clusters.push_back(cidx[i]);
  }
  std::sort(out.truth.bad_clusters.begin(), out.truth.bad_clusters.end());

  // latent features
  Rng feat_rng(derive_seed(cfg.seed, "features"));
  Matrix<double> cluster_x(k, latent), donor_z(nv, latent);
  for (double& x : cluster_x.data()) x = standard_normal(feat_rng);
  for (double& z : donor_z.data()) z = standard_normal(feat_rng);
  std::vector<double> value_shift(k);
  for (double& s : value_shift) s = cfg.value_spread * standard_normal(feat_rng);

  // donor types
  Rng donor_rng(derive_seed(cfg.seed, "donors"));
  std::vector<double> raw_rate(nv);
  double rate_sum = 0.0;
  for (std::size_t v = 0; v < nv; ++v) {
    raw_rate[v] = gamma_draw(donor_rng, cfg.rate_shape);
    rate_sum += raw_rate[v];
  }
  inst.donor_types.resize(nv);
  double assigned = 0.0;
  for (std::size_t v = 0; v < nv; ++v) {
    DonorType& d = inst.donor_types[v];
    d.id = "D" + std::to_string(v);
    d.blood_type = donor_blood[v];
    d.features.assign(donor_z.row(v).begin(), donor_z.row(v).begin() + static_cast<long>(dim));
    d.location = detail::random_location(donor_rng, cfg.region_nm);
    d.arrival_rate = static_cast<double>(cfg.horizon) * raw_rate[v] / rate_sum;
    if (v + 1 < nv) assigned += d.arrival_rate;
  }
  inst.donor_types.back().arrival_rate =
      std::max(0.0, static_cast<double>(cfg.horizon) - assigned);

  // patients
  Rng pat_rng(derive_seed(cfg.seed, "patients"));
  static constexpr std::array<double, 6> kStatusShare = {0.10, 0.15, 0.20, 0.20, 0.20, 0.15};
  inst.patients.resize(n);
  inst.weights = Matrix<double>(n, nv, 0.0);
  inst.success_probs = Matrix<double>(n, nv, 1.0);
  inst.compatibility = Mask(n, nv, 0);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(latent));
  for (std::size_t c = 0; c < k; ++c) {
    const Location home = detail::random_location(pat_rng, cfg.region_nm);
    std::vector<double> center(nv), prob(nv);
    for (std::size_t v = 0; v < nv; ++v) {
      double dot = 0.0;
      for (std::size_t i = 0; i < latent; ++i) dot += cluster_x(c, i) * donor_z(v, i);
      center[v] = cfg.base_weight * std::exp(cfg.affinity * dot * inv_sqrt_d + value_shift[c]);
      if (is_bad[c]) center[v] *= cfg.bad_cluster_value_share;
      prob[v] = uniform(pat_rng, cfg.success_prob_min, cfg.success_prob_max);
    }
    const double spread = is_bad[c] ? cfg.bad_cluster_noise : cfg.noise_delta;
    std::vector<std::vector<double>> xi(nv);
    for (std::size_t v = 0; v < nv; ++v)
      xi[v] = detail::antithetic_noise(planted[c].size(), spread, pat_rng);
    for (std::size_t m = 0; m < planted[c].size(); ++m) {
      const std::size_t u = planted[c][m];
      PatientNode& p = inst.patients[u];
      p.id = "P" + std::to_string(u);
      p.blood_type = cluster_blood[c];
      p.features.resize(dim);
      for (std::size_t i = 0; i < dim; ++i)
        p.features[i] = cluster_x(c, i) + 0.1 * standard_normal(pat_rng);
      double x = uniform01(pat_rng), acc = 0.0;
      p.status = 6;
      for (int s = 0; s < 6; ++s) {
        acc += kStatusShare[static_cast<std::size_t>(s)];
        if (x < acc) {
          p.status = s + 1;
          break;
        }
      }
      p.location = {std::clamp(home.x + 50.0 * standard_normal(pat_rng), 0.0, cfg.region_nm),
                    std::clamp(home.y + 50.0 * standard_normal(pat_rng), 0.0, cfg.region_nm)};
      for (std::size_t v = 0; v < nv; ++v) {
        if (!abo_compatible(inst.donor_types[v].blood_type, p.blood_type)) continue;
        inst.compatibility(u, v) = 1;
        inst.weights(u, v) = center[v] * (1.0 + xi[v][m]);
        inst.success_probs(u, v) = prob[v];
      }
    }
  }

  out.truth.planted = planted;
  out.truth.true_weights = inst.weights;
  if (cfg.eta > 0.0) {
    Rng eta_rng(derive_seed(cfg.seed, "eta"));
    const double bound = cfg.eta * (1.0 - 1e-9);
    for (double& w : out.truth.true_weights.data())
      w *= 1.0 + uniform(eta_rng, -bound, bound);
  }
  require_valid(inst);
  return out;
}

// Donor arrival sequence over the horizon. Poisson mode draws a Poisson(r_v)
// count per type and shuffles the merged list; iid-rounds mode draws exactly
// T arrivals, each of type v with probability r_v / T.
inline std::vector<ArrivalEvent> sample_arrivals(const MatchingInstance& inst,
                                                 std::uint64_t seed,
                                                 ArrivalMode mode = ArrivalMode::Poisson) {
  std::vector<ArrivalEvent> out;
  const std::size_t nv = inst.num_donor_types();
  if (mode == ArrivalMode::Poisson) {
    Rng rng(derive_seed(seed, "arrivals-poisson"));
    for (std::size_t v = 0; v < nv; ++v) {
      const auto count = poisson(rng, inst.donor_types[v].arrival_rate);
      for (std::uint64_t i = 0; i < count; ++i) out.push_back({0, v});
    }
    shuffle(out, rng);
  } else {
    Rng rng(derive_seed(seed, "arrivals-iid"));
    double total = 0.0;
    for (const auto& d : inst.donor_types) total += d.arrival_rate;
    if (total <= 0.0) return out;
    for (int t = 0; t < inst.horizon; ++t) {
      const double x = uniform01(rng) * total;
      double acc = 0.0;
      std::size_t pick = nv - 1;
      for (std::size_t v = 0; v < nv; ++v) {
        acc += inst.donor_types[v].arrival_rate;
        if (x < acc) {
          pick = v;
          break;
        }
      }
      while (inst.donor_types[pick].arrival_rate <= 0.0 && pick > 0) --pick;
      out.push_back({0, pick});
    }
  }
  for (std::size_t t = 0; t < out.size(); ++t) out[t].round = static_cast<int>(t) + 1;
  return out;
}

struct DonorPool {
  std::vector<BloodType> blood_types;
  Matrix<double> features;  // donor x feature
};

// Historical donors from a Gaussian mixture with `modes` components per
// blood type.
inline DonorPool generate_donor_pool(std::size_t n, std::size_t dim, std::size_t modes,
                                     const std::array<double, 4>& freq, std::uint64_t seed) {
  if (modes == 0) throw ValidationError("donor pool: modes must be positive");
  Rng rng(derive_seed(seed, "donor-pool"));
  DonorPool pool;
  pool.blood_types = detail::blood_type_quota(n, freq, rng);
  Matrix<double> means(4 * modes, dim);
  for (double& m : means.data()) m = 2.0 * standard_normal(rng);
  pool.features = Matrix<double>(n, dim);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t comp = static_cast<std::size_t>(pool.blood_types[i]) * modes +
                             uniform_index(rng, modes);
    for (std::size_t d = 0; d < dim; ++d)
      pool.features(i, d) = means(comp, d) + standard_normal(rng);
  }
  return pool;
}

struct DiscretizedDonors {
  std::vector<DonorType> types;
  std::vector<std::size_t> labels;  // pool donor -> type index
  double ase = 0.0;                 // mean squared distance to the assigned centroid
  double explained_variance = 0.0;  // 1 - ASE / total variance
};

// k-means with k centroids inside each blood-type partition. A type's rate is
// horizon times the fraction of pool donors assigned to it. Total variance
// is measured around each partition's own mean, so k = 1 explains nothing.
inline DiscretizedDonors discretize_donors(const DonorPool& pool, std::size_t k,
                                           std::uint64_t seed, double horizon = 1.0) {
  const std::size_t n = pool.features.rows();
  if (pool.blood_types.size() != n) throw ValidationError("donor pool: size mismatch");
  if (n == 0) throw ValidationError("donor pool: empty");
  if (k == 0) throw ValidationError("discretize_donors: k must be positive");
  DiscretizedDonors out;
  out.labels.assign(n, 0);
  double sse = 0.0, sst = 0.0;
  for (BloodType bt : kBloodTypes) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < n; ++i)
      if (pool.blood_types[i] == bt) members.push_back(i);
    if (members.empty()) continue;
    if (k > members.size())
      throw ValidationError("discretize_donors: k = " + std::to_string(k) +
                            " exceeds the " + std::string(to_string(bt)) +
                            " partition size " + std::to_string(members.size()));
    Rng rng(derive_seed(seed, "discretize", {static_cast<std::uint64_t>(bt)}));
    const KMeansResult km = kmeans(pool.features, members, k, rng);
    const auto mu = centroid_of(pool.features, members);
    std::vector<std::vector<std::size_t>> groups(k);
    for (std::size_t i = 0; i < members.size(); ++i) groups[km.labels[i]].push_back(members[i]);
    for (std::size_t g = 0; g < k; ++g) {
      if (groups[g].empty()) continue;
      const auto cent = centroid_of(pool.features, groups[g]);
      DonorType t;
      t.id = std::string(to_string(bt)) + "-" + std::to_string(g);
      t.blood_type = bt;
      t.features.assign(cent.row(0).begin(), cent.row(0).end());
      t.arrival_rate = horizon * static_cast<double>(groups[g].size()) / static_cast<double>(n);
      for (auto i : groups[g]) {
        out.labels[i] = out.types.size();
        sse += squared_distance(pool.features.row(i), cent.row(0));
      }
      out.types.push_back(std::move(t));
    }
    for (auto i : members) sst += squared_distance(pool.features.row(i), mu.row(0));
  }
  out.ase = sse / static_cast<double>(n);
  out.explained_variance = sst > 0.0 ? 1.0 - sse / sst : 1.0;
  return out;
}

}  // namespace coarsematch
