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
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "coarsematch/error.hpp"
#include "coarsematch/matrix.hpp"

namespace coarsematch {

enum class BloodType { O, A, B, AB };

inline constexpr BloodType kBloodTypes[] = {BloodType::O, BloodType::A,
                                            BloodType::B, BloodType::AB};

inline std::string_view to_string(BloodType b) {
  switch (b) {
    case BloodType::O: return "O";
    case BloodType::A: return "A";
    case BloodType::B: return "B";
    case BloodType::AB: return "AB";
  }
  return "?";
}

inline std::optional<BloodType> parse_blood_type(std::string_view s) {
  if (s == "O") return BloodType::O;
  if (s == "A") return BloodType::A;
  if (s == "B") return BloodType::B;
  if (s == "AB") return BloodType::AB;
  return std::nullopt;
}

// Classic ABO donation rule: O gives to all, A and B to themselves and AB,
// AB only to AB.
constexpr bool abo_compatible(BloodType donor, BloodType patient) noexcept {
  switch (donor) {
    case BloodType::O: return true;
    case BloodType::A: return patient == BloodType::A || patient == BloodType::AB;
    case BloodType::B: return patient == BloodType::B || patient == BloodType::AB;
    case BloodType::AB: return patient == BloodType::AB;
  }
  return false;
}

// Planar coordinates in nautical miles.
struct Location {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Location&, const Location&) = default;
};

inline double distance(const Location& a, const Location& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

struct PatientNode {
  std::string id;
  std::vector<double> features;
  BloodType blood_type = BloodType::O;
  int status = 1;  // medical urgency, 1 (most urgent) .. 6
  Location location;
  friend bool operator==(const PatientNode&, const PatientNode&) = default;
};

struct DonorType {
  std::string id;
  BloodType blood_type = BloodType::O;
  std::vector<double> features;
  double arrival_rate = 0.0;  // expected arrivals over the horizon
  Location location;
  friend bool operator==(const DonorType&, const DonorType&) = default;
};

// Offline patients U, online donor types V, and the dense |U| x |V| edge
// data. Immutable once validated; share freely across threads.
struct MatchingInstance {
  std::vector<PatientNode> patients;
  std::vector<DonorType> donor_types;
  Matrix<double> weights;
  Matrix<double> success_probs;
  Mask compatibility;
  int horizon = 0;

  std::size_t num_patients() const noexcept { return patients.size(); }
  std::size_t num_donor_types() const noexcept { return donor_types.size(); }
  bool compatible(std::size_t u, std::size_t v) const {
    return compatibility(u, v) != 0;
  }

  friend bool operator==(const MatchingInstance&,
                         const MatchingInstance&) = default;
};

// One donor arrival. `donor_type` indexes MatchingInstance::donor_types.
struct ArrivalEvent {
  int round = 0;
  std::size_t donor_type = 0;
  friend bool operator==(const ArrivalEvent&, const ArrivalEvent&) = default;
};

inline constexpr double kRateSumTolerance = 1e-9;

// Every violated invariant, one human-readable line each. Empty iff valid.
inline std::vector<std::string> validate_instance(const MatchingInstance& inst) {
  std::vector<std::string> out;
  const std::size_t nu = inst.patients.size();
  const std::size_t nv = inst.donor_types.size();

  if (inst.horizon <= 0) out.emplace_back("horizon: must be a positive integer");

  const auto check_dims = [&](std::string_view name, std::size_t r,
                              std::size_t c) {
    if (r != nu || c != nv) {
      out.push_back(std::string(name) + ": dimensions " + std::to_string(r) +
                    "x" + std::to_string(c) + " do not match " +
                    std::to_string(nu) + " patients x " + std::to_string(nv) +
                    " donor types");
      return false;
    }
    return true;
  };
  const bool w_ok = check_dims("weights", inst.weights.rows(), inst.weights.cols());
  const bool p_ok = check_dims("success_probs", inst.success_probs.rows(),
                               inst.success_probs.cols());
  const bool c_ok = check_dims("compatibility", inst.compatibility.rows(),
                               inst.compatibility.cols());

  const std::size_t dim = nu > 0 ? inst.patients.front().features.size() : 0;
  for (std::size_t u = 0; u < nu; ++u) {
    const auto& p = inst.patients[u];
    if (p.status < 1 || p.status > 6)
      out.push_back("patients[" + std::to_string(u) +
                    "].status: must lie in 1..6, got " + std::to_string(p.status));
    if (p.features.size() != dim)
      out.push_back("patients[" + std::to_string(u) +
                    "].features: length " + std::to_string(p.features.size()) +
                    " differs from feature dimension " + std::to_string(dim));
  }

  double rate_sum = 0.0;
  for (std::size_t v = 0; v < nv; ++v) {
    const double r = inst.donor_types[v].arrival_rate;
    if (!(r >= 0.0) || !std::isfinite(r))
      out.push_back("donor_types[" + std::to_string(v) +
                    "].arrival_rate: must be a finite value >= 0");
    rate_sum += r;
  }
  if (std::abs(rate_sum - static_cast<double>(inst.horizon)) > kRateSumTolerance)
    out.push_back("arrival rates do not sum to horizon (sum " +
                  std::to_string(rate_sum) + ", horizon " +
                  std::to_string(inst.horizon) + ")");

  if (w_ok) {
    bool negative = false, nonfinite = false, masked = false;
    for (std::size_t u = 0; u < nu; ++u)
      for (std::size_t v = 0; v < nv; ++v) {
        const double w = inst.weights(u, v);
        if (!std::isfinite(w)) nonfinite = true;
        else if (w < 0.0) negative = true;
        if (c_ok && !inst.compatible(u, v) && w != 0.0) masked = true;
      }
    if (nonfinite) out.emplace_back("weights: weight not finite");
    if (negative) out.emplace_back("weights: weight negative");
    if (masked) out.emplace_back("weights: weight nonzero on incompatible edge");
  }
  if (p_ok) {
    bool bad = false;
    for (double p : inst.success_probs.data())
      if (!(p >= 0.0 && p <= 1.0)) bad = true;
    if (bad) out.emplace_back("success_probs: success probability out of [0,1]");
  }
  return out;
}

inline void require_valid(const MatchingInstance& inst) {
  const auto violations = validate_instance(inst);
  if (violations.empty()) return;
  std::string msg = "invalid instance:";
  for (const auto& v : violations) msg += "\n  " + v;
  throw ValidationError(msg);
}

}  // namespace coarsematch
