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

#include <array>
#include <limits>
#include <optional>

#include "coarsematch/instance.hpp"

namespace coarsematch {

enum class BloodMatch { Primary, Secondary, Incompatible };

// Secondary compatibility exists only from type O donors to type A or AB
// patients; every other ABO-compatible pairing is primary.
constexpr BloodMatch blood_match(BloodType donor, BloodType patient) noexcept {
  if (!abo_compatible(donor, patient)) return BloodMatch::Incompatible;
  if (donor == BloodType::O && (patient == BloodType::A || patient == BloodType::AB))
    return BloodMatch::Secondary;
  return BloodMatch::Primary;
}

struct TierRule {
  int status;
  BloodMatch match;
  double max_distance_nm;  // +inf for "any distance"
};

inline constexpr double kAnyDistance = std::numeric_limits<double>::infinity();

// Adult heart allocation priority tiers, highest priority first. The
// distance bands interleave across statuses; row order is the priority.
inline constexpr std::array<TierRule, 68> kHeartTiers = {{
    {1, BloodMatch::Primary, 500},   {1, BloodMatch::Secondary, 500},
    {2, BloodMatch::Primary, 500},   {2, BloodMatch::Secondary, 500},
    {3, BloodMatch::Primary, 250},   {3, BloodMatch::Secondary, 250},
    {1, BloodMatch::Primary, 1000},  {1, BloodMatch::Secondary, 1000},
    {2, BloodMatch::Primary, 1000},  {2, BloodMatch::Secondary, 1000},
    {4, BloodMatch::Primary, 250},   {4, BloodMatch::Secondary, 250},
    {3, BloodMatch::Primary, 500},   {3, BloodMatch::Secondary, 500},
    {5, BloodMatch::Primary, 250},   {5, BloodMatch::Secondary, 250},
    {3, BloodMatch::Primary, 1000},  {3, BloodMatch::Secondary, 1000},
    {6, BloodMatch::Primary, 250},   {6, BloodMatch::Secondary, 250},
    {1, BloodMatch::Primary, 1500},  {1, BloodMatch::Secondary, 1500},
    {2, BloodMatch::Primary, 1500},  {2, BloodMatch::Secondary, 1500},
    {3, BloodMatch::Primary, 1500},  {3, BloodMatch::Secondary, 1500},
    {4, BloodMatch::Primary, 500},   {4, BloodMatch::Secondary, 500},
    {5, BloodMatch::Primary, 500},   {5, BloodMatch::Secondary, 500},
    {6, BloodMatch::Primary, 500},   {6, BloodMatch::Secondary, 500},
    {1, BloodMatch::Primary, 2500},  {1, BloodMatch::Secondary, 2500},
    {2, BloodMatch::Primary, 2500},  {2, BloodMatch::Secondary, 2500},
    {3, BloodMatch::Primary, 2500},  {3, BloodMatch::Secondary, 2500},
    {4, BloodMatch::Primary, 1000},  {4, BloodMatch::Secondary, 1000},
    {5, BloodMatch::Primary, 1000},  {5, BloodMatch::Secondary, 1000},
    {6, BloodMatch::Primary, 1000},  {6, BloodMatch::Secondary, 1000},
    {1, BloodMatch::Primary, kAnyDistance}, {1, BloodMatch::Secondary, kAnyDistance},
    {2, BloodMatch::Primary, kAnyDistance}, {2, BloodMatch::Secondary, kAnyDistance},
    {3, BloodMatch::Primary, kAnyDistance}, {3, BloodMatch::Secondary, kAnyDistance},
    {4, BloodMatch::Primary, 1500},  {4, BloodMatch::Secondary, 1500},
    {5, BloodMatch::Primary, 1500},  {5, BloodMatch::Secondary, 1500},
    {6, BloodMatch::Primary, 1500},  {6, BloodMatch::Secondary, 1500},
    {4, BloodMatch::Primary, 2500},  {4, BloodMatch::Secondary, 2500},
    {5, BloodMatch::Primary, 2500},  {5, BloodMatch::Secondary, 2500},
    {6, BloodMatch::Primary, 2500},  {6, BloodMatch::Secondary, 2500},
    {4, BloodMatch::Primary, kAnyDistance}, {4, BloodMatch::Secondary, kAnyDistance},
    {5, BloodMatch::Primary, kAnyDistance}, {5, BloodMatch::Secondary, kAnyDistance},
    {6, BloodMatch::Primary, kAnyDistance}, {6, BloodMatch::Secondary, kAnyDistance},
}};

// First (highest-priority) tier whose status, blood match and distance
// bound all hold. nullopt means incompatible.
inline std::optional<int> tier_for(int status, BloodMatch match, double distance_nm) {
  if (match == BloodMatch::Incompatible) return std::nullopt;
  for (std::size_t i = 0; i < kHeartTiers.size(); ++i) {
    const TierRule& t = kHeartTiers[i];
    if (t.status == status && t.match == match && distance_nm <= t.max_distance_nm)
      return static_cast<int>(i) + 1;
  }
  return std::nullopt;
}

inline std::optional<int> status_quo_tier(const PatientNode& patient,
                                          const DonorType& donor) {
  return tier_for(patient.status, blood_match(donor.blood_type, patient.blood_type),
                  distance(patient.location, donor.location));
}

}  // namespace coarsematch
