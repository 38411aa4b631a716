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

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "coarsematch/instance.hpp"

namespace coarsematch {

using json = nlohmann::json;

namespace detail {

inline json location_to_json(const Location& l) { return json::array({l.x, l.y}); }

inline Location location_from_json(const json& j) {
  if (!j.is_array() || j.size() != 2)
    throw ParseError("location: expected [x, y]");
  return {j[0].get<double>(), j[1].get<double>()};
}

template <typename T>
json matrix_to_json(const Matrix<T>& m) {
  json rows = json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (std::size_t c = 0; c < m.cols(); ++c) {
      if constexpr (std::is_same_v<T, unsigned char>)
        row.push_back(m(r, c) != 0);
      else
        row.push_back(m(r, c));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

template <typename T>
Matrix<T> matrix_from_json(const json& j, std::string_view name) {
  if (!j.is_array()) throw ParseError(std::string(name) + ": expected array of rows");
  const std::size_t rows = j.size();
  const std::size_t cols = rows > 0 ? j[0].size() : 0;
  Matrix<T> m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    if (!j[r].is_array() || j[r].size() != cols)
      throw ParseError(std::string(name) + ": ragged row " + std::to_string(r));
    for (std::size_t c = 0; c < cols; ++c) {
      const json& x = j[r][c];
      if constexpr (std::is_same_v<T, unsigned char>)
        m(r, c) = x.is_boolean() ? x.get<bool>() : (x.get<double>() != 0.0);
      else
        m(r, c) = x.get<T>();
    }
  }
  return m;
}

inline BloodType blood_from_json(const json& j) {
  auto b = parse_blood_type(j.get<std::string>());
  if (!b) throw ParseError("blood_type: expected one of O, A, B, AB");
  return *b;
}

}  // namespace detail

inline json to_json(const MatchingInstance& inst) {
  json j;
  j["horizon"] = inst.horizon;
  json patients = json::array();
  for (const auto& p : inst.patients)
    patients.push_back({{"id", p.id},
                        {"features", p.features},
                        {"blood_type", std::string(to_string(p.blood_type))},
                        {"status", p.status},
                        {"location", detail::location_to_json(p.location)}});
  j["patients"] = std::move(patients);
  json donors = json::array();
  for (const auto& d : inst.donor_types)
    donors.push_back({{"id", d.id},
                      {"features", d.features},
                      {"blood_type", std::string(to_string(d.blood_type))},
                      {"arrival_rate", d.arrival_rate},
                      {"location", detail::location_to_json(d.location)}});
  j["donor_types"] = std::move(donors);
  j["weights"] = detail::matrix_to_json(inst.weights);
  j["success_probs"] = detail::matrix_to_json(inst.success_probs);
  j["compatibility"] = detail::matrix_to_json(inst.compatibility);
  return j;
}

// Structural decoding only; call validate_instance for the invariants.
inline MatchingInstance instance_from_json(const json& j) {
  try {
    MatchingInstance inst;
    inst.horizon = j.at("horizon").get<int>();
    for (const auto& p : j.at("patients")) {
      PatientNode n;
      n.id = p.at("id").get<std::string>();
      n.features = p.value("features", std::vector<double>{});
      n.blood_type = detail::blood_from_json(p.at("blood_type"));
      n.status = p.at("status").get<int>();
      if (p.contains("location")) n.location = detail::location_from_json(p["location"]);
      inst.patients.push_back(std::move(n));
    }
    for (const auto& d : j.at("donor_types")) {
      DonorType t;
      t.id = d.at("id").get<std::string>();
      t.features = d.value("features", std::vector<double>{});
      t.blood_type = detail::blood_from_json(d.at("blood_type"));
      t.arrival_rate = d.at("arrival_rate").get<double>();
      if (d.contains("location")) t.location = detail::location_from_json(d["location"]);
      inst.donor_types.push_back(std::move(t));
    }
    inst.weights = detail::matrix_from_json<double>(j.at("weights"), "weights");
    inst.success_probs =
        detail::matrix_from_json<double>(j.at("success_probs"), "success_probs");
    inst.compatibility =
        detail::matrix_from_json<unsigned char>(j.at("compatibility"), "compatibility");
    return inst;
  } catch (const json::exception& e) {
    throw ParseError(std::string("instance: ") + e.what());
  }
}

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

inline void write_json_file(const std::filesystem::path& path, const json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(1) << '\n';
}

inline MatchingInstance load_instance(const std::filesystem::path& path) {
  MatchingInstance inst = instance_from_json(read_json_file(path));
  require_valid(inst);
  return inst;
}

inline void save_instance(const std::filesystem::path& path,
                          const MatchingInstance& inst) {
  write_json_file(path, to_json(inst));
}

}  // namespace coarsematch
