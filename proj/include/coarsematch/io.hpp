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
#include <cstdio>
#include <filesystem>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "coarsematch/clustering.hpp"
#include "coarsematch/instance_io.hpp"
#include "coarsematch/lp.hpp"
#include "coarsematch/policies.hpp"

namespace coarsematch {

enum class TableFormat { Csv, Json };

inline std::optional<TableFormat> parse_table_format(std::string_view s) {
  if (s == "csv") return TableFormat::Csv;
  if (s == "json") return TableFormat::Json;
  return std::nullopt;
}

// Shortest decimal text that parses back to the same double. NaN is "".
inline std::string fmt(double x) {
  if (std::isnan(x)) return "";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  if (x == 0.0) return "0";
  char buf[32];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, x);
    if (std::strtod(buf, nullptr) == x) break;
  }
  return buf;
}

inline double parse_double(std::string_view s) {
  if (s.empty()) return std::nan("");
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  std::string tmp(s);
  char* end = nullptr;
  const double x = std::strtod(tmp.c_str(), &end);
  if (end != tmp.c_str() + tmp.size()) throw ParseError("not a number: '" + tmp + "'");
  return x;
}

// A header plus rows of preformatted cells. Cells never contain commas or
// newlines, so CSV needs no quoting.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void add(std::vector<std::string> row) {
    if (row.size() != header.size()) throw Error("table: row width differs from header");
    rows.push_back(std::move(row));
  }
  std::size_t column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw ParseError("table: missing column '" + std::string(name) + "'");
  }
};

inline void write_csv(std::ostream& out, const Table& t) {
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
    out << '\n';
  };
  line(t.header);
  for (const auto& r : t.rows) line(r);
}

// JSON form: an array of objects, numeric-looking cells emitted as numbers.
inline json table_to_json(const Table& t) {
  json arr = json::array();
  for (const auto& r : t.rows) {
    json obj = json::object();
    for (std::size_t i = 0; i < r.size(); ++i) {
      const std::string& c = r[i];
      char* end = nullptr;
      const double x = c.empty() ? 0.0 : std::strtod(c.c_str(), &end);
      if (c.empty()) obj[t.header[i]] = nullptr;
      else if (end == c.c_str() + c.size() && std::isfinite(x)) obj[t.header[i]] = x;
      else obj[t.header[i]] = c;
    }
    arr.push_back(std::move(obj));
  }
  return arr;
}

// Writes `stem`.csv or `stem`.json and returns the path written.
inline std::filesystem::path write_table(const std::filesystem::path& stem, const Table& t,
                                         TableFormat format = TableFormat::Csv) {
  std::filesystem::path path = stem;
  path += format == TableFormat::Csv ? ".csv" : ".json";
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  if (format == TableFormat::Csv) write_csv(out, t);
  else out << table_to_json(t).dump(1) << '\n';
  return path;
}

inline Table read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  auto split = [](const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
  };
  Table t;
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path.string() + ": empty file");
  t.header = split(line);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto cells = split(line);
    if (cells.size() != t.header.size())
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                       std::to_string(t.header.size()) + " cells");
    t.rows.push_back(std::move(cells));
  }
  return t;
}

inline json to_json(const Clustering& c) {
  return json{{"method", to_string(c.method)},
              {"min_size", c.min_size},
              {"clusters", c.clusters},
              {"assignments", c.assignments},
              {"representative_weights", detail::matrix_to_json(c.representative_weights)},
              {"delta_max", std::isfinite(c.delta_max) ? json(c.delta_max) : json(nullptr)}};
}

// Representative weights are recomputed from the instance.
inline Clustering clustering_from_json(const json& j, const MatchingInstance& inst) {
  try {
    const auto method = parse_cluster_method(j.at("method").get<std::string>());
    if (!method) throw ParseError("clustering: unknown method");
    return make_clustering(inst, j.at("clusters").get<ClusterList>(),
                           j.at("min_size").get<std::size_t>(), *method);
  } catch (const json::exception& e) {
    throw ParseError(std::string("clustering: ") + e.what());
  }
}

inline json to_json(const DispatchPlan& p) {
  return json{{"clustered", p.clustered},
              {"objective", p.objective},
              {"dual_objective", p.dual_objective},
              {"iterations", p.iterations},
              {"capacities", p.capacities},
              {"rates", p.rates},
              {"capacity_duals", p.capacity_duals},
              {"rate_duals", p.rate_duals},
              {"flows", detail::matrix_to_json(p.flows)}};
}

inline DispatchPlan plan_from_json(const json& j) {
  try {
    DispatchPlan p;
    p.clustered = j.at("clustered").get<bool>();
    p.objective = j.at("objective").get<double>();
    p.dual_objective = j.at("dual_objective").get<double>();
    p.iterations = j.at("iterations").get<std::size_t>();
    p.capacities = j.at("capacities").get<std::vector<double>>();
    p.rates = j.at("rates").get<std::vector<double>>();
    p.capacity_duals = j.at("capacity_duals").get<std::vector<double>>();
    p.rate_duals = j.at("rate_duals").get<std::vector<double>>();
    p.flows = detail::matrix_from_json<double>(j.at("flows"), "flows");
    return p;
  } catch (const json::exception& e) {
    throw ParseError(std::string("plan: ") + e.what());
  }
}

inline Table arrivals_table(const std::vector<ArrivalEvent>& arrivals) {
  Table t{{"round", "donor_type"}, {}};
  for (const auto& a : arrivals) t.add({std::to_string(a.round), std::to_string(a.donor_type)});
  return t;
}

inline std::vector<ArrivalEvent> arrivals_from_table(const Table& t) {
  const auto rc = t.column("round"), vc = t.column("donor_type");
  std::vector<ArrivalEvent> out;
  for (const auto& r : t.rows)
    out.push_back({std::stoi(r[rc]), static_cast<std::size_t>(std::stoull(r[vc]))});
  return out;
}

inline Table records_table(const std::vector<MatchRecord>& records, const std::string& policy = "") {
  Table t{{"round", "donor_type", "patient", "success", "weight", "policy"}, {}};
  for (const auto& r : records)
    t.add({std::to_string(r.round), std::to_string(r.donor_type),
           r.patient ? std::to_string(*r.patient) : "", r.success ? "1" : "0",
           fmt(r.realized_weight), policy});
  return t;
}

inline std::vector<MatchRecord> records_from_table(const Table& t) {
  const auto rc = t.column("round"), vc = t.column("donor_type"), pc = t.column("patient"),
             sc = t.column("success"), wc = t.column("weight");
  std::vector<MatchRecord> out;
  for (const auto& r : t.rows) {
    MatchRecord m;
    m.round = std::stoi(r[rc]);
    m.donor_type = static_cast<std::size_t>(std::stoull(r[vc]));
    if (!r[pc].empty()) m.patient = static_cast<std::size_t>(std::stoull(r[pc]));
    m.success = r[sc] == "1";
    m.realized_weight = parse_double(r[wc]);
    out.push_back(m);
  }
  return out;
}

}  // namespace coarsematch
