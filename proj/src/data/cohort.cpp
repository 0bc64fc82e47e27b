/*
 * Copyright 2026 The DynST Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "dynst/data/cohort.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <numeric>
#include <string>

#include "json.hpp"

#include "dynst/error.hpp"

namespace dynst {

std::size_t Cohort::static_width() const {
  return patients.empty() ? 1 : patients.front().z.size() + 1;
}

void Cohort::validate() const {
  if (t_max == 0) throw FormatError("cohort: t_max must be positive");
  const std::size_t zw = patients.empty() ? 0 : patients.front().z.size();
  for (const auto& p : patients) {
    const std::string who = "patient " + std::to_string(p.id);
    if (p.z.size() != zw) throw FormatError(who + ": inconsistent static width");
    if (q == 0 ? !p.v.empty() : (p.v.empty() || p.v.size() % q != 0 ||
                                 p.v.size() / q > t_max)) {
      throw FormatError(who + ": temporal matrix does not fit t_max x q");
    }
    if (p.observed_time < 1 || static_cast<std::size_t>(p.observed_time) > t_max) {
      throw FormatError(who + ": observed time outside 1..t_max");
    }
    if (p.event != 0 && p.event != 1) throw FormatError(who + ": event must be 0/1");
    if (p.treatment != 0 && p.treatment != 1) {
      throw FormatError(who + ": treatment must be 0/1");
    }
  }
}

Batch make_batch(const Cohort& cohort, std::span<const std::size_t> indices,
                 std::optional<int> forced_treatment) {
  Batch b;
  b.size = indices.size();
  b.t_max = cohort.t_max;
  b.p = cohort.static_width();
  b.q = cohort.q;
  b.static_features.reserve(b.size * b.p);
  b.temporal.reserve(b.size * b.t_max * b.q);
  for (std::size_t idx : indices) {
    if (idx >= cohort.size()) throw ShapeError("make_batch: index out of range");
    const PatientRecord& rec = cohort.patients[idx];
    if (rec.z.size() + 1 != b.p) {
      throw ShapeError("make_batch: patient " + std::to_string(rec.id) +
                       " has static width " + std::to_string(rec.z.size()) +
                       ", expected " + std::to_string(b.p - 1));
    }
    b.static_features.insert(b.static_features.end(), rec.z.begin(), rec.z.end());
    b.static_features.push_back(forced_treatment.value_or(rec.treatment));
    if (b.q > 0) {
      const std::size_t rows = rec.v.size() / b.q;
      if (rows == 0 || rows > b.t_max || rec.v.size() % b.q != 0) {
        throw ShapeError("make_batch: patient " + std::to_string(rec.id) +
                         " temporal matrix does not fit t_max x q");
      }
      b.temporal.insert(b.temporal.end(), rec.v.begin(), rec.v.end());
      for (std::size_t r = rows; r < b.t_max; ++r) {
        b.temporal.insert(b.temporal.end(), rec.v.end() - static_cast<std::ptrdiff_t>(b.q),
                          rec.v.end());
      }
    }
    b.observed_time.push_back(rec.observed_time);
    b.event.push_back(rec.event);
  }
  return b;
}

Batch make_batch(const Cohort& cohort, std::optional<int> forced_treatment) {
  std::vector<std::size_t> all(cohort.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return make_batch(cohort, all, forced_treatment);
}

Cohort subset(const Cohort& cohort, std::span<const std::size_t> indices) {
  Cohort out;
  out.t_max = cohort.t_max;
  out.q = cohort.q;
  out.patients.reserve(indices.size());
  for (std::size_t i : indices) out.patients.push_back(cohort.patients.at(i));
  return out;
}

void write_cohort_jsonl(std::ostream& out, const Cohort& cohort) {
  for (const auto& p : cohort.patients) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t r = 0; cohort.q > 0 && r < p.v.size() / cohort.q; ++r) {
      rows.push_back(std::vector<double>(p.v.begin() + static_cast<std::ptrdiff_t>(r * cohort.q),
                                         p.v.begin() + static_cast<std::ptrdiff_t>((r + 1) * cohort.q)));
    }
    nlohmann::json j{{"id", p.id},       {"z", p.z},
                     {"v", rows},        {"a", p.treatment},
                     {"o", p.observed_time}, {"delta", p.event}};
    out << j.dump() << '\n';
  }
}

Cohort read_cohort_jsonl(std::istream& in, std::optional<std::size_t> t_max) {
  Cohort cohort;
  std::size_t longest = 0;
  bool q_known = false;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = "cohort line " + std::to_string(line_no);
    try {
      const auto j = nlohmann::json::parse(line);
      PatientRecord rec;
      rec.id = j.at("id").get<int>();
      rec.z = j.at("z").get<std::vector<double>>();
      const auto rows = j.at("v").get<std::vector<std::vector<double>>>();
      for (const auto& row : rows) {
        if (!q_known) {
          cohort.q = row.size();
          q_known = true;
        }
        if (row.size() != cohort.q) throw FormatError(where + ": ragged temporal rows");
        rec.v.insert(rec.v.end(), row.begin(), row.end());
      }
      longest = std::max(longest, rows.size());
      rec.treatment = j.at("a").get<int>();
      rec.observed_time = j.at("o").get<int>();
      rec.event = j.at("delta").get<int>();
      cohort.patients.push_back(std::move(rec));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(where + ": " + e.what());
    }
  }
  cohort.t_max = t_max.value_or(longest);
  cohort.validate();
  return cohort;
}

}  // namespace dynst
