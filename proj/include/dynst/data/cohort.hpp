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

#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

namespace dynst {

// Indices into PatientRecord::z.
enum StaticFeature : std::size_t {
  kMale = 0,
  kHypertension = 1,
  kCoronaryAtherosclerosis = 2,
  kAtrialFibrillation = 3,
  kSeverelyIll = 4,
  kNumStaticFeatures = 5,
};

// Indices into the columns of PatientRecord::v.
enum TemporalFeature : std::size_t {
  kHematocrit = 0,
  kHemoglobin = 1,
  kPlatelets = 2,
  kMeanBloodPressure = 3,
  kNumTemporalFeatures = 4,
};

// Model-visible data for one patient.
struct PatientRecord {
  int id = 0;
  std::vector<double> z;
  // Row-major [rows x q]; rows may be shorter than the cohort horizon, in
  // which case the last row is carried forward.
  std::vector<double> v;
  int treatment = 0;
  int observed_time = 1;
  int event = 0;
};

struct Cohort {
  std::size_t t_max = 0;
  std::size_t q = 0;
  std::vector<PatientRecord> patients;

  std::size_t size() const { return patients.size(); }
  // Number of model static inputs: z plus the treatment bit.
  std::size_t static_width() const;
  // Throws FormatError on records that break the cohort invariants.
  void validate() const;
};

// Dense model inputs for a set of patients. The treatment bit is appended as
// the last static feature so counterfactual prediction is a feature
// substitution.
struct Batch {
  std::size_t size = 0;
  std::size_t t_max = 0;
  std::size_t p = 0;
  std::size_t q = 0;
  std::vector<double> static_features;  // [size x p]
  std::vector<double> temporal;         // [size x t_max x q]
  std::vector<int> observed_time;
  std::vector<int> event;
};

Batch make_batch(const Cohort& cohort, std::span<const std::size_t> indices,
                 std::optional<int> forced_treatment = std::nullopt);
Batch make_batch(const Cohort& cohort,
                 std::optional<int> forced_treatment = std::nullopt);

Cohort subset(const Cohort& cohort, std::span<const std::size_t> indices);

// One JSON object per line: {"id", "z", "v" (list of rows), "a", "o",
// "delta"}.
void write_cohort_jsonl(std::ostream& out, const Cohort& cohort);
// The horizon defaults to the longest temporal matrix in the file. Throws
// FormatError on malformed lines or records.
Cohort read_cohort_jsonl(std::istream& in, std::optional<std::size_t> t_max = std::nullopt);

}  // namespace dynst
