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

// Self-checks run by the smoke experiment and the gradcheck command.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "dynst/data/cohort.hpp"
#include "dynst/model/survival_model.hpp"

namespace dynst::pipeline {

struct CheckResult {
  std::string name;
  double value = 0.0;  // observed error
  double tolerance = 0.0;
  bool passed = false;
};

void to_json(nlohmann::json& j, const CheckResult& r);

// Finite-difference checks of every primitive (tolerance 1e-4) and of the
// full training loss through a small transformer (3 patients, t_max = 6,
// tolerance 1e-3).
std::vector<CheckResult> gradient_checks(std::uint64_t seed);

// Largest change of q_hat(1..t) caused by perturbing temporal inputs after t,
// over `n_patients` random patients of `cohort` and every t.
CheckResult causality_check(const model::SurvivalModel& model, const Cohort& cohort,
                            std::size_t n_patients, std::uint64_t seed);

// Library survival math against direct loops on random curves.
CheckResult survival_math_check(std::size_t n_curves, std::uint64_t seed);

}  // namespace dynst::pipeline
