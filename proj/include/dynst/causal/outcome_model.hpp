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

#include <vector>

#include "dynst/data/cohort.hpp"
#include "dynst/model/survival_model.hpp"

namespace dynst::causal {

// Survival curves for every patient with treatment forced to 1 and to 0.
struct CounterfactualCurves {
  model::SurvivalPredictions treated;
  model::SurvivalPredictions control;

  // Per-patient sum_{t<=tau} S(t | A = arm).
  std::vector<double> rmst(int arm, int tau) const;
};

// Anything that can predict counterfactual survival curves for a cohort.
class OutcomeModel {
 public:
  virtual ~OutcomeModel() = default;
  virtual CounterfactualCurves counterfactual_curves(const Cohort& cohort) const = 0;
};

// Wraps a fitted hazard model; treatment enters as the last static feature.
class FittedOutcomeModel final : public OutcomeModel {
 public:
  explicit FittedOutcomeModel(const model::SurvivalModel& model) : model_(model) {}
  CounterfactualCurves counterfactual_curves(const Cohort& cohort) const override;

 private:
  const model::SurvivalModel& model_;
};

}  // namespace dynst::causal
