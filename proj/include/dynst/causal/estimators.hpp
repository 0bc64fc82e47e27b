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

// Average treatment effect on the restricted mean survival time,
// psi(tau) = E[ sum_{t<=tau} S(t | A=1) - S(t | A=0) ].

#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "dynst/causal/outcome_model.hpp"
#include "dynst/data/cohort.hpp"

namespace dynst::causal {

// Number of steps survived up to tau: min(O - delta, tau). Its expectation
// given (X, A) is sum_{t<=tau} S(t) when censoring happens at or after tau.
double restricted_outcome(const PatientRecord& patient, int tau);
std::vector<double> restricted_outcomes(const Cohort& cohort, int tau);

// Replaces the outcome of patients censored before tau by its conditional
// expectation under the given curves (evaluated at the observed treatment).
std::vector<double> imputed_restricted_outcomes(const Cohort& cohort,
                                                const CounterfactualCurves& curves, int tau);

// Difference of arm means. Throws ContractError if an arm is empty.
double unadjusted_difference(const Cohort& cohort, int tau);
double unadjusted_difference(const Cohort& cohort, std::span<const double> outcomes);

// Sum of inverse-propensity weights in the treated and control arms.
struct WeightSums {
  double treated = 0.0;
  double control = 0.0;
};
WeightSums ipw_weight_sums(const Cohort& cohort, std::span<const double> propensities,
                           double clip = 0.01);

double ipw_estimate(const Cohort& cohort, std::span<const double> propensities, int tau,
                    double clip = 0.01);
double ipw_estimate(const Cohort& cohort, std::span<const double> propensities,
                    std::span<const double> outcomes, double clip = 0.01);

// Outcome regression (g-computation).
double or_estimate(const CounterfactualCurves& curves, int tau);
double or_estimate(const OutcomeModel& model, const Cohort& cohort, int tau);

// Doubly robust combination of outcome regression and inverse weighting.
double aipw_estimate(const Cohort& cohort, std::span<const double> propensities,
                     const CounterfactualCurves& curves, int tau, double clip = 0.01);
double aipw_estimate(const Cohort& cohort, std::span<const double> propensities,
                     const CounterfactualCurves& curves, std::span<const double> outcomes,
                     int tau, double clip = 0.01);

struct AteEstimate {
  std::string method;
  int tau = 0;
  double estimate = 0.0;
  std::optional<double> true_ate;

  std::optional<double> bias() const;
};

void to_json(nlohmann::json& j, const AteEstimate& e);

}  // namespace dynst::causal
