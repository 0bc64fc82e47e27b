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

#include "dynst/causal/estimators.hpp"

#include <algorithm>

#include "dynst/error.hpp"
#include "dynst/survival/survival_math.hpp"

namespace dynst::causal {
namespace {

void check_tau(int tau, std::size_t t_max) {
  if (tau < 1 || static_cast<std::size_t>(tau) > t_max)
    throw DomainError("tau must lie in 1..t_max, got " + std::to_string(tau));
}

void check_sizes(std::size_t expected, std::size_t got, const char* what) {
  if (expected != got)
    throw ShapeError(std::string(what) + ": expected " + std::to_string(expected) +
                     " values, got " + std::to_string(got));
}

double clipped(double p, double clip) { return std::clamp(p, clip, 1.0 - clip); }

}  // namespace

std::vector<double> CounterfactualCurves::rmst(int arm, int tau) const {
  const auto& preds = arm == 1 ? treated : control;
  check_tau(tau, preds.t_max);
  std::vector<double> out(preds.n);
  for (std::size_t i = 0; i < preds.n; ++i) out[i] = survival::restricted_mean(preds.row(i), tau);
  return out;
}

CounterfactualCurves FittedOutcomeModel::counterfactual_curves(const Cohort& cohort) const {
  return {model::predict_survival(model_, cohort, 1), model::predict_survival(model_, cohort, 0)};
}

double restricted_outcome(const PatientRecord& patient, int tau) {
  if (tau < 1) throw DomainError("tau must be positive");
  return std::min(patient.observed_time - patient.event, tau);
}

std::vector<double> restricted_outcomes(const Cohort& cohort, int tau) {
  check_tau(tau, cohort.t_max);
  std::vector<double> out;
  out.reserve(cohort.size());
  for (const auto& rec : cohort.patients) out.push_back(restricted_outcome(rec, tau));
  return out;
}

std::vector<double> imputed_restricted_outcomes(const Cohort& cohort,
                                                const CounterfactualCurves& curves, int tau) {
  check_tau(tau, cohort.t_max);
  check_sizes(cohort.size(), curves.treated.n, "imputed_restricted_outcomes");
  std::vector<double> out;
  out.reserve(cohort.size());
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    const auto& rec = cohort.patients[i];
    double y = restricted_outcome(rec, tau);
    if (rec.event == 0 && rec.observed_time < tau) {
      const auto s = (rec.treatment == 1 ? curves.treated : curves.control).row(i);
      const double at_censor = s[static_cast<std::size_t>(rec.observed_time) - 1];
      if (at_censor > 0.0) {
        for (int t = rec.observed_time + 1; t <= tau; ++t)
          y += s[static_cast<std::size_t>(t) - 1] / at_censor;
      }
    }
    out.push_back(y);
  }
  return out;
}

double unadjusted_difference(const Cohort& cohort, std::span<const double> outcomes) {
  check_sizes(cohort.size(), outcomes.size(), "unadjusted_difference");
  double sum1 = 0.0, sum0 = 0.0, n1 = 0.0, n0 = 0.0;
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    if (cohort.patients[i].treatment == 1) {
      sum1 += outcomes[i];
      n1 += 1.0;
    } else {
      sum0 += outcomes[i];
      n0 += 1.0;
    }
  }
  if (n1 == 0.0 || n0 == 0.0)
    throw ContractError("unadjusted_difference: both treatment arms must be non-empty");
  return sum1 / n1 - sum0 / n0;
}

double unadjusted_difference(const Cohort& cohort, int tau) {
  return unadjusted_difference(cohort, restricted_outcomes(cohort, tau));
}

WeightSums ipw_weight_sums(const Cohort& cohort, std::span<const double> propensities,
                           double clip) {
  check_sizes(cohort.size(), propensities.size(), "ipw_weight_sums");
  WeightSums sums;
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    const double p = clipped(propensities[i], clip);
    if (cohort.patients[i].treatment == 1)
      sums.treated += 1.0 / p;
    else
      sums.control += 1.0 / (1.0 - p);
  }
  return sums;
}

double ipw_estimate(const Cohort& cohort, std::span<const double> propensities,
                    std::span<const double> outcomes, double clip) {
  check_sizes(cohort.size(), propensities.size(), "ipw_estimate");
  check_sizes(cohort.size(), outcomes.size(), "ipw_estimate");
  if (cohort.size() == 0) throw ContractError("ipw_estimate on an empty cohort");
  double total = 0.0;
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    const double p = clipped(propensities[i], clip);
    const int a = cohort.patients[i].treatment;
    total += a * outcomes[i] / p - (1 - a) * outcomes[i] / (1.0 - p);
  }
  return total / static_cast<double>(cohort.size());
}

double ipw_estimate(const Cohort& cohort, std::span<const double> propensities, int tau,
                    double clip) {
  return ipw_estimate(cohort, propensities, restricted_outcomes(cohort, tau), clip);
}

double or_estimate(const CounterfactualCurves& curves, int tau) {
  if (curves.treated.n == 0) throw ContractError("or_estimate on an empty cohort");
  check_sizes(curves.treated.n, curves.control.n, "or_estimate");
  const auto m1 = curves.rmst(1, tau);
  const auto m0 = curves.rmst(0, tau);
  double total = 0.0;
  for (std::size_t i = 0; i < m1.size(); ++i) total += m1[i] - m0[i];
  return total / static_cast<double>(m1.size());
}

double or_estimate(const OutcomeModel& model, const Cohort& cohort, int tau) {
  return or_estimate(model.counterfactual_curves(cohort), tau);
}

double aipw_estimate(const Cohort& cohort, std::span<const double> propensities,
                     const CounterfactualCurves& curves, std::span<const double> outcomes,
                     int tau, double clip) {
  check_sizes(cohort.size(), propensities.size(), "aipw_estimate");
  check_sizes(cohort.size(), outcomes.size(), "aipw_estimate");
  check_sizes(cohort.size(), curves.treated.n, "aipw_estimate");
  check_sizes(cohort.size(), curves.control.n, "aipw_estimate");
  if (cohort.size() == 0) throw ContractError("aipw_estimate on an empty cohort");
  const auto m1 = curves.rmst(1, tau);
  const auto m0 = curves.rmst(0, tau);
  double total = 0.0;
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    const double p = clipped(propensities[i], clip);
    const int a = cohort.patients[i].treatment;
    const double y = outcomes[i];
    total += m1[i] - m0[i] + a * (y - m1[i]) / p - (1 - a) * (y - m0[i]) / (1.0 - p);
  }
  return total / static_cast<double>(cohort.size());
}

double aipw_estimate(const Cohort& cohort, std::span<const double> propensities,
                     const CounterfactualCurves& curves, int tau, double clip) {
  return aipw_estimate(cohort, propensities, curves, restricted_outcomes(cohort, tau), tau,
                       clip);
}

std::optional<double> AteEstimate::bias() const {
  if (!true_ate) return std::nullopt;
  return estimate - *true_ate;
}

void to_json(nlohmann::json& j, const AteEstimate& e) {
  j = nlohmann::json{{"method", e.method}, {"tau", e.tau}, {"estimate", e.estimate}};
  if (e.true_ate) {
    j["true_ate"] = *e.true_ate;
    j["bias"] = *e.bias();
  }
}

}  // namespace dynst::causal
