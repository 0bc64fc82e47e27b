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

// Discrete-time survival quantities. Time steps are hours indexed t = 1..t_max;
// element k of every curve holds the value at t = k + 1.

#pragma once

#include <span>
#include <vector>

namespace dynst::survival {

// Per-step event probabilities h(t) = P(T = t | T >= t), each in [0,1].
class HazardCurve {
 public:
  explicit HazardCurve(std::vector<double> h);
  std::span<const double> values() const { return h_; }
  std::size_t horizon() const { return h_.size(); }

 private:
  std::vector<double> h_;
};

// S(t) = P(T > t): values in [0,1], non-increasing in t.
class SurvivalCurve {
 public:
  explicit SurvivalCurve(std::vector<double> s);
  std::span<const double> values() const { return s_; }
  std::size_t horizon() const { return s_.size(); }
  double at(int t) const;

 private:
  std::vector<double> s_;
};

// S(t) = prod_{u <= t} (1 - h(u)).
SurvivalCurve survival_from_hazard(const HazardCurve& h);

// Sum of S(t) over t = 1..t_max.
double expected_survival_time(std::span<const double> s);
double expected_survival_time(const SurvivalCurve& s);

// Sum of S(t) over t = 1..tau for a single curve.
double restricted_mean(std::span<const double> s, int tau);

// Cohort mean of restricted_mean. Throws DomainError unless 1 <= tau <= t_max
// for every curve.
double rmst(std::span<const SurvivalCurve> curves, int tau);

// Censoring-aware absolute error of one prediction:
//   |O - T_hat| if the event was observed, max(0, O - T_hat) otherwise.
double censored_abs_error(double predicted, double observed, int event);

// Mean of censored_abs_error over a cohort.
double censored_mae(std::span<const double> predicted,
                    std::span<const double> observed,
                    std::span<const int> event);

}  // namespace dynst::survival
