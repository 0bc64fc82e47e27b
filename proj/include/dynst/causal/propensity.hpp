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

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "dynst/data/cohort.hpp"

namespace dynst::causal {

// L2-penalized logistic regression with an unpenalized intercept, fit by
// Newton's method with backtracking. Minimizes
//   -loglik(w) + (penalty / 2) * ||w[1:]||^2.
struct LogisticFit {
  Eigen::VectorXd coef;  // intercept first
  bool converged = false;
  int iterations = 0;
};

// `x` excludes the intercept column.
LogisticFit fit_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double penalty,
                         int max_iter = 100, double tol = 1e-10);

struct PropensityOptions {
  // Indices into PatientRecord::z used as regressors.
  std::vector<std::size_t> features{kHypertension, kCoronaryAtherosclerosis,
                                    kAtrialFibrillation};
  std::vector<double> penalties{1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0, 1e3, 1e4};
  std::size_t folds = 5;
  double clip = 0.01;
  std::uint64_t seed = 0;
  // An unpenalized fit that fails to converge or has a coefficient beyond
  // this magnitude signals separation.
  double separation_bound = 25.0;

  void validate() const;
};

class PropensityModel {
 public:
  PropensityModel(std::vector<std::size_t> features, Eigen::VectorXd coef, double penalty,
                  double clip, bool separation);

  // P(A = 1 | z) clipped to [clip, 1 - clip].
  double predict(const PatientRecord& patient) const;
  std::vector<double> predict(const Cohort& cohort) const;

  const Eigen::VectorXd& coefficients() const { return coef_; }
  double penalty() const { return penalty_; }
  // True when the data were (quasi-)separable and the strongest penalty was
  // used instead of the cross-validated one.
  bool separation_detected() const { return separation_; }

 private:
  std::vector<std::size_t> features_;
  Eigen::VectorXd coef_;
  double penalty_;
  double clip_;
  bool separation_;
};

// Selects the penalty by k-fold cross-validated log-loss, then refits on the
// whole cohort. Throws ContractError if either arm is empty.
PropensityModel fit_propensity(const Cohort& cohort, const PropensityOptions& options = {});

}  // namespace dynst::causal
