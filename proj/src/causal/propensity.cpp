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

#include "dynst/causal/propensity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "dynst/error.hpp"

namespace dynst::causal {
namespace {

Eigen::VectorXd probabilities(const Eigen::MatrixXd& design, const Eigen::VectorXd& coef) {
  const Eigen::VectorXd eta = design * coef;
  return eta.unaryExpr([](double e) {
    return e >= 0 ? 1.0 / (1.0 + std::exp(-e)) : std::exp(e) / (1.0 + std::exp(e));
  });
}

double objective(const Eigen::MatrixXd& design, const Eigen::VectorXd& y,
                 const Eigen::VectorXd& coef, double penalty) {
  const Eigen::VectorXd eta = design * coef;
  double value = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    // log(1 + exp(eta)) - y * eta, computed stably.
    const double e = eta(i);
    value += (e > 0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e))) - y(i) * e;
  }
  return value + 0.5 * penalty * coef.tail(coef.size() - 1).squaredNorm();
}

Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd design(x.rows(), x.cols() + 1);
  design.col(0).setOnes();
  design.rightCols(x.cols()) = x;
  return design;
}

double log_loss(const Eigen::VectorXd& p, const Eigen::VectorXd& y) {
  constexpr double kFloor = 1e-15;
  double total = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double pi = std::clamp(p(i), kFloor, 1.0 - kFloor);
    total -= y(i) * std::log(pi) + (1.0 - y(i)) * std::log(1.0 - pi);
  }
  return total / static_cast<double>(p.size());
}

bool separated(const LogisticFit& fit, double bound) {
  return !fit.converged || fit.coef.cwiseAbs().maxCoeff() > bound;
}

}  // namespace

LogisticFit fit_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double penalty,
                         int max_iter, double tol) {
  if (x.rows() != y.size() || x.rows() == 0) throw ShapeError("fit_logistic: bad shapes");
  if (!(penalty >= 0.0)) throw ConfigError("fit_logistic: penalty must be non-negative");
  const Eigen::MatrixXd design = with_intercept(x);
  const Eigen::Index k = design.cols();
  Eigen::VectorXd ridge = Eigen::VectorXd::Constant(k, penalty);
  ridge(0) = 0.0;

  LogisticFit fit;
  fit.coef = Eigen::VectorXd::Zero(k);
  double current = objective(design, y, fit.coef, penalty);
  for (int it = 0; it < max_iter; ++it) {
    fit.iterations = it + 1;
    const Eigen::VectorXd p = probabilities(design, fit.coef);
    const Eigen::VectorXd grad = design.transpose() * (p - y) + ridge.cwiseProduct(fit.coef);
    const Eigen::VectorXd w = p.cwiseProduct(Eigen::VectorXd::Ones(p.size()) - p);
    Eigen::MatrixXd hess = design.transpose() * w.asDiagonal() * design;
    hess.diagonal() += ridge + Eigen::VectorXd::Constant(k, 1e-12);
    const Eigen::VectorXd step = hess.ldlt().solve(grad);

    double t = 1.0;
    Eigen::VectorXd next = fit.coef - step;
    double next_value = objective(design, y, next, penalty);
    while (next_value > current && t > 1e-10) {
      t *= 0.5;
      next = fit.coef - t * step;
      next_value = objective(design, y, next, penalty);
    }
    const double decrease = current - next_value;
    fit.coef = next;
    current = next_value;
    if (grad.lpNorm<Eigen::Infinity>() <= tol * static_cast<double>(x.rows()) ||
        std::abs(decrease) <= tol * (1.0 + std::abs(current))) {
      fit.converged = true;
      break;
    }
  }
  return fit;
}

void PropensityOptions::validate() const {
  if (features.empty()) throw ConfigError("propensity model needs at least one feature");
  if (penalties.empty()) throw ConfigError("propensity penalty grid is empty");
  for (double l : penalties)
    if (!(l >= 0.0)) throw ConfigError("propensity penalties must be non-negative");
  if (folds < 2) throw ConfigError("cross-validation needs at least 2 folds");
  if (!(clip >= 0.0 && clip < 0.5)) throw ConfigError("propensity clip must lie in [0, 0.5)");
}

PropensityModel::PropensityModel(std::vector<std::size_t> features, Eigen::VectorXd coef,
                                 double penalty, double clip, bool separation)
    : features_(std::move(features)),
      coef_(std::move(coef)),
      penalty_(penalty),
      clip_(clip),
      separation_(separation) {
  if (static_cast<std::size_t>(coef_.size()) != features_.size() + 1)
    throw ShapeError("propensity coefficients do not match the feature list");
}

double PropensityModel::predict(const PatientRecord& patient) const {
  double eta = coef_(0);
  for (std::size_t j = 0; j < features_.size(); ++j) {
    if (features_[j] >= patient.z.size()) throw ShapeError("propensity feature out of range");
    eta += coef_(static_cast<Eigen::Index>(j) + 1) * patient.z[features_[j]];
  }
  const double p = 1.0 / (1.0 + std::exp(-eta));
  return std::clamp(p, clip_, 1.0 - clip_);
}

std::vector<double> PropensityModel::predict(const Cohort& cohort) const {
  std::vector<double> out;
  out.reserve(cohort.size());
  for (const auto& rec : cohort.patients) out.push_back(predict(rec));
  return out;
}

PropensityModel fit_propensity(const Cohort& cohort, const PropensityOptions& options) {
  options.validate();
  const auto n = static_cast<Eigen::Index>(cohort.size());
  Eigen::MatrixXd x(n, static_cast<Eigen::Index>(options.features.size()));
  Eigen::VectorXd y(n);
  double treated = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& rec = cohort.patients[static_cast<std::size_t>(i)];
    for (std::size_t j = 0; j < options.features.size(); ++j) {
      if (options.features[j] >= rec.z.size()) throw ShapeError("propensity feature out of range");
      x(i, static_cast<Eigen::Index>(j)) = rec.z[options.features[j]];
    }
    y(i) = rec.treatment;
    treated += rec.treatment;
  }
  if (treated == 0.0 || treated == static_cast<double>(n))
    throw ContractError("fit_propensity: both treatment arms must be non-empty");

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::mt19937_64 rng(options.seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto folds = static_cast<Eigen::Index>(std::min<std::size_t>(options.folds, cohort.size()));

  double best_score = std::numeric_limits<double>::infinity();
  double best_penalty = options.penalties.front();
  for (double penalty : options.penalties) {
    double score = 0.0;
    for (Eigen::Index f = 0; f < folds; ++f) {
      std::vector<Eigen::Index> train, test;
      for (Eigen::Index k = 0; k < n; ++k)
        (k % folds == f ? test : train).push_back(order[static_cast<std::size_t>(k)]);
      const LogisticFit fit = fit_logistic(x(train, Eigen::all), y(train), penalty);
      const Eigen::VectorXd p = probabilities(with_intercept(x(test, Eigen::all)), fit.coef);
      score += log_loss(p, y(test)) * static_cast<double>(test.size());
    }
    if (score < best_score) {
      best_score = score;
      best_penalty = penalty;
    }
  }

  // Separation is a property of the data: the unpenalized maximum likelihood
  // estimate runs off to infinity.
  const bool separation = separated(fit_logistic(x, y, 0.0), options.separation_bound);
  if (separation)
    best_penalty = *std::max_element(options.penalties.begin(), options.penalties.end());
  const LogisticFit fit = fit_logistic(x, y, best_penalty);
  return PropensityModel(options.features, fit.coef, best_penalty, options.clip, separation);
}

}  // namespace dynst::causal
