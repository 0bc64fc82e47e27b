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

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "doctest.h"
#include "dynst/causal/estimators.hpp"
#include "dynst/causal/propensity.hpp"
#include "dynst/error.hpp"
#include "dynst/model/linear_baseline.hpp"
#include "dynst/sim/simulator.hpp"
#include "support.hpp"

using namespace dynst;
using namespace dynst::causal;

namespace {

sim::SimConfig sim_config(std::size_t n, std::uint64_t seed) {
  sim::SimConfig c;
  c.n_patients = n;
  c.t_max = 32;
  c.seed = seed;
  return c;
}

// Reference doubly robust estimate written out term by term.
double reference_aipw(const Cohort& c, const std::vector<double>& pi,
                      const std::vector<double>& m1, const std::vector<double>& m0, int tau) {
  double total = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    const auto& p = c.patients[i];
    const double y = std::min(p.observed_time - p.event, tau);
    const double w = std::clamp(pi[i], 0.01, 0.99);
    total += m1[i] - m0[i];
    total += p.treatment ? (y - m1[i]) / w : -(y - m0[i]) / (1 - w);
  }
  return total / static_cast<double>(c.size());
}

CounterfactualCurves flat_curves(std::size_t n, std::size_t t_max, double s1, double s0) {
  CounterfactualCurves c;
  c.treated = {n, t_max, std::vector<double>(n * t_max, s1)};
  c.control = {n, t_max, std::vector<double>(n * t_max, s0)};
  return c;
}

Cohort two_arm_cohort() {
  Cohort c;
  c.t_max = 10;
  c.q = 0;
  const int a[] = {1, 1, 0, 0, 0};
  const int o[] = {4, 10, 2, 7, 10};
  const int d[] = {1, 0, 1, 1, 0};
  for (int i = 0; i < 5; ++i) {
    PatientRecord p;
    p.id = i;
    p.z = {0, 0, 0, 0, 0};
    p.treatment = a[i];
    p.observed_time = o[i];
    p.event = d[i];
    c.patients.push_back(p);
  }
  return c;
}

}  // namespace

TEST_SUITE("causal") {

TEST_CASE("restricted outcome counts survived steps") {
  PatientRecord p;
  p.observed_time = 5;
  p.event = 1;
  CHECK(restricted_outcome(p, 8) == 4.0);
  CHECK(restricted_outcome(p, 3) == 3.0);
  p.event = 0;
  CHECK(restricted_outcome(p, 8) == 5.0);
}

TEST_CASE("unadjusted difference of arm means") {
  const Cohort c = two_arm_cohort();
  // Outcomes at tau = 8: treated {3, 8}, control {1, 6, 8}.
  CHECK(unadjusted_difference(c, 8) == doctest::Approx(5.5 - 5.0).epsilon(1e-15));
}

TEST_CASE("an empty arm is a contract error") {
  Cohort c = two_arm_cohort();
  for (auto& p : c.patients) p.treatment = 1;
  CHECK_THROWS_AS((void)unadjusted_difference(c, 8), ContractError);
  const std::vector<std::size_t> feat{0};
  CHECK_THROWS_AS((void)fit_propensity(c, {.features = feat}), ContractError);
}

TEST_CASE("tau outside the horizon is a domain error") {
  const Cohort c = two_arm_cohort();
  CHECK_THROWS_AS((void)unadjusted_difference(c, 11), DomainError);
  CHECK_THROWS_AS((void)or_estimate(flat_curves(5, 10, 1, 1), 0), DomainError);
}

TEST_CASE("inverse weighting with the treated fraction equals the arm difference") {
  const Cohort c = testing::random_cohort(300, 20, 1, 3);
  double n1 = 0;
  for (const auto& p : c.patients) n1 += p.treatment;
  const std::vector<double> pi(c.size(), n1 / static_cast<double>(c.size()));
  for (int tau : {5, 12, 20}) {
    CHECK(ipw_estimate(c, pi, tau) ==
          doctest::Approx(unadjusted_difference(c, tau)).epsilon(1e-12));
  }
}

TEST_CASE("inverse weighting with one half is twice the weighted arm sums") {
  const Cohort c = two_arm_cohort();
  const std::vector<double> pi(5, 0.5);
  // (2 * (3 + 8) - 2 * (1 + 6 + 8)) / 5
  CHECK(ipw_estimate(c, pi, 8) == doctest::Approx((22.0 - 30.0) / 5.0).epsilon(1e-15));
  const auto w = ipw_weight_sums(c, pi);
  CHECK(w.treated == 4.0);
  CHECK(w.control == 6.0);
}

TEST_CASE("propensities are clipped") {
  const Cohort c = two_arm_cohort();
  const std::vector<double> pi{1.0, 0.999, 0.0, 0.5, 0.5};
  const auto w = ipw_weight_sums(c, pi, 0.01);
  CHECK(w.treated == doctest::Approx(2.0 / 0.99).epsilon(1e-14));
  CHECK(w.control == doctest::Approx(1.0 / 0.99 + 4.0).epsilon(1e-14));
}

TEST_CASE("true propensity weights sum to about n in each arm") {
  const auto d = sim::generate_dataset(sim_config(20000, 4));
  const auto pi = sim::true_propensities(d.oracle);
  const auto w = ipw_weight_sums(d.cohort, pi);
  const double n = static_cast<double>(d.cohort.size());
  // Var(A / pi) = (1 - pi) / pi is at most 4 with pi in {0.2, 0.8}.
  const double sd = std::sqrt(4.0 * n);
  CHECK(std::abs(w.treated - n) < 3.2905 * sd);
  CHECK(std::abs(w.control - n) < 3.2905 * sd);
}

TEST_CASE("outcome regression ignoring treatment gives exactly zero") {
  const Cohort c = testing::random_cohort(40, 12, 2, 5);
  model::LinearBaseline m(c.static_width(), 12);
  std::mt19937_64 rng(6);
  for (double& v : m.weights().mutable_data()) v = std::normal_distribution<double>()(rng);
  m.weights().mutable_data()[c.static_width() - 1] = 0.0;
  for (int tau : {1, 6, 12}) CHECK(or_estimate(FittedOutcomeModel(m), c, tau) == 0.0);
}

TEST_CASE("outcome regression with flat curves") {
  CHECK(or_estimate(flat_curves(3, 10, 0.9, 0.5), 4) == doctest::Approx(1.6).epsilon(1e-14));
}

TEST_CASE("oracle outcome regression recovers the true effect") {
  const auto cfg = sim_config(500, 7);
  const auto d = sim::generate_dataset(cfg);
  const sim::OracleOutcomeModel oracle(cfg, d.coefficients);
  for (int tau : {8, 12, 16}) {
    CHECK(std::abs(or_estimate(oracle, d.cohort, tau) - sim::true_ate(d.oracle, tau)) < 1e-6);
  }
}

TEST_CASE("doubly robust estimate matches the written-out formula") {
  const auto cfg = sim_config(400, 8);
  const auto d = sim::generate_dataset(cfg);
  const auto curves = sim::OracleOutcomeModel(cfg, d.coefficients).counterfactual_curves(d.cohort);
  std::mt19937_64 rng(9);
  std::vector<double> pi(d.cohort.size());
  for (double& p : pi) p = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  for (int tau : {8, 16}) {
    const double ref = reference_aipw(d.cohort, pi, curves.rmst(1, tau), curves.rmst(0, tau), tau);
    CHECK(aipw_estimate(d.cohort, pi, curves, tau) == doctest::Approx(ref).epsilon(1e-12));
  }
}

TEST_CASE("doubly robust estimate with exact outcome fits reduces to regression") {
  // Curves that reproduce every observed outcome make the correction vanish.
  const Cohort c = two_arm_cohort();
  CounterfactualCurves curves = flat_curves(5, 10, 0.0, 0.0);
  const int tau = 8;
  for (std::size_t i = 0; i < 5; ++i) {
    const int y = std::min(c.patients[i].observed_time - c.patients[i].event, tau);
    auto& dst = c.patients[i].treatment ? curves.treated.values : curves.control.values;
    for (int t = 0; t < y; ++t) dst[i * 10 + t] = 1.0;
  }
  const std::vector<double> pi{0.3, 0.6, 0.2, 0.7, 0.4};
  CHECK(aipw_estimate(c, pi, curves, tau) ==
        doctest::Approx(or_estimate(curves, tau)).epsilon(1e-14));
}

TEST_CASE("estimators do not depend on patient order") {
  const auto cfg = sim_config(300, 10);
  const auto d = sim::generate_dataset(cfg);
  const auto pi = sim::true_propensities(d.oracle);
  const sim::OracleOutcomeModel oracle(cfg, d.coefficients);
  std::vector<std::size_t> perm(d.cohort.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(11));
  const Cohort shuffled = subset(d.cohort, perm);
  std::vector<double> pi_s;
  for (std::size_t i : perm) pi_s.push_back(pi[i]);
  const auto curves = oracle.counterfactual_curves(d.cohort);
  const auto curves_s = oracle.counterfactual_curves(shuffled);
  const int tau = 12;
  CHECK(unadjusted_difference(shuffled, tau) ==
        doctest::Approx(unadjusted_difference(d.cohort, tau)).epsilon(1e-12));
  CHECK(ipw_estimate(shuffled, pi_s, tau) ==
        doctest::Approx(ipw_estimate(d.cohort, pi, tau)).epsilon(1e-12));
  CHECK(or_estimate(curves_s, tau) == doctest::Approx(or_estimate(curves, tau)).epsilon(1e-12));
  CHECK(aipw_estimate(shuffled, pi_s, curves_s, tau) ==
        doctest::Approx(aipw_estimate(d.cohort, pi, curves, tau)).epsilon(1e-12));
}

TEST_CASE("no effect and randomized treatment give a near-zero arm difference") {
  auto cfg = sim_config(20000, 12);
  cfg.theta = 0.0;
  cfg.propensity_high = 0.5;
  cfg.propensity_low = 0.5;
  const auto d = sim::generate_dataset(cfg);
  const int tau = 12;
  const auto y = restricted_outcomes(d.cohort, tau);
  double s[2] = {0, 0}, s2[2] = {0, 0}, n[2] = {0, 0};
  for (std::size_t i = 0; i < y.size(); ++i) {
    const int a = d.cohort.patients[i].treatment;
    s[a] += y[i];
    s2[a] += y[i] * y[i];
    n[a] += 1;
  }
  double se2 = 0.0;
  for (int a : {0, 1}) se2 += (s2[a] / n[a] - (s[a] / n[a]) * (s[a] / n[a])) / n[a];
  CHECK(std::abs(unadjusted_difference(d.cohort, tau)) < 3.2905 * std::sqrt(se2));
}

TEST_CASE("imputation only touches patients censored before tau") {
  Cohort c = two_arm_cohort();
  c.patients[2].event = 0;  // censored at 2
  const auto curves = flat_curves(5, 10, 0.5, 0.5);
  const auto plain = restricted_outcomes(c, 8);
  const auto imputed = imputed_restricted_outcomes(c, curves, 8);
  for (std::size_t i = 0; i < 5; ++i) {
    if (i == 2) {
      CHECK(imputed[i] == doctest::Approx(2.0 + 6.0).epsilon(1e-14));
    } else {
      CHECK(imputed[i] == plain[i]);
    }
  }
}

TEST_CASE("report carries bias only with a known truth") {
  AteEstimate e{"ipw", 12, 0.7, std::nullopt};
  CHECK_FALSE(e.bias().has_value());
  CHECK_FALSE(nlohmann::json(e).contains("bias"));
  e.true_ate = 0.5;
  CHECK(*e.bias() == doctest::Approx(0.2).epsilon(1e-14));
  const nlohmann::json j = e;
  CHECK(j.at("method") == "ipw");
  CHECK(j.at("tau") == 12);
  CHECK(j.at("bias").get<double>() == doctest::Approx(0.2).epsilon(1e-14));
}

TEST_CASE("logistic fit satisfies the penalized score equations") {
  std::mt19937_64 rng(13);
  const int n = 500, k = 3;
  Eigen::MatrixXd x(n, k);
  Eigen::VectorXd y(n);
  std::normal_distribution<double> g;
  for (int i = 0; i < n; ++i) {
    double eta = -0.3;
    for (int j = 0; j < k; ++j) {
      x(i, j) = g(rng);
      eta += (j + 1) * 0.5 * x(i, j);
    }
    y(i) = std::bernoulli_distribution(1.0 / (1.0 + std::exp(-eta)))(rng) ? 1.0 : 0.0;
  }
  for (double lambda : {0.0, 3.0}) {
    const auto fit = fit_logistic(x, y, lambda);
    CHECK(fit.converged);
    Eigen::VectorXd score = Eigen::VectorXd::Zero(k + 1);
    for (int i = 0; i < n; ++i) {
      double eta = fit.coef(0);
      for (int j = 0; j < k; ++j) eta += fit.coef(j + 1) * x(i, j);
      const double r = y(i) - 1.0 / (1.0 + std::exp(-eta));
      score(0) += r;
      for (int j = 0; j < k; ++j) score(j + 1) += r * x(i, j);
    }
    for (int j = 0; j < k; ++j) score(j + 1) -= lambda * fit.coef(j + 1);
    CHECK(score.cwiseAbs().maxCoeff() < 1e-7);
  }
}

TEST_CASE("a constant feature yields the treated fraction") {
  Cohort c = testing::random_cohort(400, 4, 1, 14);
  double n1 = 0;
  for (auto& p : c.patients) {
    p.z[0] = 1.0;
    n1 += p.treatment;
  }
  const std::vector<std::size_t> feat{0};
  const auto model = fit_propensity(c, {.features = feat});
  for (double s : model.predict(c)) CHECK(s == doctest::Approx(n1 / 400.0).epsilon(1e-6));
}

TEST_CASE("propensity on the severity flag recovers the two levels") {
  const auto d = sim::generate_dataset(sim_config(10000, 15));
  const std::vector<std::size_t> feat{kSeverelyIll};
  const auto model = fit_propensity(d.cohort, {.features = feat, .seed = 3});
  const auto scores = model.predict(d.cohort);
  const auto truth = sim::true_propensities(d.oracle);
  double mae = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    mae += std::abs(scores[i] - truth[i]);
    CHECK(std::abs(scores[i] - truth[i]) < 0.05);
  }
  CHECK(mae / static_cast<double>(scores.size()) < 0.05);
  for (double s : scores) {
    CHECK(s > 0.0);
    CHECK(s < 1.0);
  }
}

TEST_CASE("default diagnosis features give scores inside the clip range") {
  const auto d = sim::generate_dataset(sim_config(3000, 16));
  const auto model = fit_propensity(d.cohort);
  CHECK_FALSE(model.separation_detected());
  CHECK(model.coefficients().size() == 4);
  for (double s : model.predict(d.cohort)) {
    CHECK(s >= 0.01);
    CHECK(s <= 0.99);
  }
}

TEST_CASE("perfect separation falls back to the strongest penalty") {
  Cohort c = testing::random_cohort(200, 4, 1, 17);
  for (auto& p : c.patients) p.z[1] = p.treatment;
  const std::vector<std::size_t> feat{1};
  PropensityOptions opt{.features = feat};
  const auto model = fit_propensity(c, opt);
  CHECK(model.separation_detected());
  CHECK(model.penalty() == opt.penalties.back());
}

TEST_CASE("propensity fitting is deterministic") {
  const auto d = sim::generate_dataset(sim_config(1000, 18));
  const auto a = fit_propensity(d.cohort, {.seed = 5});
  const auto b = fit_propensity(d.cohort, {.seed = 5});
  CHECK(a.predict(d.cohort) == b.predict(d.cohort));
  CHECK(a.penalty() == b.penalty());
}

}  // TEST_SUITE
