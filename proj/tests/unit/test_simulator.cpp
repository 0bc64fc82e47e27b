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

#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "dynst/error.hpp"
#include "dynst/sim/simulator.hpp"

using namespace dynst;
using namespace dynst::sim;

namespace {

SimConfig small_config(std::size_t n, std::uint64_t seed) {
  SimConfig c;
  c.n_patients = n;
  c.t_max = 32;
  c.oracle_taus = {8, 12, 16};
  c.seed = seed;
  return c;
}

// E[sigmoid(logit(s) + sigma * eps)] by the trapezoid rule on a wide grid.
double noisy_mean(double s, double sigma) {
  const double logit = std::log(s) - std::log1p(-s);
  const int n = 40000;
  const double lo = -12.0, hi = 12.0, dx = (hi - lo) / n;
  double acc = 0.0;
  for (int k = 0; k <= n; ++k) {
    const double e = lo + k * dx;
    const double w = (k == 0 || k == n) ? 0.5 : 1.0;
    acc += w * std::exp(-0.5 * e * e) / (1.0 + std::exp(-(logit + sigma * e)));
  }
  return acc * dx / std::sqrt(2.0 * std::acos(-1.0));
}

const std::array<double, 4> kZeroRisk{0, 0, 0, 0};
const std::array<double, 4> kCalmVitals{0.5, 0.5, 0.5, 0.5};

}  // namespace

TEST_SUITE("simulator") {

TEST_CASE("vital contribution examples") {
  SimConfig c;
  CHECK(vital_effect(0.7, c) == 0.0);
  CHECK(vital_effect(0.0, c) == 0.0);
  CHECK(vital_effect(-1.0, c) == 1.0);
  CHECK(vital_effect(-2.0, c) == 3.0);
  c.vital_floor_reading = true;
  CHECK(vital_effect(-1.0, c) == 3.0);
  CHECK(vital_effect(-2.0, c) == 4.0);
  CHECK(vital_effect(0.7, c) == 0.0);
}

TEST_CASE("hazard factor examples") {
  SimConfig c;
  SimCoefficients k;
  k.beta = {0.8, 0.9, 1.0, 1.1};
  k.gamma = {0.1, 0.2, 0.25, 0.3};
  CHECK(hazard(0, 0, kZeroRisk, 0, kCalmVitals, k, c) == doctest::Approx(0.001).epsilon(1e-15));
  CHECK(hazard(1, 0, kZeroRisk, 0, kCalmVitals, k, c) ==
        doctest::Approx(0.001 * std::exp(-0.25)).epsilon(1e-14));
  const double untreated = hazard(3, 0, kZeroRisk, 0, kCalmVitals, k, c);
  const double treated = hazard(3, 1, kZeroRisk, 0, kCalmVitals, k, c);
  CHECK(treated / untreated == doctest::Approx(0.6065).epsilon(1e-4));
  CHECK(treated / untreated == doctest::Approx(std::exp(-0.5)).epsilon(1e-14));
  const double ill = hazard(10, 0, kZeroRisk, 1, kCalmVitals, k, c);
  const double well = hazard(10, 0, kZeroRisk, 0, kCalmVitals, k, c);
  CHECK(ill / well == doctest::Approx(1.2190).epsilon(1e-4));
  CHECK(ill / well == doctest::Approx(std::pow(1.02, 10)).epsilon(1e-13));
  // Risk factors and vitals enter as exp(sum beta z) and exp(sum gamma g(v)).
  const std::array<double, 4> z{1, 0, 1, 0};
  const std::array<double, 4> v{-1.0, 0.3, -0.5, -2.5};
  const double expect = 0.001 * std::exp(-0.25 * 2) * std::exp(0.8 + 1.0) *
                        std::exp(0.1 * 1.0 + 0.25 * 0.25 + 0.3 * 3.0);
  CHECK(hazard(2, 0, z, 0, v, k, c) == doctest::Approx(expect).epsilon(1e-13));
}

TEST_CASE("severely ill hazard ratio grows by two percent per step") {
  SimConfig c;
  c.hazard_lower = 1e-300;
  SimCoefficients k = draw_coefficients(c);
  double prev = 0.0;
  for (int t = 1; t <= 128; ++t) {
    const double r = hazard(t, 0, kZeroRisk, 1, kCalmVitals, k, c) /
                     hazard(t, 0, kZeroRisk, 0, kCalmVitals, k, c);
    CHECK(r == doctest::Approx(std::exp(c.interaction_rate * t)).epsilon(1e-12));
    if (t > 1) CHECK(r / prev == doctest::Approx(1.02).epsilon(1e-12));
    prev = r;
  }
}

TEST_CASE("emitted hazards respect the bounds") {
  SimConfig c = small_config(200, 3);
  const auto data = generate_dataset(c);
  for (const auto& rec : data.cohort.patients) {
    for (int a : {0, 1}) {
      for (double h : hazard_path(rec, a, data.coefficients, c)) {
        CHECK(h >= c.hazard_lower);
        CHECK(h <= c.hazard_upper);
      }
    }
  }
  SimCoefficients big;
  big.beta = {5, 5, 5, 5};
  const std::array<double, 4> ones{1, 1, 1, 1};
  CHECK(hazard(1, 0, ones, 1, kCalmVitals, big, c) == c.hazard_upper);
  CHECK(hazard(120, 1, kZeroRisk, 0, kCalmVitals, SimCoefficients{}, c) == c.hazard_lower);
}

TEST_CASE("propensity levels") {
  SimConfig c;
  CHECK(propensity(1, c) == 0.8);
  CHECK(propensity(0, c) == 0.2);
  std::mt19937_64 rng(4);
  const int n = 20000;
  int hi = 0, lo = 0;
  for (int i = 0; i < n; ++i) {
    hi += assign_treatment(1, c, rng);
    lo += assign_treatment(0, c, rng);
  }
  const double sd = std::sqrt(n * 0.16);
  CHECK(std::abs(hi - 0.8 * n) < 3.2905 * sd);
  CHECK(std::abs(lo - 0.2 * n) < 3.2905 * sd);
}

TEST_CASE("zero prevalences make every patient low risk") {
  SimConfig c = small_config(300, 5);
  c.diagnosis_prevalence = {0.0, 0.0, 0.0};
  const auto data = generate_dataset(c);
  for (std::size_t i = 0; i < data.cohort.size(); ++i) {
    CHECK(data.cohort.patients[i].z[kSeverelyIll] == 0.0);
    CHECK(data.oracle[i].pi_true == 0.2);
  }
}

TEST_CASE("severely ill flag means two or more diagnoses") {
  for (const auto& cov : sample_covariates(small_config(2000, 6))) {
    const double count = cov.z[kHypertension] + cov.z[kCoronaryAtherosclerosis] +
                         cov.z[kAtrialFibrillation];
    CHECK(cov.z[kSeverelyIll] == (count >= 2 ? 1.0 : 0.0));
  }
}

TEST_CASE("vitals are standardized and diagnoses positively correlated") {
  SimConfig c = small_config(20000, 7);
  c.t_max = 4;
  c.oracle_taus = {4};
  const auto cov = sample_covariates(c);
  const double n = static_cast<double>(cov.size());
  // Marginal moments at one time step, each patient contributing one draw.
  for (std::size_t j = 0; j < kNumTemporalFeatures; ++j) {
    double s = 0, s2 = 0;
    for (const auto& x : cov) {
      const double v = x.v[2 * kNumTemporalFeatures + j];
      s += v;
      s2 += v * v;
    }
    const double mean = s / n, var = s2 / n - mean * mean;
    CHECK(std::abs(mean) < 3.0 / std::sqrt(n));
    CHECK(std::abs(var - 1.0) < 3.0 * std::sqrt(2.0 / n));
  }
  double p[3] = {0, 0, 0}, p01 = 0;
  for (const auto& x : cov) {
    for (int k = 0; k < 3; ++k) p[k] += x.z[kHypertension + k];
    p01 += x.z[kHypertension] * x.z[kCoronaryAtherosclerosis];
  }
  for (double& v : p) v /= n;
  p01 /= n;
  for (double v : p) CHECK(std::abs(v - 0.3) < 3.0 * std::sqrt(0.21 / n));
  const double corr = (p01 - p[0] * p[1]) / std::sqrt(p[0] * (1 - p[0]) * p[1] * (1 - p[1]));
  CHECK(corr > 0.05);
}

TEST_CASE("noiseless event times follow the product of survival curves") {
  // Each step survives with probability S(t), so P(T > t) = prod_{u<=t} S(u).
  const std::vector<double> h{0.1, 0.05, 0.2, 0.1, 0.3};
  const auto law = event_time_survival(h, 0.0);
  double s = 1.0, p = 1.0;
  for (std::size_t k = 0; k < h.size(); ++k) {
    s *= 1.0 - h[k];
    p *= s;
    CHECK(law[k] == doctest::Approx(p).epsilon(1e-14));
  }
}

TEST_CASE("noisy event-time law integrates the logit noise") {
  const std::vector<double> h{0.02, 0.05, 0.1, 0.01, 0.08, 0.1};
  for (double sigma : {0.5, 1.5}) {
    const auto law = event_time_survival(h, sigma);
    double s = 1.0, p = 1.0;
    for (std::size_t k = 0; k < h.size(); ++k) {
      s *= 1.0 - h[k];
      p *= noisy_mean(s, sigma);
      CHECK(law[k] == doctest::Approx(p).epsilon(1e-10));
    }
  }
}

TEST_CASE("upper-clamped hazards: censoring probability matches the law") {
  const std::vector<double> h(4, 0.1);
  // P(no failure through 4) = prod_t 0.9^t = 0.9^10.
  const double p_censor = std::pow(0.9, 10);
  std::mt19937_64 rng(8);
  const int n = 40000;
  int censored = 0;
  for (int i = 0; i < n; ++i) censored += 1 - sample_trajectory(h, 0.0, rng).event;
  const double sd = std::sqrt(n * p_censor * (1 - p_censor));
  CHECK(std::abs(censored - n * p_censor) < 3.2905 * sd);
}

TEST_CASE("lower-clamped hazards are essentially always censored") {
  const std::vector<double> h(128, 1e-7);
  std::mt19937_64 rng(9);
  int censored = 0;
  for (int i = 0; i < 2000; ++i) {
    const auto tr = sample_trajectory(h, 0.0, rng);
    censored += 1 - tr.event;
    if (!tr.event) CHECK(tr.observed_time == 128);
  }
  CHECK(censored >= 1995);
}

TEST_CASE("trajectories report the first failure") {
  std::mt19937_64 rng(10);
  const std::vector<double> h(10, 0.1);
  for (int i = 0; i < 500; ++i) {
    const auto tr = sample_trajectory(h, 0.5, rng);
    CHECK(tr.observed_time >= 1);
    CHECK(tr.observed_time <= 10);
    if (tr.observed_time < 10) CHECK(tr.event == 1);
    CHECK(tr.s_true.size() == 10);
  }
}

TEST_CASE("same seed gives identical datasets and different seeds differ") {
  auto bytes = [](const SimConfig& c) {
    const auto d = generate_dataset(c);
    std::stringstream a, b;
    write_cohort_jsonl(a, d.cohort);
    write_oracle_jsonl(b, d.oracle);
    return a.str() + b.str();
  };
  const SimConfig c = small_config(100, 11);
  CHECK(bytes(c) == bytes(c));
  CHECK(bytes(c) != bytes(small_config(100, 12)));
}

TEST_CASE("patients do not depend on cohort size") {
  const auto a = generate_dataset(small_config(50, 13));
  const auto b = generate_dataset(small_config(80, 13));
  for (std::size_t i = 0; i < 50; ++i) {
    CHECK(a.cohort.patients[i].v == b.cohort.patients[i].v);
    CHECK(a.cohort.patients[i].observed_time == b.cohort.patients[i].observed_time);
  }
}

TEST_CASE("oracle records agree with the counterfactual curves") {
  const SimConfig c = small_config(60, 14);
  const auto d = generate_dataset(c);
  const auto curves = OracleOutcomeModel(c, d.coefficients).counterfactual_curves(d.cohort);
  for (int tau : c.oracle_taus) {
    const auto m1 = curves.rmst(1, tau);
    const auto m0 = curves.rmst(0, tau);
    double ate = 0.0;
    for (std::size_t i = 0; i < d.cohort.size(); ++i) {
      CHECK(d.oracle[i].rmst1.at(tau) == doctest::Approx(m1[i]).epsilon(1e-14));
      CHECK(d.oracle[i].rmst0.at(tau) == doctest::Approx(m0[i]).epsilon(1e-14));
      ate += m1[i] - m0[i];
    }
    ate /= static_cast<double>(d.cohort.size());
    CHECK(true_ate(d.oracle, tau) == doctest::Approx(ate).epsilon(1e-13));
    CHECK(true_ate(d.cohort, d.coefficients, c, tau) == doctest::Approx(ate).epsilon(1e-13));
  }
  CHECK_THROWS_AS((void)true_ate(d.oracle, 5), ContractError);
}

TEST_CASE("no treatment effect gives an exactly zero true ATE") {
  SimConfig c = small_config(80, 15);
  c.theta = 0.0;
  const auto d = generate_dataset(c);
  for (int tau : {8, 12, 16}) {
    CHECK(true_ate(d.oracle, tau) == 0.0);
    CHECK(true_ate(d.cohort, d.coefficients, c, tau) == 0.0);
  }
}

TEST_CASE("oracle file round trip") {
  const auto d = generate_dataset(small_config(20, 16));
  std::stringstream ss;
  write_oracle_jsonl(ss, d.oracle);
  const auto back = read_oracle_jsonl(ss);
  REQUIRE(back.size() == d.oracle.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].id == d.oracle[i].id);
    CHECK(back[i].s_true == d.oracle[i].s_true);
    CHECK(back[i].rmst1 == d.oracle[i].rmst1);
    CHECK(back[i].rmst0 == d.oracle[i].rmst0);
    CHECK(back[i].pi_true == d.oracle[i].pi_true);
  }
  std::stringstream bad("{\"id\": 1}\n");
  CHECK_THROWS_AS((void)read_oracle_jsonl(bad), FormatError);
}

TEST_CASE("config validation and JSON defaults") {
  SimConfig c;
  c.hazard_upper = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = SimConfig{};
  c.propensity_high = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = SimConfig{};
  c.propensity_low = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = SimConfig{};
  c.oracle_taus = {200};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  const SimConfig parsed = nlohmann::json{{"theta", 0.0}, {"n_patients", 7}}.get<SimConfig>();
  CHECK(parsed.theta == 0.0);
  CHECK(parsed.n_patients == 7);
  CHECK(parsed.h0 == 0.001);
  CHECK(parsed.noise_sigma == 0.5);
  const SimConfig round = nlohmann::json(SimConfig{}).get<SimConfig>();
  CHECK(nlohmann::json(round) == nlohmann::json(SimConfig{}));
}

}  // TEST_SUITE
