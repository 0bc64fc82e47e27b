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

// Semi-synthetic longitudinal survival data with confounded treatment.
//
// Covariates are synthesized: a latent severity factor drives three
// correlated diagnosis bits (Gaussian copula) and shifts four standardized
// AR(1) vital-sign series downward. Treatment probability depends only on the
// "severely ill" flag (two or more diagnoses). Per-step hazards are
//
//   h(t) = H0 exp(-lambda t) * exp(theta A) * exp(sum_j beta_j Z_j)
//          * exp(rate * t * Z*) * exp(sum_j gamma_j g(V_j(t)))
//
// clamped to [hazard_lower, hazard_upper]. S(t) = prod_{u<=t} (1 - h(u)) is
// perturbed on the logit scale with N(0, noise_sigma^2) noise, redrawn per
// step, and at every step a Bernoulli(S_noisy(t)) draw decides survival; the
// first failure is the event time, and no failure through t_max means right
// censoring at t_max.
//
// The oracle survival curve is the exact law of that event time,
// P(T > t) = prod_{u<=t} E[sigmoid(logit S(u) + noise)], with the expectation
// computed by Gauss-Hermite quadrature. True treatment effects compare these
// curves under A = 1 and A = 0 for every patient.

#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <random>
#include <span>
#include <vector>

#include "json.hpp"

#include "dynst/causal/outcome_model.hpp"
#include "dynst/data/cohort.hpp"

namespace dynst::sim {

struct SimConfig {
  std::size_t n_patients = 5000;
  std::size_t t_max = 128;

  double h0 = 0.001;
  double lambda = 0.25;
  double theta = -0.5;
  double beta_lo = 0.7, beta_hi = 1.2;
  double gamma_lo = 0.1, gamma_hi = 0.3;
  // log(1.02): +2% hazard per step for severely ill patients.
  double interaction_rate = 0.0198026272961797;
  double vital_cap = 3.0;
  // false: g(v) = min(v^2, cap) for v < 0. true: the literal max(v^2, cap).
  bool vital_floor_reading = false;
  double noise_sigma = 0.5;
  double hazard_lower = 1e-7;
  double hazard_upper = 0.1;
  double propensity_high = 0.8;
  double propensity_low = 0.2;

  double male_prevalence = 0.5;
  std::array<double, 3> diagnosis_prevalence{0.3, 0.3, 0.3};
  // Latent (tetrachoric) correlation between diagnoses.
  double diagnosis_correlation = 0.3;
  double vital_autocorrelation = 0.9;
  // Loading of the latent severity on each vital; vitals stay N(0,1)
  // marginally.
  double vital_severity_loading = 0.4;

  std::vector<int> oracle_taus{8, 12, 16};
  std::uint64_t seed = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const SimConfig& c);
// Missing keys keep their defaults.
void from_json(const nlohmann::json& j, SimConfig& c);

struct SimCoefficients {
  std::array<double, 4> beta{};
  std::array<double, 4> gamma{};
};

void to_json(nlohmann::json& j, const SimCoefficients& c);

SimCoefficients draw_coefficients(const SimConfig& config);

// Covariates of one patient before treatment and outcome are simulated.
struct Covariates {
  std::vector<double> z;  // male, hypertension, CAD, AF, severely ill
  std::vector<double> v;  // [t_max x 4]
  double severity = 0.0;
};

Covariates sample_patient_covariates(const SimConfig& config, std::mt19937_64& rng);
std::vector<Covariates> sample_covariates(const SimConfig& config);

double propensity(int severely_ill, const SimConfig& config);
int assign_treatment(int severely_ill, const SimConfig& config, std::mt19937_64& rng);

// Contribution of a standardized vital to the log hazard.
double vital_effect(double v, const SimConfig& config);

// Hazard at step t. `z` holds the four binary risk factors (male,
// hypertension, CAD, AF); `vitals` holds the four vitals at step t.
double hazard(int t, int treatment, std::span<const double> z, int severely_ill,
              std::span<const double> vitals, const SimCoefficients& coeffs,
              const SimConfig& config);

// Hazards h(1..t_max) for one patient with the given treatment.
std::vector<double> hazard_path(const PatientRecord& patient, int treatment,
                                const SimCoefficients& coeffs,
                                const SimConfig& config);

struct Trajectory {
  int observed_time = 0;
  int event = 0;
  std::vector<double> s_true;  // P(T > t), t = 1..t_max
};

Trajectory sample_trajectory(std::span<const double> hazards, double noise_sigma,
                             std::mt19937_64& rng);

// Exact law of the sampled event time for given hazards.
std::vector<double> event_time_survival(std::span<const double> hazards,
                                        double noise_sigma);

struct OracleRecord {
  int id = 0;
  std::vector<double> s_true;
  std::map<int, double> rmst1;
  std::map<int, double> rmst0;
  double pi_true = 0.0;
};

struct SimSummary {
  double censoring_rate = 0.0;
  double mean_observed_time = 0.0;
  double treated_fraction = 0.0;
};

void to_json(nlohmann::json& j, const SimSummary& s);

struct SimulatedData {
  Cohort cohort;
  std::vector<OracleRecord> oracle;
  SimCoefficients coefficients;
  SimSummary summary;
};

SimulatedData generate_dataset(const SimConfig& config);

// Noise-integrated counterfactual curves computed from the data-generating
// process itself.
class OracleOutcomeModel final : public causal::OutcomeModel {
 public:
  OracleOutcomeModel(SimConfig config, SimCoefficients coeffs)
      : config_(std::move(config)), coeffs_(coeffs) {}
  causal::CounterfactualCurves counterfactual_curves(const Cohort& cohort) const override;

 private:
  SimConfig config_;
  SimCoefficients coeffs_;
};

// Mean over the cohort of RMST(tau) under A = 1 minus under A = 0.
double true_ate(const Cohort& cohort, const SimCoefficients& coeffs,
                const SimConfig& config, int tau);

// True ATE from oracle records (requires tau among the stored cutoffs).
double true_ate(std::span<const OracleRecord> oracle, int tau);

std::vector<double> true_propensities(std::span<const OracleRecord> oracle);

// One JSON object per line: {"id", "s_true", "rmst1": {"<tau>": ...},
// "rmst0": {...}, "pi_true"}.
void write_oracle_jsonl(std::ostream& out, std::span<const OracleRecord> oracle);
std::vector<OracleRecord> read_oracle_jsonl(std::istream& in);

}  // namespace dynst::sim
