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

#include "dynst/sim/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <string>
#include <limits>

#include <Eigen/Eigenvalues>
#include <boost/math/distributions/normal.hpp>

#include "dynst/error.hpp"
#include "dynst/survival/survival_math.hpp"

namespace dynst::sim {
namespace {

enum Stream : std::uint32_t {
  kCoefficientStream = 0,
  kCovariateStream = 1,
  kTreatmentStream = 2,
  kOutcomeStream = 3,
};

std::mt19937_64 make_stream(std::uint64_t seed, Stream stream, std::uint64_t id = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(id),
                    static_cast<std::uint32_t>(id >> 32)};
  return std::mt19937_64(seq);
}

// Probabilists' Gauss-Hermite rule: E[f(Z)] ~ sum_k w_k f(x_k), Z ~ N(0,1).
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

const QuadratureRule& gauss_hermite() {
  static const QuadratureRule rule = [] {
    constexpr int n = 48;
    Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
    for (int k = 1; k < n; ++k) {
      jacobi(k - 1, k) = jacobi(k, k - 1) = std::sqrt(static_cast<double>(k));
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(jacobi);
    QuadratureRule r;
    for (int k = 0; k < n; ++k) {
      r.nodes.push_back(solver.eigenvalues()(k));
      const double first = solver.eigenvectors()(0, k);
      r.weights.push_back(first * first);
    }
    return r;
  }();
  return rule;
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// logit(S) from log S without cancellation when S is close to 1.
double logit_from_log(double log_s) { return log_s - std::log(-std::expm1(log_s)); }

double threshold_for(double prevalence) {
  if (prevalence <= 0.0) return std::numeric_limits<double>::infinity();
  if (prevalence >= 1.0) return -std::numeric_limits<double>::infinity();
  return boost::math::quantile(boost::math::normal_distribution<double>(), 1.0 - prevalence);
}

void check_probability(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(std::string(name) + " must lie in [0,1]");
}

}  // namespace

void SimConfig::validate() const {
  if (n_patients == 0) throw ConfigError("n_patients must be positive");
  if (t_max == 0) throw ConfigError("t_max must be positive");
  if (!(h0 > 0.0)) throw ConfigError("h0 must be positive");
  if (!(beta_lo <= beta_hi) || !(gamma_lo <= gamma_hi))
    throw ConfigError("coefficient ranges must satisfy lo <= hi");
  if (!(noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be non-negative");
  if (!(hazard_lower > 0.0 && hazard_lower <= hazard_upper && hazard_upper < 1.0))
    throw ConfigError("hazard bounds must satisfy 0 < lower <= upper < 1");
  for (double p : {propensity_high, propensity_low}) {
    if (!(p > 0.0 && p < 1.0)) throw ConfigError("propensity levels must lie in (0,1)");
  }
  check_probability(male_prevalence, "male_prevalence");
  for (double p : diagnosis_prevalence) check_probability(p, "diagnosis_prevalence");
  if (!(diagnosis_correlation >= 0.0 && diagnosis_correlation < 1.0))
    throw ConfigError("diagnosis_correlation must lie in [0,1)");
  if (!(std::abs(vital_autocorrelation) < 1.0))
    throw ConfigError("vital_autocorrelation must lie in (-1,1)");
  if (!(std::abs(vital_severity_loading) < 1.0))
    throw ConfigError("vital_severity_loading must lie in (-1,1)");
  for (int tau : oracle_taus) {
    if (tau < 1 || static_cast<std::size_t>(tau) > t_max)
      throw ConfigError("oracle cutoff outside 1..t_max: " + std::to_string(tau));
  }
}

void to_json(nlohmann::json& j, const SimConfig& c) {
  j = nlohmann::json{{"n_patients", c.n_patients},
                     {"t_max", c.t_max},
                     {"h0", c.h0},
                     {"lambda", c.lambda},
                     {"theta", c.theta},
                     {"beta_lo", c.beta_lo},
                     {"beta_hi", c.beta_hi},
                     {"gamma_lo", c.gamma_lo},
                     {"gamma_hi", c.gamma_hi},
                     {"interaction_rate", c.interaction_rate},
                     {"vital_cap", c.vital_cap},
                     {"vital_floor_reading", c.vital_floor_reading},
                     {"noise_sigma", c.noise_sigma},
                     {"hazard_lower", c.hazard_lower},
                     {"hazard_upper", c.hazard_upper},
                     {"propensity_high", c.propensity_high},
                     {"propensity_low", c.propensity_low},
                     {"male_prevalence", c.male_prevalence},
                     {"diagnosis_prevalence", c.diagnosis_prevalence},
                     {"diagnosis_correlation", c.diagnosis_correlation},
                     {"vital_autocorrelation", c.vital_autocorrelation},
                     {"vital_severity_loading", c.vital_severity_loading},
                     {"oracle_taus", c.oracle_taus},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, SimConfig& c) {
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("n_patients", c.n_patients);
  get("t_max", c.t_max);
  get("h0", c.h0);
  get("lambda", c.lambda);
  get("theta", c.theta);
  get("beta_lo", c.beta_lo);
  get("beta_hi", c.beta_hi);
  get("gamma_lo", c.gamma_lo);
  get("gamma_hi", c.gamma_hi);
  get("interaction_rate", c.interaction_rate);
  get("vital_cap", c.vital_cap);
  get("vital_floor_reading", c.vital_floor_reading);
  get("noise_sigma", c.noise_sigma);
  get("hazard_lower", c.hazard_lower);
  get("hazard_upper", c.hazard_upper);
  get("propensity_high", c.propensity_high);
  get("propensity_low", c.propensity_low);
  get("male_prevalence", c.male_prevalence);
  get("diagnosis_prevalence", c.diagnosis_prevalence);
  get("diagnosis_correlation", c.diagnosis_correlation);
  get("vital_autocorrelation", c.vital_autocorrelation);
  get("vital_severity_loading", c.vital_severity_loading);
  get("oracle_taus", c.oracle_taus);
  get("seed", c.seed);
}

void to_json(nlohmann::json& j, const SimCoefficients& c) {
  j = nlohmann::json{{"beta", c.beta}, {"gamma", c.gamma}};
}

void to_json(nlohmann::json& j, const SimSummary& s) {
  j = nlohmann::json{{"censoring_rate", s.censoring_rate},
                     {"mean_observed_time", s.mean_observed_time},
                     {"treated_fraction", s.treated_fraction}};
}

SimCoefficients draw_coefficients(const SimConfig& config) {
  auto rng = make_stream(config.seed, kCoefficientStream);
  std::uniform_real_distribution<double> beta(config.beta_lo, config.beta_hi);
  std::uniform_real_distribution<double> gamma(config.gamma_lo, config.gamma_hi);
  SimCoefficients c;
  for (double& b : c.beta) b = beta(rng);
  for (double& g : c.gamma) g = gamma(rng);
  return c;
}

Covariates sample_patient_covariates(const SimConfig& config, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::bernoulli_distribution male(config.male_prevalence);

  Covariates out;
  out.z.assign(kNumStaticFeatures, 0.0);
  out.z[kMale] = male(rng) ? 1.0 : 0.0;

  const double severity = normal(rng);
  out.severity = severity;
  const double rho = config.diagnosis_correlation;
  int diagnoses = 0;
  for (int k = 0; k < 3; ++k) {
    const double latent = std::sqrt(rho) * severity + std::sqrt(1.0 - rho) * normal(rng);
    const bool present = latent > threshold_for(config.diagnosis_prevalence[k]);
    out.z[kHypertension + k] = present ? 1.0 : 0.0;
    diagnoses += present ? 1 : 0;
  }
  out.z[kSeverelyIll] = diagnoses >= 2 ? 1.0 : 0.0;

  const std::size_t q = kNumTemporalFeatures;
  const double phi = config.vital_autocorrelation;
  const double innovation = std::sqrt(1.0 - phi * phi);
  const double a = config.vital_severity_loading;
  const double idiosyncratic = std::sqrt(1.0 - a * a);
  out.v.assign(config.t_max * q, 0.0);
  for (std::size_t j = 0; j < q; ++j) {
    double u = normal(rng);
    for (std::size_t t = 0; t < config.t_max; ++t) {
      if (t > 0) u = phi * u + innovation * normal(rng);
      out.v[t * q + j] = -a * severity + idiosyncratic * u;
    }
  }
  return out;
}

std::vector<Covariates> sample_covariates(const SimConfig& config) {
  config.validate();
  std::vector<Covariates> out;
  out.reserve(config.n_patients);
  for (std::size_t i = 0; i < config.n_patients; ++i) {
    auto rng = make_stream(config.seed, kCovariateStream, i);
    out.push_back(sample_patient_covariates(config, rng));
  }
  return out;
}

double propensity(int severely_ill, const SimConfig& config) {
  return severely_ill ? config.propensity_high : config.propensity_low;
}

int assign_treatment(int severely_ill, const SimConfig& config, std::mt19937_64& rng) {
  std::bernoulli_distribution draw(propensity(severely_ill, config));
  return draw(rng) ? 1 : 0;
}

double vital_effect(double v, const SimConfig& config) {
  if (v >= 0.0) return 0.0;
  const double sq = v * v;
  return config.vital_floor_reading ? std::max(sq, config.vital_cap)
                                    : std::min(sq, config.vital_cap);
}

double hazard(int t, int treatment, std::span<const double> z, int severely_ill,
              std::span<const double> vitals, const SimCoefficients& coeffs,
              const SimConfig& config) {
  if (z.size() != coeffs.beta.size() || vitals.size() != coeffs.gamma.size())
    throw ShapeError("hazard expects 4 risk factors and 4 vitals");
  double log_h = std::log(config.h0) - config.lambda * t + config.theta * treatment;
  for (std::size_t j = 0; j < z.size(); ++j) log_h += coeffs.beta[j] * z[j];
  if (severely_ill) log_h += config.interaction_rate * t;
  for (std::size_t j = 0; j < vitals.size(); ++j)
    log_h += coeffs.gamma[j] * vital_effect(vitals[j], config);
  return std::clamp(std::exp(log_h), config.hazard_lower, config.hazard_upper);
}

std::vector<double> hazard_path(const PatientRecord& patient, int treatment,
                                const SimCoefficients& coeffs,
                                const SimConfig& config) {
  const std::size_t q = kNumTemporalFeatures;
  if (patient.z.size() != kNumStaticFeatures || patient.v.size() % q != 0 || patient.v.empty())
    throw ShapeError("patient record does not match the simulator layout");
  const std::size_t rows = patient.v.size() / q;
  const std::span<const double> z(patient.z.data(), 4);
  const int severely_ill = patient.z[kSeverelyIll] > 0.5 ? 1 : 0;
  std::vector<double> h(config.t_max);
  for (std::size_t k = 0; k < config.t_max; ++k) {
    const std::size_t row = std::min(k, rows - 1);
    h[k] = hazard(static_cast<int>(k) + 1, treatment, z, severely_ill,
                  std::span<const double>(patient.v.data() + row * q, q), coeffs, config);
  }
  return h;
}

std::vector<double> event_time_survival(std::span<const double> hazards, double noise_sigma) {
  const auto& rule = gauss_hermite();
  std::vector<double> out(hazards.size());
  double log_s = 0.0;
  double log_survive = 0.0;
  for (std::size_t k = 0; k < hazards.size(); ++k) {
    log_s += std::log1p(-hazards[k]);
    double p;
    if (noise_sigma == 0.0) {
      p = std::exp(log_s);
    } else {
      const double center = logit_from_log(log_s);
      p = 0.0;
      for (std::size_t i = 0; i < rule.nodes.size(); ++i)
        p += rule.weights[i] * sigmoid(center + noise_sigma * rule.nodes[i]);
    }
    log_survive += std::log(p);
    out[k] = std::exp(log_survive);
  }
  return out;
}

Trajectory sample_trajectory(std::span<const double> hazards, double noise_sigma,
                             std::mt19937_64& rng) {
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Trajectory out;
  out.observed_time = static_cast<int>(hazards.size());
  out.event = 0;
  double log_s = 0.0;
  for (std::size_t k = 0; k < hazards.size(); ++k) {
    log_s += std::log1p(-hazards[k]);
    const double eps = noise(rng);
    const double survive = noise_sigma == 0.0
                               ? std::exp(log_s)
                               : sigmoid(logit_from_log(log_s) + noise_sigma * eps);
    if (unit(rng) >= survive) {
      out.observed_time = static_cast<int>(k) + 1;
      out.event = 1;
      break;
    }
  }
  out.s_true = event_time_survival(hazards, noise_sigma);
  return out;
}

SimulatedData generate_dataset(const SimConfig& config) {
  config.validate();
  SimulatedData data;
  data.coefficients = draw_coefficients(config);
  data.cohort.t_max = config.t_max;
  data.cohort.q = kNumTemporalFeatures;
  data.cohort.patients.reserve(config.n_patients);
  data.oracle.reserve(config.n_patients);

  double censored = 0.0, observed = 0.0, treated = 0.0;
  for (std::size_t i = 0; i < config.n_patients; ++i) {
    auto cov_rng = make_stream(config.seed, kCovariateStream, i);
    auto treat_rng = make_stream(config.seed, kTreatmentStream, i);
    auto outcome_rng = make_stream(config.seed, kOutcomeStream, i);

    Covariates cov = sample_patient_covariates(config, cov_rng);
    const int severely_ill = cov.z[kSeverelyIll] > 0.5 ? 1 : 0;

    PatientRecord rec;
    rec.id = static_cast<int>(i);
    rec.z = std::move(cov.z);
    rec.v = std::move(cov.v);
    rec.treatment = assign_treatment(severely_ill, config, treat_rng);

    const auto h_obs = hazard_path(rec, rec.treatment, data.coefficients, config);
    Trajectory traj = sample_trajectory(h_obs, config.noise_sigma, outcome_rng);
    rec.observed_time = traj.observed_time;
    rec.event = traj.event;

    OracleRecord oracle;
    oracle.id = rec.id;
    oracle.pi_true = propensity(severely_ill, config);
    const auto s1 = rec.treatment == 1
                        ? traj.s_true
                        : event_time_survival(hazard_path(rec, 1, data.coefficients, config),
                                              config.noise_sigma);
    const auto s0 = rec.treatment == 0
                        ? traj.s_true
                        : event_time_survival(hazard_path(rec, 0, data.coefficients, config),
                                              config.noise_sigma);
    for (int tau : config.oracle_taus) {
      oracle.rmst1[tau] = survival::restricted_mean(s1, tau);
      oracle.rmst0[tau] = survival::restricted_mean(s0, tau);
    }
    oracle.s_true = std::move(traj.s_true);

    censored += 1 - rec.event;
    observed += rec.observed_time;
    treated += rec.treatment;
    data.cohort.patients.push_back(std::move(rec));
    data.oracle.push_back(std::move(oracle));
  }
  const double n = static_cast<double>(config.n_patients);
  data.summary = {censored / n, observed / n, treated / n};
  return data;
}

causal::CounterfactualCurves OracleOutcomeModel::counterfactual_curves(
    const Cohort& cohort) const {
  causal::CounterfactualCurves out;
  for (auto* preds : {&out.treated, &out.control}) {
    preds->n = cohort.size();
    preds->t_max = config_.t_max;
    preds->values.reserve(cohort.size() * config_.t_max);
  }
  for (const auto& rec : cohort.patients) {
    for (int arm : {1, 0}) {
      const auto s = event_time_survival(hazard_path(rec, arm, coeffs_, config_),
                                         config_.noise_sigma);
      auto& dst = arm == 1 ? out.treated.values : out.control.values;
      dst.insert(dst.end(), s.begin(), s.end());
    }
  }
  return out;
}

double true_ate(const Cohort& cohort, const SimCoefficients& coeffs,
                const SimConfig& config, int tau) {
  if (cohort.size() == 0) throw ContractError("true_ate on an empty cohort");
  const auto curves = OracleOutcomeModel(config, coeffs).counterfactual_curves(cohort);
  const auto m1 = curves.rmst(1, tau);
  const auto m0 = curves.rmst(0, tau);
  double sum = 0.0;
  for (std::size_t i = 0; i < m1.size(); ++i) sum += m1[i] - m0[i];
  return sum / static_cast<double>(m1.size());
}

double true_ate(std::span<const OracleRecord> oracle, int tau) {
  if (oracle.empty()) throw ContractError("true_ate on an empty oracle set");
  double sum = 0.0;
  for (const auto& rec : oracle) {
    const auto a = rec.rmst1.find(tau);
    const auto b = rec.rmst0.find(tau);
    if (a == rec.rmst1.end() || b == rec.rmst0.end())
      throw ContractError("oracle records lack cutoff " + std::to_string(tau));
    sum += a->second - b->second;
  }
  return sum / static_cast<double>(oracle.size());
}

std::vector<double> true_propensities(std::span<const OracleRecord> oracle) {
  std::vector<double> out;
  out.reserve(oracle.size());
  for (const auto& rec : oracle) out.push_back(rec.pi_true);
  return out;
}

namespace {

nlohmann::json cutoff_map(const std::map<int, double>& m) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [tau, value] : m) j[std::to_string(tau)] = value;
  return j;
}

std::map<int, double> parse_cutoff_map(const nlohmann::json& j) {
  std::map<int, double> m;
  for (const auto& [key, value] : j.items()) m[std::stoi(key)] = value.get<double>();
  return m;
}

}  // namespace

void write_oracle_jsonl(std::ostream& out, std::span<const OracleRecord> oracle) {
  for (const auto& rec : oracle) {
    nlohmann::json j{{"id", rec.id},
                     {"s_true", rec.s_true},
                     {"rmst1", cutoff_map(rec.rmst1)},
                     {"rmst0", cutoff_map(rec.rmst0)},
                     {"pi_true", rec.pi_true}};
    out << j.dump() << '\n';
  }
}

std::vector<OracleRecord> read_oracle_jsonl(std::istream& in) {
  std::vector<OracleRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      OracleRecord rec;
      rec.id = j.at("id").get<int>();
      rec.s_true = j.at("s_true").get<std::vector<double>>();
      rec.rmst1 = parse_cutoff_map(j.at("rmst1"));
      rec.rmst0 = parse_cutoff_map(j.at("rmst0"));
      rec.pi_true = j.at("pi_true").get<double>();
      out.push_back(std::move(rec));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("oracle line " + std::to_string(line_no) + ": " + e.what());
    } catch (const std::invalid_argument& e) {
      throw FormatError("oracle line " + std::to_string(line_no) + ": bad cutoff key");
    }
  }
  return out;
}

}  // namespace dynst::sim
