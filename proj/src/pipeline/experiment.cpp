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

#include "dynst/pipeline/experiment.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <random>

#include "dynst/error.hpp"

namespace dynst::pipeline {
namespace {

constexpr int kReportTau = 12;

struct Splits {
  Cohort train, val, test;
};

// Hands out splits and reports every read to the observer.
class TrackedSplits {
 public:
  TrackedSplits(Splits splits, std::size_t replicate, const AccessObserver& observer)
      : splits_(std::move(splits)), replicate_(replicate), observer_(observer) {}

  const Cohort& train() const { return access(splits_.train, "train"); }
  const Cohort& val() const { return access(splits_.val, "val"); }
  const Cohort& test() const { return access(splits_.test, "test"); }

 private:
  const Cohort& access(const Cohort& c, std::string_view name) const {
    if (observer_) observer_(replicate_, name);
    return c;
  }

  Splits splits_;
  std::size_t replicate_;
  const AccessObserver& observer_;
};

Splits make_splits(const Cohort& cohort, const SplitRatios& ratios, std::uint64_t seed) {
  const auto idx = split(cohort.size(), ratios, seed);
  return {subset(cohort, idx.train), subset(cohort, idx.val), subset(cohort, idx.test)};
}

sim::SimConfig replicate_sim(const ExperimentConfig& config, std::uint64_t seed) {
  sim::SimConfig s = config.sim;
  s.seed = seed;
  s.oracle_taus = config.taus;
  return s;
}

void add_self_checks(ExperimentReport& report, const model::SurvivalModel& model,
                     const Cohort& cohort, const ExperimentConfig& config) {
  for (auto& r : gradient_checks(config.seed)) report.checks.push_back(std::move(r));
  report.checks.push_back(causality_check(model, cohort, config.causality_patients, config.seed));
  report.checks.push_back(survival_math_check(1000, config.seed));
}

CheckResult negative_check(std::string name, double value) {
  return {std::move(name), value, 0.0, value < 0.0};
}

nlohmann::json mean_sd_json(const MeanSd& m) {
  nlohmann::json j{{"mean", m.mean}};
  if (m.sd) j["sd"] = *m.sd;
  return j;
}

}  // namespace

void ExperimentConfig::validate() const {
  sim.validate();
  if (n_seeds == 0) throw ConfigError("experiment needs at least one seed");
  if (grid.cells(base).empty()) throw ConfigError("experiment grid has no cells");
  prediction_split.validate();
  causal_split.validate();
  if (prediction_split.val <= 0.0 || prediction_split.test <= 0.0)
    throw ConfigError("prediction split needs validation and test fractions");
  if (causal_split.val <= 0.0) throw ConfigError("causal split needs a validation fraction");
  if (taus.empty()) throw ConfigError("experiment needs at least one cutoff");
  for (int tau : taus)
    if (tau < 1 || static_cast<std::size_t>(tau) > sim.t_max)
      throw ConfigError("cutoff outside 1..t_max: " + std::to_string(tau));
  propensity.validate();
}

void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = nlohmann::json{{"preset", c.preset},
                     {"sim", c.sim},
                     {"n_seeds", c.n_seeds},
                     {"seed", c.seed},
                     {"grid", c.grid},
                     {"train", c.base},
                     {"prediction_split", {c.prediction_split.train, c.prediction_split.val,
                                           c.prediction_split.test}},
                     {"causal_split",
                      {c.causal_split.train, c.causal_split.val, c.causal_split.test}},
                     {"taus", c.taus},
                     {"propensity_features", c.propensity.features},
                     {"propensity_penalties", c.propensity.penalties},
                     {"propensity_clip", c.propensity.clip},
                     {"smoke", c.smoke},
                     {"causality_patients", c.causality_patients}};
  j["train"].erase("kind");
}

void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  auto get_ratios = [&](const char* key, SplitRatios& r) {
    if (!j.contains(key)) return;
    const auto v = j.at(key).get<std::vector<double>>();
    if (v.size() != 3) throw ConfigError(std::string(key) + " must hold three ratios");
    r = {v[0], v[1], v[2]};
  };
  get("preset", c.preset);
  if (j.contains("sim")) from_json(j.at("sim"), c.sim);
  get("n_seeds", c.n_seeds);
  get("seed", c.seed);
  if (j.contains("grid")) from_json(j.at("grid"), c.grid);
  if (j.contains("train")) from_json(j.at("train"), c.base);
  get_ratios("prediction_split", c.prediction_split);
  get_ratios("causal_split", c.causal_split);
  get("taus", c.taus);
  get("propensity_features", c.propensity.features);
  get("propensity_penalties", c.propensity.penalties);
  get("propensity_clip", c.propensity.clip);
  get("smoke", c.smoke);
  get("causality_patients", c.causality_patients);
}

ExperimentConfig preset_config(std::string_view name) {
  ExperimentConfig c;
  c.preset = std::string(name);
  c.sim.n_patients = 5000;
  c.n_seeds = 6;
  if (name == "full") return c;
  c.grid.d_model = {32};
  c.grid.n_layers = {2};
  c.grid.batch_size = {32};
  c.grid.alpha = {0.1};
  if (name == "desk") return c;
  if (name == "smoke") {
    c.sim.n_patients = 1000;
    c.n_seeds = 2;
    c.grid.budget = 1;
    c.smoke = true;
    return c;
  }
  throw ConfigError("unknown preset '" + std::string(name) + "' (smoke, desk, full)");
}

std::uint64_t replicate_seed(std::uint64_t master, std::size_t k) {
  std::seed_seq seq{static_cast<std::uint32_t>(master), static_cast<std::uint32_t>(master >> 32),
                    static_cast<std::uint32_t>(k), 0x5eedu};
  std::mt19937_64 rng(seq);
  return rng();
}

MeanSd summarize(std::span<const double> values) {
  MeanSd out;
  if (values.empty()) return out;
  double sum = 0.0;
  for (double v : values) sum += v;
  out.mean = sum / static_cast<double>(values.size());
  if (values.size() >= 2) {
    double sq = 0.0;
    for (double v : values) sq += (v - out.mean) * (v - out.mean);
    out.sd = std::sqrt(sq / static_cast<double>(values.size() - 1));
  }
  return out;
}

bool ExperimentReport::passed() const {
  for (const auto& c : checks)
    if (!c.passed) return false;
  return true;
}

void to_json(nlohmann::json& j, const ExperimentReport& r) {
  j = nlohmann::json{{"experiment", r.experiment},
                     {"config", r.config},
                     {"seeds", r.seeds},
                     {"checks", r.checks},
                     {"passed", r.passed()}};
  if (!r.models.empty()) {
    nlohmann::json models = nlohmann::json::object();
    for (const auto& m : r.models) {
      nlohmann::json selected = nlohmann::json::array();
      for (std::size_t k = 0; k < m.selected.size(); ++k) {
        nlohmann::json cell = m.selected[k];
        cell["val_mae"] = m.val_mae[k];
        cell["best_epoch"] = m.best_epoch[k];
        selected.push_back(std::move(cell));
      }
      models[model::to_string(m.kind)] = {{"test_mae", m.test_mae},
                                          {"summary", mean_sd_json(m.summary)},
                                          {"selected", selected}};
    }
    j["models"] = models;
  }
  if (!r.replicates.empty()) {
    nlohmann::json reps = nlohmann::json::array();
    for (const auto& rep : r.replicates) {
      reps.push_back({{"seed", rep.seed},
                      {"simulation", rep.simulation},
                      {"propensity_penalty", rep.propensity_penalty},
                      {"propensity_separation", rep.propensity_separation},
                      {"dynst_config", rep.dynst_config},
                      {"linear_config", rep.linear_config},
                      {"estimates", rep.estimates}});
    }
    j["replicates"] = reps;
    nlohmann::json table = nlohmann::json::object();
    for (const auto& b : r.bias_table) {
      table[std::to_string(b.tau)][b.method] = {{"bias", mean_sd_json(b.bias)},
                                                {"mean_abs_bias", b.mean_abs_bias}};
    }
    j["bias_table"] = table;
  }
}

ExperimentReport run_prediction_experiment(const ExperimentConfig& config,
                                           const AccessObserver& observer) {
  config.validate();
  ExperimentReport report;
  report.experiment = "predict";
  report.config = config;
  const model::ModelKind kinds[] = {model::ModelKind::kDynst, model::ModelKind::kStaticSt,
                                    model::ModelKind::kLinear};
  for (auto kind : kinds) report.models.push_back({kind, {}, {}, {}, {}, {}});

  std::vector<double> unadjusted_bias;
  for (std::size_t k = 0; k < config.n_seeds; ++k) {
    const std::uint64_t seed = replicate_seed(config.seed, k);
    report.seeds.push_back(seed);
    const auto data = sim::generate_dataset(replicate_sim(config, seed));
    const TrackedSplits splits(make_splits(data.cohort, config.prediction_split, seed), k,
                               observer);

    std::vector<std::unique_ptr<model::SurvivalModel>> fitted;
    for (std::size_t m = 0; m < report.models.size(); ++m) {
      TrainConfig base = config.base;
      base.kind = kinds[m];
      base.seed = seed;
      auto result = grid_search(config.grid, base, splits.train(), splits.val());
      auto& mr = report.models[m];
      mr.val_mae.push_back(result.best.best_val_mae);
      mr.selected.push_back(result.best_config);
      mr.best_epoch.push_back(result.best.best_epoch);
      fitted.push_back(std::move(result.best.model));
    }
    for (std::size_t m = 0; m < report.models.size(); ++m)
      report.models[m].test_mae.push_back(evaluate_mae(*fitted[m], splits.test()));

    if (std::find(config.taus.begin(), config.taus.end(), kReportTau) != config.taus.end()) {
      unadjusted_bias.push_back(causal::unadjusted_difference(data.cohort, kReportTau) -
                                sim::true_ate(data.oracle, kReportTau));
    }
    if (config.smoke && k == 0) add_self_checks(report, *fitted[0], splits.train(), config);
  }
  for (auto& m : report.models) m.summary = summarize(m.test_mae);

  if (!unadjusted_bias.empty())
    report.checks.push_back(
        negative_check("unadjusted_bias_negative", summarize(unadjusted_bias).mean));
  if (!config.smoke) {
    const double dynst = report.models[0].summary.mean;
    const double statik = report.models[1].summary.mean;
    const double linear = report.models[2].summary.mean;
    const double gap = std::max(dynst - statik, statik - linear);
    report.checks.push_back({"mae_ordering", gap, 0.0, gap <= 0.0});
  }
  return report;
}

ExperimentReport run_causal_experiment(const ExperimentConfig& config,
                                       const AccessObserver& observer) {
  config.validate();
  ExperimentReport report;
  report.experiment = "causal";
  report.config = config;

  for (std::size_t k = 0; k < config.n_seeds; ++k) {
    const std::uint64_t seed = replicate_seed(config.seed, k);
    report.seeds.push_back(seed);
    const auto data = sim::generate_dataset(replicate_sim(config, seed));
    const TrackedSplits splits(make_splits(data.cohort, config.causal_split, seed), k, observer);

    ReplicateEstimates rep;
    rep.seed = seed;
    rep.simulation = data.summary;

    TrainConfig base = config.base;
    base.seed = seed;
    base.kind = model::ModelKind::kDynst;
    auto dynst = grid_search(config.grid, base, splits.train(), splits.val());
    base.kind = model::ModelKind::kLinear;
    auto linear = grid_search(config.grid, base, splits.train(), splits.val());
    rep.dynst_config = dynst.best_config;
    rep.linear_config = linear.best_config;

    causal::PropensityOptions popts = config.propensity;
    popts.seed = seed;
    const auto propensity = causal::fit_propensity(data.cohort, popts);
    rep.propensity_penalty = propensity.penalty();
    rep.propensity_separation = propensity.separation_detected();
    const auto pi = propensity.predict(data.cohort);

    const auto dynst_curves =
        causal::FittedOutcomeModel(*dynst.best.model).counterfactual_curves(data.cohort);
    const auto linear_curves =
        causal::FittedOutcomeModel(*linear.best.model).counterfactual_curves(data.cohort);

    for (int tau : config.taus) {
      const double truth = sim::true_ate(data.oracle, tau);
      auto add = [&](const char* method, double estimate) {
        rep.estimates.push_back({method, tau, estimate, truth});
      };
      add("unadjusted", causal::unadjusted_difference(data.cohort, tau));
      add("ipw", causal::ipw_estimate(data.cohort, pi, tau, popts.clip));
      add("or_linear", causal::or_estimate(linear_curves, tau));
      add("or_dynst", causal::or_estimate(dynst_curves, tau));
      add("aipw", causal::aipw_estimate(data.cohort, pi, dynst_curves, tau, popts.clip));
    }
    if (config.smoke && k == 0) add_self_checks(report, *dynst.best.model, splits.train(), config);
    report.replicates.push_back(std::move(rep));
  }

  // Bias table: method x tau, averaged over replicates.
  std::map<std::pair<int, std::string>, std::vector<double>> biases;
  std::vector<std::string> order;
  for (const auto& rep : report.replicates) {
    for (const auto& e : rep.estimates) {
      auto& list = biases[{e.tau, e.method}];
      if (report.replicates.size() > 0 && &rep == &report.replicates.front() &&
          std::find(order.begin(), order.end(), e.method) == order.end())
        order.push_back(e.method);
      list.push_back(*e.bias());
    }
  }
  for (int tau : config.taus) {
    for (const auto& method : order) {
      const auto& list = biases.at({tau, method});
      double abs_sum = 0.0;
      for (double b : list) abs_sum += std::abs(b);
      report.bias_table.push_back(
          {method, tau, summarize(list), abs_sum / static_cast<double>(list.size())});
    }
  }

  auto find_bias = [&](const std::string& method, int tau) -> const BiasSummary* {
    for (const auto& b : report.bias_table)
      if (b.method == method && b.tau == tau) return &b;
    return nullptr;
  };
  if (const auto* unadj = find_bias("unadjusted", kReportTau)) {
    report.checks.push_back(negative_check("unadjusted_bias_negative", unadj->bias.mean));
    if (!config.smoke) {
      const double aipw = find_bias("aipw", kReportTau)->mean_abs_bias;
      const double or_dynst = find_bias("or_dynst", kReportTau)->mean_abs_bias;
      const double gap = std::max(aipw - or_dynst, or_dynst - unadj->mean_abs_bias);
      report.checks.push_back(
          {"bias_ordering", gap, 0.0, aipw <= or_dynst && or_dynst < unadj->mean_abs_bias});
    }
  }
  return report;
}

std::vector<std::filesystem::path> emit_curves(const model::SurvivalModel& model,
                                               const Cohort& cohort,
                                               const std::filesystem::path& prefix) {
  const auto preds = model::predict_survival(model, cohort);
  const std::filesystem::path patients = prefix.string() + "_patients.csv";
  const std::filesystem::path mean = prefix.string() + "_mean.csv";
  std::ofstream pout(patients);
  std::ofstream mout(mean);
  if (!pout || !mout) throw Error("cannot write curve files with prefix " + prefix.string());
  pout.precision(17);
  mout.precision(17);
  pout << "id,t,s\n";
  std::vector<double> avg(preds.t_max, 0.0);
  for (std::size_t i = 0; i < preds.n; ++i) {
    const auto row = preds.row(i);
    for (std::size_t t = 0; t < preds.t_max; ++t) {
      pout << cohort.patients[i].id << ',' << t + 1 << ',' << row[t] << '\n';
      avg[t] += row[t];
    }
  }
  mout << "t,s\n";
  for (std::size_t t = 0; t < preds.t_max; ++t)
    mout << t + 1 << ',' << (preds.n ? avg[t] / static_cast<double>(preds.n) : 0.0) << '\n';
  return {patients, mean};
}

}  // namespace dynst::pipeline
