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

// Command-line front end: simulate, train, evaluate, estimate-ate,
// experiment and gradcheck.
//
// Exit codes: 0 success, 1 a self-check or invariant failed, 2 bad input or
// configuration.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "dynst/causal/estimators.hpp"
#include "dynst/causal/propensity.hpp"
#include "dynst/error.hpp"
#include "dynst/model/survival_model.hpp"
#include "dynst/pipeline/diagnostics.hpp"
#include "dynst/pipeline/experiment.hpp"
#include "dynst/pipeline/training.hpp"
#include "dynst/sim/simulator.hpp"
#include "dynst/util/allocator.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitCheckFailed = 1;
constexpr int kExitBadInput = 2;

// Relative output paths are placed under $DYNST_OUT_DIR when it is set.
fs::path output_path(const fs::path& p) {
  const char* dir = std::getenv("DYNST_OUT_DIR");
  if (p.is_absolute() || dir == nullptr || *dir == '\0') return p;
  fs::create_directories(dir);
  return fs::path(dir) / p;
}

std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw dynst::Error("cannot write " + path.string());
  return out;
}

std::ifstream open_input(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw dynst::FormatError("cannot read " + path.string());
  return in;
}

json read_json_file(const fs::path& path) {
  auto in = open_input(path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw dynst::FormatError(path.string() + ": " + e.what());
  }
}

dynst::Cohort load_cohort(const fs::path& path) {
  auto in = open_input(path);
  return dynst::read_cohort_jsonl(in);
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      out.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw dynst::ConfigError("not an integer list: " + text);
    }
  }
  return out;
}

std::vector<std::string> parse_name_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
void override_with(const std::optional<T>& value, T& field) {
  if (value) field = *value;
}

struct SimFlags {
  std::optional<std::size_t> n_patients, t_max;
  std::optional<double> h0, lambda, theta, beta_lo, beta_hi, gamma_lo, gamma_hi;
  std::optional<double> interaction_rate, vital_cap, noise_sigma, hazard_lower, hazard_upper;
  std::optional<double> propensity_high, propensity_low, male_prevalence;
  std::optional<double> diagnosis_prevalence, diagnosis_correlation;
  std::optional<double> vital_autocorrelation, vital_severity_loading;
  bool vital_floor_reading = false;

  void attach(CLI::App& app) {
    app.add_option("--n", n_patients, "Number of patients");
    app.add_option("--t-max", t_max, "Time horizon in steps");
    app.add_option("--h0", h0, "Baseline hazard");
    app.add_option("--lambda", lambda, "Baseline hazard decay per step");
    app.add_option("--theta", theta, "Log hazard ratio of treatment");
    app.add_option("--beta-lo", beta_lo);
    app.add_option("--beta-hi", beta_hi);
    app.add_option("--gamma-lo", gamma_lo);
    app.add_option("--gamma-hi", gamma_hi);
    app.add_option("--interaction-rate", interaction_rate,
                   "Log hazard growth per step for severely ill patients");
    app.add_option("--vital-cap", vital_cap);
    app.add_flag("--vital-floor-reading", vital_floor_reading,
                 "Use max(v^2, cap) instead of min(v^2, cap) for low vitals");
    app.add_option("--noise-sigma", noise_sigma, "SD of the logit-scale survival noise");
    app.add_option("--hazard-lower", hazard_lower);
    app.add_option("--hazard-upper", hazard_upper);
    app.add_option("--propensity-high", propensity_high);
    app.add_option("--propensity-low", propensity_low);
    app.add_option("--male-prevalence", male_prevalence);
    app.add_option("--diagnosis-prevalence", diagnosis_prevalence,
                   "Prevalence of each of the three diagnoses");
    app.add_option("--diagnosis-correlation", diagnosis_correlation);
    app.add_option("--vital-autocorrelation", vital_autocorrelation);
    app.add_option("--vital-severity-loading", vital_severity_loading);
  }

  void apply_to(dynst::sim::SimConfig& c) const {
    override_with(n_patients, c.n_patients);
    override_with(t_max, c.t_max);
    override_with(h0, c.h0);
    override_with(lambda, c.lambda);
    override_with(theta, c.theta);
    override_with(beta_lo, c.beta_lo);
    override_with(beta_hi, c.beta_hi);
    override_with(gamma_lo, c.gamma_lo);
    override_with(gamma_hi, c.gamma_hi);
    override_with(interaction_rate, c.interaction_rate);
    override_with(vital_cap, c.vital_cap);
    if (vital_floor_reading) c.vital_floor_reading = true;
    override_with(noise_sigma, c.noise_sigma);
    override_with(hazard_lower, c.hazard_lower);
    override_with(hazard_upper, c.hazard_upper);
    override_with(propensity_high, c.propensity_high);
    override_with(propensity_low, c.propensity_low);
    override_with(male_prevalence, c.male_prevalence);
    if (diagnosis_prevalence) c.diagnosis_prevalence.fill(*diagnosis_prevalence);
    override_with(diagnosis_correlation, c.diagnosis_correlation);
    override_with(vital_autocorrelation, c.vital_autocorrelation);
    override_with(vital_severity_loading, c.vital_severity_loading);
  }
};

struct TrainFlags {
  std::optional<std::string> kind;
  std::optional<std::size_t> d_model, n_layers, n_heads, batch_size, epochs;
  std::optional<double> alpha, dropout, lr, weight_decay;

  void attach(CLI::App& app) {
    app.add_option("--model-kind", kind, "dynst, static_st or linear");
    app.add_option("--d-model", d_model);
    app.add_option("--layers", n_layers, "Number of encoder layers");
    app.add_option("--heads", n_heads);
    app.add_option("--batch", batch_size);
    app.add_option("--epochs", epochs);
    app.add_option("--alpha", alpha, "Weight of the time-error loss term");
    app.add_option("--dropout", dropout);
    app.add_option("--lr", lr);
    app.add_option("--weight-decay", weight_decay);
  }

  void apply_to(dynst::pipeline::TrainConfig& c) const {
    if (kind) c.kind = dynst::model::parse_model_kind(*kind);
    override_with(d_model, c.d_model);
    override_with(n_layers, c.n_layers);
    override_with(n_heads, c.n_heads);
    override_with(batch_size, c.batch_size);
    override_with(epochs, c.epochs);
    override_with(alpha, c.alpha);
    override_with(dropout, c.dropout);
    if (lr) c.lr = *lr;
    override_with(weight_decay, c.weight_decay);
  }
};

void write_meta(const fs::path& report, double seconds, const json& extra) {
  json meta = extra;
  meta["runtime_seconds"] = seconds;
  meta["finished_at_unix"] = static_cast<long long>(std::time(nullptr));
  auto out = open_output(fs::path(report.string() + ".meta.json"));
  out << meta.dump(2) << '\n';
}

void print_checks(const std::vector<dynst::pipeline::CheckResult>& checks) {
  for (const auto& c : checks) {
    std::cerr << (c.passed ? "[PASS] " : "[FAIL] ") << c.name << ": " << c.value
              << " (tolerance " << c.tolerance << ")\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  dynst::tune_allocator();
  CLI::App app{"Dynamic survival transformer: simulation, training and effect estimation"};
  app.require_subcommand(1);

  // simulate
  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic cohort and its oracle");
  std::optional<std::string> sim_config_path;
  std::string sim_out, sim_oracle;
  std::uint64_t sim_seed = 0;
  SimFlags sim_flags;
  simulate->add_option("--config", sim_config_path, "Simulation config JSON");
  simulate->add_option("--out", sim_out, "Cohort JSONL output")->required();
  simulate->add_option("--oracle", sim_oracle, "Oracle JSONL output")->required();
  simulate->add_option("--seed", sim_seed, "Master seed");
  sim_flags.attach(*simulate);

  // train
  auto* train = app.add_subcommand("train", "Fit a survival model");
  std::string train_data, train_out;
  std::optional<std::string> train_val, train_config_path, train_grid_path;
  double val_fraction = 0.15;
  std::uint64_t train_seed = 0;
  TrainFlags train_flags;
  train->add_option("--data", train_data, "Cohort JSONL")->required();
  train->add_option("--val", train_val, "Validation cohort JSONL (default: split --data)");
  train->add_option("--val-fraction", val_fraction, "Validation share when splitting --data");
  train->add_option("--out", train_out, "Checkpoint output")->required();
  train->add_option("--config", train_config_path, "Training config JSON");
  train->add_option("--grid", train_grid_path, "Grid JSON; enables grid search");
  train->add_option("--seed", train_seed);
  train_flags.attach(*train);

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Censored MAE of a fitted model");
  std::string eval_data, eval_model;
  std::optional<std::string> eval_curves;
  evaluate->add_option("--data", eval_data, "Cohort JSONL")->required();
  evaluate->add_option("--model", eval_model, "Checkpoint")->required();
  evaluate->add_option("--curves", eval_curves, "Write survival curve CSVs with this prefix");

  // estimate-ate
  auto* estimate = app.add_subcommand("estimate-ate", "Treatment effect on restricted mean survival");
  std::string ate_data, ate_methods = "unadjusted,or,ipw,aipw", ate_taus = "8,12,16";
  std::string ate_out = "ate_report.json";
  std::optional<std::string> ate_oracle, ate_model;
  std::string ate_features = "1,2,3";
  double ate_clip = 0.01;
  std::uint64_t ate_seed = 0;
  estimate->add_option("--data", ate_data, "Cohort JSONL")->required();
  estimate->add_option("--oracle", ate_oracle, "Oracle JSONL (adds true effect and bias)");
  estimate->add_option("--model", ate_model, "Outcome model checkpoint (or, aipw)");
  estimate->add_option("--methods", ate_methods, "Comma-separated: unadjusted,or,ipw,aipw");
  estimate->add_option("--tau", ate_taus, "Comma-separated cutoffs");
  estimate->add_option("--out", ate_out, "Report JSON");
  estimate->add_option("--propensity-features", ate_features,
                       "Comma-separated static feature indices");
  estimate->add_option("--clip", ate_clip, "Propensity clipping level");
  estimate->add_option("--seed", ate_seed, "Cross-validation fold seed");

  // experiment
  auto* experiment = app.add_subcommand("experiment", "Replicated experiments");
  std::string exp_kind;
  bool exp_smoke = false;
  std::optional<std::string> exp_preset, exp_config_path, exp_out;
  std::optional<std::uint64_t> exp_seed;
  std::optional<std::size_t> exp_budget, exp_seeds;
  SimFlags exp_sim_flags;
  TrainFlags exp_train_flags;
  experiment->add_option("kind", exp_kind, "predict or causal")
      ->required()
      ->check(CLI::IsMember({"predict", "causal"}));
  experiment->add_flag("--smoke", exp_smoke, "n = 1000, 2 seeds, one grid cell, self-checks");
  experiment->add_option("--preset", exp_preset, "smoke, desk (default) or full");
  experiment->add_option("--config", exp_config_path, "Experiment config JSON");
  experiment->add_option("--seed", exp_seed, "Master seed");
  experiment->add_option("--budget", exp_budget, "Cap on grid cells");
  experiment->add_option("--seeds", exp_seeds, "Number of replicates");
  experiment->add_option("--out", exp_out, "Report JSON");
  exp_sim_flags.attach(*experiment);
  exp_train_flags.attach(*experiment);

  // gradcheck
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  std::uint64_t gc_seed = 0;
  gradcheck->add_option("--seed", gc_seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitBadInput;
  }

  try {
    if (*simulate) {
      dynst::sim::SimConfig config;
      if (sim_config_path) config = read_json_file(*sim_config_path).get<dynst::sim::SimConfig>();
      sim_flags.apply_to(config);
      config.seed = sim_seed;
      const auto data = dynst::sim::generate_dataset(config);
      const auto out_path = output_path(sim_out);
      const auto oracle_path = output_path(sim_oracle);
      {
        auto out = open_output(out_path);
        dynst::write_cohort_jsonl(out, data.cohort);
        auto oracle = open_output(oracle_path);
        dynst::sim::write_oracle_jsonl(oracle, data.oracle);
      }
      json summary{{"summary", data.summary},
                   {"coefficients", data.coefficients},
                   {"config", config},
                   {"data", out_path.string()},
                   {"oracle", oracle_path.string()}};
      std::cout << summary.dump(2) << '\n';
      return 0;
    }

    if (*train) {
      dynst::pipeline::TrainConfig config;
      if (train_config_path)
        config = read_json_file(*train_config_path).get<dynst::pipeline::TrainConfig>();
      train_flags.apply_to(config);
      config.seed = train_seed;
      const auto cohort = load_cohort(train_data);
      dynst::Cohort train_set, val_set;
      if (train_val) {
        train_set = cohort;
        val_set = load_cohort(*train_val);
      } else {
        const dynst::pipeline::SplitRatios ratios{1.0 - val_fraction, val_fraction, 0.0};
        const auto idx = dynst::pipeline::split(cohort.size(), ratios, train_seed);
        train_set = dynst::subset(cohort, idx.train);
        val_set = dynst::subset(cohort, idx.val);
      }
      json report;
      std::unique_ptr<dynst::model::SurvivalModel> fitted;
      if (train_grid_path) {
        const auto grid = read_json_file(*train_grid_path).get<dynst::pipeline::GridSpec>();
        auto result = dynst::pipeline::grid_search(grid, config, train_set, val_set);
        json cells = json::array();
        for (const auto& c : result.cells)
          cells.push_back({{"config", c.config}, {"val_mae", c.val_mae}, {"best_epoch", c.best_epoch}});
        report = {{"selected", result.best_config},
                  {"val_mae", result.best.best_val_mae},
                  {"cells", cells}};
        fitted = std::move(result.best.model);
      } else {
        auto result = dynst::pipeline::train(config, train_set, val_set);
        json history = json::array();
        for (const auto& h : result.history)
          history.push_back(
              {{"epoch", h.epoch}, {"train_loss", h.train_loss}, {"val_mae", h.val_mae}});
        report = {{"config", config},
                  {"best_epoch", result.best_epoch},
                  {"val_mae", result.best_val_mae},
                  {"history", history}};
        fitted = std::move(result.model);
      }
      const auto out_path = output_path(train_out);
      if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
      dynst::model::save_model(out_path, *fitted);
      report["checkpoint"] = out_path.string();
      std::cout << report.dump(2) << '\n';
      return 0;
    }

    if (*evaluate) {
      const auto cohort = load_cohort(eval_data);
      const auto model = dynst::model::load_model(eval_model);
      json report{{"n", cohort.size()},
                  {"mae", dynst::pipeline::evaluate_mae(*model, cohort)},
                  {"kind", dynst::model::to_string(model->kind())}};
      if (eval_curves) {
        json files = json::array();
        for (const auto& p : dynst::pipeline::emit_curves(*model, cohort, output_path(*eval_curves)))
          files.push_back(p.string());
        report["curves"] = files;
      }
      std::cout << report.dump(2) << '\n';
      return 0;
    }

    if (*estimate) {
      const auto cohort = load_cohort(ate_data);
      const auto taus = parse_int_list(ate_taus);
      const auto methods = parse_name_list(ate_methods);
      std::optional<std::vector<dynst::sim::OracleRecord>> oracle;
      if (ate_oracle) {
        auto in = open_input(*ate_oracle);
        oracle = dynst::sim::read_oracle_jsonl(in);
        if (oracle->size() != cohort.size())
          throw dynst::FormatError("oracle and cohort sizes differ");
      }
      std::unique_ptr<dynst::model::SurvivalModel> outcome_model;
      std::optional<dynst::causal::CounterfactualCurves> curves;
      std::optional<std::vector<double>> pi;
      for (const auto& m : methods) {
        if (m != "unadjusted" && m != "or" && m != "ipw" && m != "aipw")
          throw dynst::ConfigError("unknown method '" + m + "'");
        if ((m == "or" || m == "aipw") && !curves) {
          if (!ate_model) throw dynst::ConfigError("method '" + m + "' needs --model");
          outcome_model = dynst::model::load_model(*ate_model);
          curves = dynst::causal::FittedOutcomeModel(*outcome_model).counterfactual_curves(cohort);
        }
        if ((m == "ipw" || m == "aipw") && !pi) {
          dynst::causal::PropensityOptions popts;
          popts.features.clear();
          for (int f : parse_int_list(ate_features)) {
            if (f < 0) throw dynst::ConfigError("negative propensity feature index");
            popts.features.push_back(static_cast<std::size_t>(f));
          }
          popts.clip = ate_clip;
          popts.seed = ate_seed;
          const auto model = dynst::causal::fit_propensity(cohort, popts);
          if (model.separation_detected())
            std::cerr << "warning: treatment is separable by the propensity features; "
                         "using the strongest penalty\n";
          pi = model.predict(cohort);
        }
      }
      json report = json::array();
      for (int tau : taus) {
        std::optional<double> truth;
        if (oracle) truth = dynst::sim::true_ate(*oracle, tau);
        for (const auto& m : methods) {
          double value = 0.0;
          if (m == "unadjusted") value = dynst::causal::unadjusted_difference(cohort, tau);
          if (m == "or") value = dynst::causal::or_estimate(*curves, tau);
          if (m == "ipw") value = dynst::causal::ipw_estimate(cohort, *pi, tau, ate_clip);
          if (m == "aipw") value = dynst::causal::aipw_estimate(cohort, *pi, *curves, tau, ate_clip);
          report.push_back(dynst::causal::AteEstimate{m, tau, value, truth});
        }
      }
      const auto out_path = output_path(ate_out);
      auto out = open_output(out_path);
      out << report.dump(2) << '\n';
      std::cout << out_path.string() << '\n';
      return 0;
    }

    if (*experiment) {
      std::string preset = exp_preset.value_or(exp_smoke ? "smoke" : "desk");
      if (exp_smoke && preset != "smoke")
        throw dynst::ConfigError("--smoke conflicts with --preset " + preset);
      auto config = dynst::pipeline::preset_config(preset);
      if (exp_config_path) from_json(read_json_file(*exp_config_path), config);
      exp_sim_flags.apply_to(config.sim);
      exp_train_flags.apply_to(config.base);
      override_with(exp_seed, config.seed);
      override_with(exp_seeds, config.n_seeds);
      if (exp_budget) config.grid.budget = *exp_budget;

      const auto start = std::chrono::steady_clock::now();
      const auto report = exp_kind == "predict"
                              ? dynst::pipeline::run_prediction_experiment(config)
                              : dynst::pipeline::run_causal_experiment(config);
      const double seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      const auto out_path = output_path(exp_out.value_or(exp_kind + "_report.json"));
      {
        auto out = open_output(out_path);
        out << json(report).dump(2) << '\n';
      }
      write_meta(out_path, seconds, {{"experiment", exp_kind}, {"preset", preset}});
      print_checks(report.checks);
      std::cout << out_path.string() << '\n';
      return report.passed() ? 0 : kExitCheckFailed;
    }

    if (*gradcheck) {
      const auto results = dynst::pipeline::gradient_checks(gc_seed);
      print_checks(results);
      bool ok = true;
      for (const auto& r : results) ok = ok && r.passed;
      std::cout << json(results).dump(2) << '\n';
      return ok ? 0 : kExitCheckFailed;
    }
  } catch (const dynst::pipeline::TrainingDivergence& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitCheckFailed;
  } catch (const dynst::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitBadInput;
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitBadInput;
  }
  return 0;
}
