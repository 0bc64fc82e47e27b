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
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "dynst/causal/estimators.hpp"
#include "dynst/causal/propensity.hpp"
#include "dynst/pipeline/diagnostics.hpp"
#include "dynst/pipeline/training.hpp"
#include "dynst/sim/simulator.hpp"

namespace dynst::pipeline {

struct ExperimentConfig {
  std::string preset = "desk";
  sim::SimConfig sim;  // sim.seed is replaced by each replicate's seed
  std::size_t n_seeds = 6;
  std::uint64_t seed = 0;
  GridSpec grid;
  TrainConfig base;  // kind and seed are set per run
  SplitRatios prediction_split{0.7, 0.15, 0.15};
  SplitRatios causal_split{0.8, 0.2, 0.0};
  std::vector<int> taus{8, 12, 16};
  causal::PropensityOptions propensity;
  // Smoke mode runs the self-checks and skips the ordering checks.
  bool smoke = false;
  std::size_t causality_patients = 100;

  void validate() const;
};

void to_json(nlohmann::json& j, const ExperimentConfig& c);
// Missing keys keep their defaults.
void from_json(const nlohmann::json& j, ExperimentConfig& c);

// "smoke": n = 1000, 2 seeds, one grid cell, self-checks.
// "desk": n = 5000, 6 seeds, reduced grid.
// "full": n = 5000, 6 seeds, the complete grid.
ExperimentConfig preset_config(std::string_view name);

// Seed of replicate k, derived from the master seed.
std::uint64_t replicate_seed(std::uint64_t master, std::size_t k);

struct MeanSd {
  double mean = 0.0;
  std::optional<double> sd;  // sample SD, present with >= 2 values
};
MeanSd summarize(std::span<const double> values);

struct ModelResult {
  model::ModelKind kind{};
  std::vector<double> test_mae;
  std::vector<double> val_mae;
  std::vector<TrainConfig> selected;
  std::vector<std::size_t> best_epoch;
  MeanSd summary;
};

struct ReplicateEstimates {
  std::uint64_t seed = 0;
  sim::SimSummary simulation;
  double propensity_penalty = 0.0;
  bool propensity_separation = false;
  TrainConfig dynst_config;
  TrainConfig linear_config;
  std::vector<causal::AteEstimate> estimates;
};

struct BiasSummary {
  std::string method;
  int tau = 0;
  MeanSd bias;
  double mean_abs_bias = 0.0;
};

struct ExperimentReport {
  std::string experiment;  // "predict" or "causal"
  ExperimentConfig config;
  std::vector<std::uint64_t> seeds;
  std::vector<ModelResult> models;            // predict
  std::vector<ReplicateEstimates> replicates;  // causal
  std::vector<BiasSummary> bias_table;         // causal
  std::vector<CheckResult> checks;

  bool passed() const;
};

void to_json(nlohmann::json& j, const ExperimentReport& r);

// Called whenever the driver reads a split; `split` is "train", "val" or
// "test". Lets tests verify that test data are only read for final scoring.
using AccessObserver = std::function<void(std::size_t replicate, std::string_view split)>;

// For each replicate: simulate, split 70/15/15, grid-search DynST, the static
// variant and the linear baseline on validation MAE, and score on the test
// set.
ExperimentReport run_prediction_experiment(const ExperimentConfig& config,
                                           const AccessObserver& observer = {});

// For each replicate: simulate with oracle, split 80/20 for model selection,
// fit outcome models and the propensity model, and compare every estimator
// with the true effect at each cutoff.
ExperimentReport run_causal_experiment(const ExperimentConfig& config,
                                       const AccessObserver& observer = {});

// Writes <prefix>_patients.csv (id, t, s) and <prefix>_mean.csv (t, s) with
// predicted survival curves. Returns the two paths.
std::vector<std::filesystem::path> emit_curves(const model::SurvivalModel& model,
                                               const Cohort& cohort,
                                               const std::filesystem::path& prefix);

}  // namespace dynst::pipeline
