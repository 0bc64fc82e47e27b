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
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "dynst/data/cohort.hpp"
#include "dynst/error.hpp"
#include "dynst/model/survival_model.hpp"

namespace dynst::pipeline {

struct SplitRatios {
  double train = 0.7;
  double val = 0.15;
  double test = 0.15;

  void validate() const;
};

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

// Seeded random partition of 0..n-1. Train and validation sizes are
// floor(ratio * n); the test set takes the remainder.
SplitIndices split(std::size_t n, const SplitRatios& ratios, std::uint64_t seed);

struct TrainConfig {
  model::ModelKind kind = model::ModelKind::kDynst;
  std::size_t d_model = 32;
  std::size_t n_layers = 2;
  std::size_t n_heads = 8;
  std::size_t batch_size = 32;
  double alpha = 0.0;
  std::size_t epochs = 5;
  double dropout = 0.1;
  // Unset: 1e-3 for the transformer models, 1e-2 for the linear baseline.
  std::optional<double> lr;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;

  double learning_rate() const;
  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
// Missing keys keep their defaults.
void from_json(const nlohmann::json& j, TrainConfig& c);

// Fresh model for the cohort layout, initialized from config.seed.
std::unique_ptr<model::SurvivalModel> make_model(const TrainConfig& config,
                                                 const Cohort& layout);

// Censored MAE of the expected survival time sum_t S_hat(t).
double evaluate_mae(const model::SurvivalModel& model, const Cohort& cohort);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // mean per patient
  double val_mae = 0.0;
};

struct TrainResult {
  std::unique_ptr<model::SurvivalModel> model;
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;  // 0: untrained initialization
  double best_val_mae = 0.0;
};

// Raised when the loss or a parameter becomes non-finite.
class TrainingDivergence : public Error {
 public:
  using Error::Error;
};

// Minibatch Adam on the summed loss, reshuffling every epoch. After each
// epoch the validation MAE is computed and the best epoch's parameters are
// kept. With zero epochs the initialized model is returned.
TrainResult train(const TrainConfig& config, const Cohort& train_set, const Cohort& val_set);

struct GridSpec {
  std::vector<std::size_t> d_model{32, 48, 64};
  std::vector<std::size_t> n_layers{2, 3, 4};
  std::vector<std::size_t> batch_size{16, 32};
  std::vector<double> alpha{0.0, 0.1, 0.2};
  // Caps the number of cells (in enumeration order); 0 means no cap.
  std::size_t budget = 0;

  // Distinct cells in ascending (d_model, n_layers, batch_size, alpha) order.
  // The linear baseline ignores d_model and n_layers and keeps the base
  // values for them.
  std::vector<TrainConfig> cells(const TrainConfig& base) const;
};

void to_json(nlohmann::json& j, const GridSpec& g);
void from_json(const nlohmann::json& j, GridSpec& g);

struct GridCellResult {
  TrainConfig config;
  double val_mae = 0.0;
  std::size_t best_epoch = 0;
};

struct GridSearchResult {
  TrainResult best;
  TrainConfig best_config;
  std::vector<GridCellResult> cells;
};

// Trains every cell and keeps the lowest validation MAE; ties go to the
// smaller d_model, then the smaller n_layers.
GridSearchResult grid_search(const GridSpec& grid, const TrainConfig& base,
                             const Cohort& train_set, const Cohort& val_set);

}  // namespace dynst::pipeline
