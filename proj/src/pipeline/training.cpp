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

#include "dynst/pipeline/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "dynst/autodiff/adam.hpp"
#include "dynst/losses/losses.hpp"
#include "dynst/model/dynst_model.hpp"
#include "dynst/model/linear_baseline.hpp"
#include "dynst/survival/survival_math.hpp"

namespace dynst::pipeline {
namespace {

std::mt19937_64 derived_rng(std::uint64_t seed, std::uint32_t purpose) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    purpose};
  return std::mt19937_64(seq);
}

constexpr std::uint32_t kInitStream = 1;
constexpr std::uint32_t kDropoutStream = 2;
constexpr std::uint32_t kShuffleStream = 3;
constexpr std::uint32_t kSplitStream = 4;

std::string parameter_norms(const model::SurvivalModel& m) {
  std::ostringstream out;
  bool first = true;
  for (const auto& [name, tensor] : m.named_parameters()) {
    double sq = 0.0;
    for (double v : tensor.data()) sq += v * v;
    out << (first ? "" : ", ") << name << "=" << std::sqrt(sq);
    first = false;
  }
  return out.str();
}

bool parameters_finite(const model::SurvivalModel& m) {
  for (const auto& p : m.parameters())
    for (double v : p.data())
      if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace

void SplitRatios::validate() const {
  if (!(train >= 0 && val >= 0 && test >= 0))
    throw ConfigError("split ratios must be non-negative");
  if (std::abs(train + val + test - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");
}

SplitIndices split(std::size_t n, const SplitRatios& ratios, std::uint64_t seed) {
  ratios.validate();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto rng = derived_rng(seed, kSplitStream);
  std::shuffle(order.begin(), order.end(), rng);
  // The epsilon absorbs representation error, e.g. 0.7 * 1000 = 699.999...
  const auto n_train = static_cast<std::size_t>(std::floor(ratios.train * n + 1e-9));
  const auto n_val =
      std::min(n - n_train, static_cast<std::size_t>(std::floor(ratios.val * n + 1e-9)));
  SplitIndices out;
  out.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                 order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  out.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
  if (ratios.test == 0.0 && !out.test.empty()) {
    // Rounding leftovers go to training when no test set is requested.
    out.train.insert(out.train.end(), out.test.begin(), out.test.end());
    out.test.clear();
  }
  return out;
}

double TrainConfig::learning_rate() const {
  if (lr) return *lr;
  return kind == model::ModelKind::kLinear ? 1e-2 : 1e-3;
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0,1]");
  if (!(learning_rate() > 0.0)) throw ConfigError("learning rate must be positive");
  if (kind != model::ModelKind::kLinear) {
    if (d_model == 0 || n_layers == 0 || n_heads == 0 || d_model % n_heads != 0)
      throw ConfigError("d_model must be a positive multiple of n_heads");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0,1)");
  }
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"kind", model::to_string(c.kind)},
                     {"d_model", c.d_model},
                     {"n_layers", c.n_layers},
                     {"n_heads", c.n_heads},
                     {"batch_size", c.batch_size},
                     {"alpha", c.alpha},
                     {"epochs", c.epochs},
                     {"dropout", c.dropout},
                     {"lr", c.learning_rate()},
                     {"beta1", c.beta1},
                     {"beta2", c.beta2},
                     {"adam_eps", c.adam_eps},
                     {"weight_decay", c.weight_decay},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  if (j.contains("kind")) c.kind = model::parse_model_kind(j.at("kind").get<std::string>());
  get("d_model", c.d_model);
  get("n_layers", c.n_layers);
  get("n_heads", c.n_heads);
  get("batch_size", c.batch_size);
  get("alpha", c.alpha);
  get("epochs", c.epochs);
  get("dropout", c.dropout);
  if (j.contains("lr")) c.lr = j.at("lr").get<double>();
  get("beta1", c.beta1);
  get("beta2", c.beta2);
  get("adam_eps", c.adam_eps);
  get("weight_decay", c.weight_decay);
  get("seed", c.seed);
}

std::unique_ptr<model::SurvivalModel> make_model(const TrainConfig& config,
                                                 const Cohort& layout) {
  config.validate();
  auto rng = derived_rng(config.seed, kInitStream);
  const std::uint64_t init_seed = rng();
  if (config.kind == model::ModelKind::kLinear)
    return std::make_unique<model::LinearBaseline>(layout.static_width(), layout.t_max);
  model::ModelConfig mc;
  mc.d_model = config.d_model;
  mc.n_layers = config.n_layers;
  mc.n_heads = config.n_heads;
  mc.d_ff = 2 * config.d_model;
  mc.dropout = config.dropout;
  mc.t_max = layout.t_max;
  mc.p_static = layout.static_width();
  mc.q_temporal = config.kind == model::ModelKind::kStaticSt ? 0 : layout.q;
  return std::make_unique<model::DynstModel>(mc, init_seed);
}

double evaluate_mae(const model::SurvivalModel& model, const Cohort& cohort) {
  if (cohort.size() == 0) throw ContractError("evaluate_mae on an empty cohort");
  const auto predicted = model::predict_expected_time(model, cohort);
  std::vector<double> observed;
  std::vector<int> event;
  observed.reserve(cohort.size());
  event.reserve(cohort.size());
  for (const auto& p : cohort.patients) {
    observed.push_back(p.observed_time);
    event.push_back(p.event);
  }
  return survival::censored_mae(predicted, observed, event);
}

TrainResult train(const TrainConfig& config, const Cohort& train_set, const Cohort& val_set) {
  config.validate();
  if (train_set.size() == 0) throw ContractError("train: empty training set");
  if (val_set.size() == 0) throw ContractError("train: empty validation set");

  TrainResult result;
  auto current = make_model(config, train_set);
  result.best_val_mae = evaluate_mae(*current, val_set);
  if (config.epochs == 0) {
    result.model = std::move(current);
    return result;
  }

  ad::AdamOptions adam_options;
  adam_options.lr = config.learning_rate();
  adam_options.beta1 = config.beta1;
  adam_options.beta2 = config.beta2;
  adam_options.eps = config.adam_eps;
  adam_options.weight_decay = config.weight_decay;
  ad::Adam optimizer(current->parameters(), adam_options);

  auto dropout_rng = derived_rng(config.seed, kDropoutStream);
  auto shuffle_rng = derived_rng(config.seed, kShuffleStream);
  const losses::LossConfig loss_config{config.alpha};
  const model::ForwardMode mode{true, &dropout_rng};

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_index) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, stop - start);
      const Batch batch = make_batch(train_set, idx);
      try {
        optimizer.zero_grad();
        const auto loss = losses::total_loss(current->forward(batch, mode), batch, loss_config);
        ad::backward(loss);
        optimizer.step();
        epoch_loss += loss.item();
      } catch (const DomainError& e) {
        throw TrainingDivergence("training diverged in epoch " + std::to_string(epoch) +
                                 ", batch " + std::to_string(batch_index) + ": " + e.what() +
                                 "; parameter norms: " + parameter_norms(*current));
      }
      if (!parameters_finite(*current)) {
        throw TrainingDivergence("non-finite parameters after epoch " + std::to_string(epoch) +
                                 ", batch " + std::to_string(batch_index) +
                                 "; parameter norms: " + parameter_norms(*current));
      }
    }
    const double val_mae = evaluate_mae(*current, val_set);
    result.history.push_back(
        {epoch, epoch_loss / static_cast<double>(train_set.size()), val_mae});
    if (result.best_epoch == 0 || val_mae < result.best_val_mae) {
      result.best_epoch = epoch;
      result.best_val_mae = val_mae;
      result.model = current->clone();
    }
  }
  return result;
}

std::vector<TrainConfig> GridSpec::cells(const TrainConfig& base) const {
  auto sorted_unique = [](auto values) {
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());
    return values;
  };
  const bool linear = base.kind == model::ModelKind::kLinear;
  const auto ds = linear ? std::vector<std::size_t>{base.d_model} : sorted_unique(d_model);
  const auto ms = linear ? std::vector<std::size_t>{base.n_layers} : sorted_unique(n_layers);
  const auto bs = sorted_unique(batch_size);
  const auto as = sorted_unique(alpha);
  std::vector<TrainConfig> out;
  for (std::size_t d : ds) {
    for (std::size_t m : ms) {
      for (std::size_t b : bs) {
        for (double a : as) {
          TrainConfig c = base;
          c.d_model = d;
          c.n_layers = m;
          c.batch_size = b;
          c.alpha = a;
          out.push_back(c);
          if (budget != 0 && out.size() == budget) return out;
        }
      }
    }
  }
  return out;
}

void to_json(nlohmann::json& j, const GridSpec& g) {
  j = nlohmann::json{{"d_model", g.d_model},
                     {"n_layers", g.n_layers},
                     {"batch_size", g.batch_size},
                     {"alpha", g.alpha},
                     {"budget", g.budget}};
}

void from_json(const nlohmann::json& j, GridSpec& g) {
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("d_model", g.d_model);
  get("n_layers", g.n_layers);
  get("batch_size", g.batch_size);
  get("alpha", g.alpha);
  get("budget", g.budget);
}

GridSearchResult grid_search(const GridSpec& grid, const TrainConfig& base,
                             const Cohort& train_set, const Cohort& val_set) {
  const auto cells = grid.cells(base);
  if (cells.empty()) throw ConfigError("grid_search: the grid has no cells");
  GridSearchResult out;
  bool have_best = false;
  for (const auto& cell : cells) {
    TrainResult fitted = train(cell, train_set, val_set);
    out.cells.push_back({cell, fitted.best_val_mae, fitted.best_epoch});
    if (!have_best || fitted.best_val_mae < out.best.best_val_mae) {
      have_best = true;
      out.best = std::move(fitted);
      out.best_config = cell;
    }
  }
  return out;
}

}  // namespace dynst::pipeline
