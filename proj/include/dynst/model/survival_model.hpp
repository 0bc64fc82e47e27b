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
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "dynst/autodiff/checkpoint.hpp"
#include "dynst/autodiff/tensor.hpp"
#include "dynst/data/cohort.hpp"

namespace dynst::model {

enum class ModelKind { kDynst, kStaticSt, kLinear };

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& name);

struct ForwardMode {
  bool train = false;
  // Required in train mode (dropout).
  std::mt19937_64* rng = nullptr;
};

// A discrete-time hazard model: maps a batch to q_hat(t) = 1 - h_hat(t) for
// t = 1..t_max, shape [batch, t_max], every entry strictly inside (0,1).
class SurvivalModel {
 public:
  virtual ~SurvivalModel() = default;

  virtual ModelKind kind() const = 0;
  virtual std::size_t t_max() const = 0;
  virtual ad::Tensor forward(const Batch& batch, const ForwardMode& mode) const = 0;
  virtual std::vector<ad::NamedTensor> named_parameters() const = 0;
  virtual nlohmann::json config_json() const = 0;
  // Deep copy with independent parameter storage.
  virtual std::unique_ptr<SurvivalModel> clone() const = 0;

  std::vector<ad::Tensor> parameters() const;
  std::size_t parameter_count() const;
};

// Predicted survival curves S_hat(t) = prod_{u<=t} q_hat(u), row-major
// [n x t_max].
struct SurvivalPredictions {
  std::size_t n = 0;
  std::size_t t_max = 0;
  std::vector<double> values;

  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(values).subspan(i * t_max, t_max);
  }
};

// Inference without graph recording, in chunks of `chunk` patients. Safe to
// call concurrently on a shared model.
SurvivalPredictions predict_survival(const SurvivalModel& model,
                                     const Cohort& cohort,
                                     std::optional<int> forced_treatment = std::nullopt,
                                     std::size_t chunk = 128);

// Expected survival time sum_t S_hat(t) per patient.
std::vector<double> predict_expected_time(const SurvivalModel& model,
                                          const Cohort& cohort);

void save_model(const std::filesystem::path& path, const SurvivalModel& model);
std::unique_ptr<SurvivalModel> load_model(const std::filesystem::path& path);
std::unique_ptr<SurvivalModel> model_from_checkpoint(const ad::Checkpoint& ckpt);

}  // namespace dynst::model
