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

#include "dynst/model/survival_model.hpp"

#include <algorithm>
#include <numeric>

#include "dynst/autodiff/ops.hpp"
#include "dynst/error.hpp"
#include "dynst/model/dynst_model.hpp"
#include "dynst/model/linear_baseline.hpp"

namespace dynst::model {

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::kDynst:
      return "dynst";
    case ModelKind::kStaticSt:
      return "static_st";
    case ModelKind::kLinear:
      return "linear";
  }
  return "unknown";
}

ModelKind parse_model_kind(const std::string& name) {
  if (name == "dynst") return ModelKind::kDynst;
  if (name == "static_st" || name == "static") return ModelKind::kStaticSt;
  if (name == "linear") return ModelKind::kLinear;
  throw ConfigError("unknown model kind '" + name + "'");
}

std::vector<ad::Tensor> SurvivalModel::parameters() const {
  std::vector<ad::Tensor> out;
  for (auto& nt : named_parameters()) out.push_back(nt.tensor);
  return out;
}

std::size_t SurvivalModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& nt : named_parameters()) n += nt.tensor.size();
  return n;
}

SurvivalPredictions predict_survival(const SurvivalModel& model,
                                     const Cohort& cohort,
                                     std::optional<int> forced_treatment,
                                     std::size_t chunk) {
  if (chunk == 0) throw ConfigError("predict_survival: chunk must be positive");
  ad::NoGradGuard no_grad;
  SurvivalPredictions out;
  out.n = cohort.size();
  out.t_max = model.t_max();
  out.values.resize(out.n * out.t_max);
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < out.n; start += chunk) {
    const std::size_t stop = std::min(out.n, start + chunk);
    idx.resize(stop - start);
    std::iota(idx.begin(), idx.end(), start);
    const Batch batch = make_batch(cohort, idx, forced_treatment);
    const ad::Tensor q_hat = model.forward(batch, ForwardMode{});
    const auto q = q_hat.data();
    for (std::size_t i = 0; i < idx.size(); ++i) {
      double s = 1.0;
      for (std::size_t t = 0; t < out.t_max; ++t) {
        s *= q[i * out.t_max + t];
        out.values[(start + i) * out.t_max + t] = s;
      }
    }
  }
  return out;
}

std::vector<double> predict_expected_time(const SurvivalModel& model,
                                          const Cohort& cohort) {
  const SurvivalPredictions pred = predict_survival(model, cohort);
  std::vector<double> out(pred.n);
  for (std::size_t i = 0; i < pred.n; ++i) {
    const auto row = pred.row(i);
    out[i] = std::accumulate(row.begin(), row.end(), 0.0);
  }
  return out;
}

void save_model(const std::filesystem::path& path, const SurvivalModel& model) {
  const nlohmann::json header = {{"kind", to_string(model.kind())},
                                 {"config", model.config_json()}};
  ad::save_checkpoint(path, header, model.named_parameters());
}

std::unique_ptr<SurvivalModel> model_from_checkpoint(const ad::Checkpoint& ckpt) {
  std::unique_ptr<SurvivalModel> model;
  try {
    const ModelKind kind = parse_model_kind(ckpt.header.at("kind").get<std::string>());
    const auto& cfg = ckpt.header.at("config");
    if (kind == ModelKind::kLinear) {
      model = std::make_unique<LinearBaseline>(
          cfg.at("p_static").get<std::size_t>(), cfg.at("t_max").get<std::size_t>(),
          cfg.value("intercept_init", 3.0));
    } else {
      model = std::make_unique<DynstModel>(cfg.get<ModelConfig>(), 0);
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what());
  }
  ad::restore_parameters(ckpt, model->named_parameters());
  return model;
}

std::unique_ptr<SurvivalModel> load_model(const std::filesystem::path& path) {
  return model_from_checkpoint(ad::load_checkpoint(path));
}

}  // namespace dynst::model
