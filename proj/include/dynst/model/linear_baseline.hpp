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

#include "json.hpp"

#include "dynst/model/survival_model.hpp"

namespace dynst::model {

// Discrete-time logistic hazard model q_hat(t) = sigmoid(w . z + b_t) with one
// intercept per time step. Temporal features are ignored, and so is any
// time-by-covariate interaction; it serves as a deliberately misspecified
// outcome model.
class LinearBaseline final : public SurvivalModel {
 public:
  LinearBaseline(std::size_t p_static, std::size_t t_max,
                 double intercept_init = 3.0);

  ModelKind kind() const override { return ModelKind::kLinear; }
  std::size_t t_max() const override { return t_max_; }
  ad::Tensor forward(const Batch& batch, const ForwardMode& mode) const override;
  std::vector<ad::NamedTensor> named_parameters() const override;
  nlohmann::json config_json() const override;
  std::unique_ptr<SurvivalModel> clone() const override;

  ad::Tensor& weights() { return w_; }
  ad::Tensor& intercepts() { return b_; }

 private:
  std::size_t p_static_;
  std::size_t t_max_;
  double intercept_init_;
  ad::Tensor w_;
  ad::Tensor b_;
};

// Convenience wrapper matching the other forward entry points.
ad::Tensor linear_baseline_forward(const Batch& batch, const LinearBaseline& model);

}  // namespace dynst::model
