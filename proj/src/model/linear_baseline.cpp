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

#include "dynst/model/linear_baseline.hpp"

#include <string>

#include "dynst/autodiff/ops.hpp"
#include "dynst/error.hpp"

namespace dynst::model {

LinearBaseline::LinearBaseline(std::size_t p_static, std::size_t t_max,
                               double intercept_init)
    : p_static_(p_static), t_max_(t_max), intercept_init_(intercept_init) {
  if (p_static_ == 0 || t_max_ == 0) {
    throw ConfigError("linear baseline: p_static and t_max must be positive");
  }
  w_ = ad::Tensor::parameter({p_static_, 1}, std::vector<double>(p_static_, 0.0));
  b_ = ad::Tensor::parameter({t_max_}, std::vector<double>(t_max_, intercept_init_));
}

ad::Tensor LinearBaseline::forward(const Batch& batch, const ForwardMode&) const {
  if (batch.p != p_static_ || batch.t_max != t_max_) {
    throw ShapeError("linear baseline: batch is [p=" + std::to_string(batch.p) +
                     ", t_max=" + std::to_string(batch.t_max) + "], model is [p=" +
                     std::to_string(p_static_) + ", t_max=" + std::to_string(t_max_) +
                     "]");
  }
  if (batch.size == 0) throw ShapeError("linear baseline: empty batch");
  const auto z = ad::Tensor::constant({batch.size, p_static_}, batch.static_features);
  const auto score = ad::matmul(z, w_);  // [batch, 1]
  return ad::sigmoid(ad::add(score, b_));
}

std::vector<ad::NamedTensor> LinearBaseline::named_parameters() const {
  return {{"linear.weight", w_}, {"linear.intercepts", b_}};
}

nlohmann::json LinearBaseline::config_json() const {
  return {{"p_static", p_static_}, {"t_max", t_max_},
          {"intercept_init", intercept_init_}};
}

std::unique_ptr<SurvivalModel> LinearBaseline::clone() const {
  auto copy = std::make_unique<LinearBaseline>(p_static_, t_max_, intercept_init_);
  std::copy(w_.data().begin(), w_.data().end(), copy->w_.mutable_data().begin());
  std::copy(b_.data().begin(), b_.data().end(), copy->b_.mutable_data().begin());
  return copy;
}

ad::Tensor linear_baseline_forward(const Batch& batch, const LinearBaseline& model) {
  return model.forward(batch, ForwardMode{});
}

}  // namespace dynst::model
