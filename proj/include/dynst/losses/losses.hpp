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

// Censoring-aware training objective.
//
// For patient i with observed time O and event indicator delta, and predicted
// survival S_hat(t) = prod_{u<=t} q_hat(u):
//
//   L1 = -[sum_{t<O} log S_hat(t) + sum_{t>=O} log(1 - S_hat(t))]   delta = 1
//   L1 = -sum_{t<=O} log S_hat(t)                                  delta = 0
//   L2 = |O - T_hat| * delta + max(0, O - T_hat) * (1 - delta)
//   L  = sum_i (1 - alpha) * L1_i + alpha * L2_i
//
// with T_hat = sum_t S_hat(t). Sums over empty ranges are zero.

#pragma once

#include <span>

#include "dynst/autodiff/tensor.hpp"
#include "dynst/data/cohort.hpp"

namespace dynst::losses {

// Clamp applied to S_hat and 1 - S_hat before taking logs.
inline constexpr double kLogClamp = 1e-12;

struct LossConfig {
  double alpha = 0.0;
  void validate() const;
};

// S_hat [batch, t_max] from q_hat [batch, t_max], computed as
// exp(cumsum(log q_hat)).
ad::Tensor survival_from_complement(const ad::Tensor& q_hat);

// Per-patient cross-entropy term, shape [batch]. Throws DomainError if any
// observed time lies outside 1..t_max.
ad::Tensor loss_l1(const ad::Tensor& s_hat, std::span<const int> observed_time,
                   std::span<const int> event);

// Per-patient censored absolute error of T_hat, shape [batch].
ad::Tensor loss_l2(const ad::Tensor& s_hat, std::span<const int> observed_time,
                   std::span<const int> event);

struct LossTerms {
  ad::Tensor total;  // scalar
  ad::Tensor l1;     // [batch]
  ad::Tensor l2;     // [batch]
};

LossTerms loss_terms(const ad::Tensor& q_hat, const Batch& batch,
                     const LossConfig& config);

// Scalar objective summed (not averaged) over the batch.
ad::Tensor total_loss(const ad::Tensor& q_hat, const Batch& batch,
                      const LossConfig& config);

}  // namespace dynst::losses
