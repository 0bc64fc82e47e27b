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

#include "dynst/losses/losses.hpp"

#include <string>
#include <vector>

#include "dynst/autodiff/ops.hpp"
#include "dynst/error.hpp"

namespace dynst::losses {

namespace {

void check_outcomes(const ad::Tensor& s_hat, std::span<const int> observed_time,
                    std::span<const int> event, const char* op) {
  if (s_hat.rank() != 2 || s_hat.dim(0) != observed_time.size() ||
      observed_time.size() != event.size()) {
    throw ShapeError(std::string(op) + ": curves " +
                     ad::shape_to_string(s_hat.shape()) + " vs " +
                     std::to_string(observed_time.size()) + " outcomes");
  }
  const int t_max = static_cast<int>(s_hat.dim(1));
  for (std::size_t i = 0; i < observed_time.size(); ++i) {
    if (observed_time[i] < 1 || observed_time[i] > t_max) {
      throw DomainError(std::string(op) + ": observed time " +
                        std::to_string(observed_time[i]) + " outside 1.." +
                        std::to_string(t_max));
    }
    if (event[i] != 0 && event[i] != 1) {
      throw DomainError(std::string(op) + ": event indicator must be 0 or 1");
    }
  }
}

}  // namespace

void LossConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw ConfigError("loss: alpha must lie in [0,1], got " + std::to_string(alpha));
  }
}

ad::Tensor survival_from_complement(const ad::Tensor& q_hat) {
  const auto log_q = ad::log(ad::clamp(q_hat, kLogClamp, 1.0));
  return ad::exp(ad::cumsum(log_q, -1));
}

ad::Tensor loss_l1(const ad::Tensor& s_hat, std::span<const int> observed_time,
                   std::span<const int> event) {
  check_outcomes(s_hat, observed_time, event, "loss_l1");
  const std::size_t b = s_hat.dim(0), t_max = s_hat.dim(1);
  std::vector<double> survive(b * t_max, 0.0), fail(b * t_max, 0.0);
  for (std::size_t i = 0; i < b; ++i) {
    const auto o = static_cast<std::size_t>(observed_time[i]);
    for (std::size_t k = 0; k < t_max; ++k) {
      const std::size_t t = k + 1;
      if (event[i]) {
        (t < o ? survive : fail)[i * t_max + k] = 1.0;
      } else if (t <= o) {
        survive[i * t_max + k] = 1.0;
      }
    }
  }
  const auto log_s = ad::log(ad::clamp(s_hat, kLogClamp, 1.0 - kLogClamp));
  const auto log_f =
      ad::log(ad::clamp(ad::rsub_scalar(1.0, s_hat), kLogClamp, 1.0 - kLogClamp));
  const auto w_s = ad::Tensor::constant({b, t_max}, std::move(survive));
  const auto w_f = ad::Tensor::constant({b, t_max}, std::move(fail));
  const auto ll = ad::add(ad::sum(ad::mul(log_s, w_s), -1),
                          ad::sum(ad::mul(log_f, w_f), -1));
  return ad::scale(ll, -1.0);
}

ad::Tensor loss_l2(const ad::Tensor& s_hat, std::span<const int> observed_time,
                   std::span<const int> event) {
  check_outcomes(s_hat, observed_time, event, "loss_l2");
  const std::size_t b = s_hat.dim(0);
  std::vector<double> o(b), d(b), c(b);
  for (std::size_t i = 0; i < b; ++i) {
    o[i] = observed_time[i];
    d[i] = event[i];
    c[i] = 1.0 - event[i];
  }
  const auto t_hat = ad::sum(s_hat, -1);
  const auto diff = ad::sub(ad::Tensor::constant({b}, std::move(o)), t_hat);
  return ad::add(ad::mul(ad::abs(diff), ad::Tensor::constant({b}, std::move(d))),
                 ad::mul(ad::max_with_zero(diff), ad::Tensor::constant({b}, std::move(c))));
}

LossTerms loss_terms(const ad::Tensor& q_hat, const Batch& batch,
                     const LossConfig& config) {
  config.validate();
  const auto s_hat = survival_from_complement(q_hat);
  LossTerms terms;
  terms.l1 = loss_l1(s_hat, batch.observed_time, batch.event);
  terms.l2 = loss_l2(s_hat, batch.observed_time, batch.event);
  terms.total = ad::sum_all(ad::add(ad::scale(terms.l1, 1.0 - config.alpha),
                                    ad::scale(terms.l2, config.alpha)));
  return terms;
}

ad::Tensor total_loss(const ad::Tensor& q_hat, const Batch& batch,
                      const LossConfig& config) {
  return loss_terms(q_hat, batch, config).total;
}

}  // namespace dynst::losses
