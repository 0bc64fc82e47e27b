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

#include "dynst/pipeline/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "dynst/autodiff/gradcheck.hpp"
#include "dynst/autodiff/ops.hpp"
#include "dynst/error.hpp"
#include "dynst/losses/losses.hpp"
#include "dynst/model/dynst_model.hpp"
#include "dynst/survival/survival_math.hpp"

namespace dynst::pipeline {
namespace {

using ad::Shape;
using ad::Tensor;

constexpr double kPrimitiveTolerance = 1e-4;
constexpr double kEndToEndTolerance = 1e-3;

Tensor random_parameter(const Shape& shape, std::mt19937_64& rng, double lo = -1.0,
                        double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> values(ad::num_elements(shape));
  for (double& v : values) v = u(rng);
  return Tensor::parameter(shape, std::move(values));
}

// Values bounded away from zero so kinked functions stay differentiable.
Tensor signed_parameter(const Shape& shape, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.2, 1.0);
  std::bernoulli_distribution sign(0.5);
  std::vector<double> values(ad::num_elements(shape));
  for (double& v : values) v = sign(rng) ? u(rng) : -u(rng);
  return Tensor::parameter(shape, std::move(values));
}

// Random linear functional of `out`, so every output element matters.
Tensor project(const Tensor& out, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> w(out.size());
  for (double& v : w) v = u(rng);
  return ad::sum_all(ad::mul(out, Tensor::constant(out.shape(), std::move(w))));
}

struct Case {
  std::string name;
  std::vector<Tensor> leaves;
  std::function<Tensor(const std::vector<Tensor>&)> body;
};

std::vector<Case> primitive_cases(std::mt19937_64& rng) {
  std::vector<Case> cases;
  auto add_case = [&](std::string name, std::vector<Tensor> leaves, auto body) {
    cases.push_back({std::move(name), std::move(leaves), body});
  };
  add_case("add", {random_parameter({2, 3, 4}, rng), random_parameter({3, 1}, rng)},
           [](const auto& x) { return ad::add(x[0], x[1]); });
  add_case("sub", {random_parameter({2, 3}, rng), random_parameter({3}, rng)},
           [](const auto& x) { return ad::sub(x[0], x[1]); });
  add_case("mul", {random_parameter({2, 3, 4}, rng), random_parameter({2, 1, 4}, rng)},
           [](const auto& x) { return ad::mul(x[0], x[1]); });
  add_case("scale", {random_parameter({5}, rng)},
           [](const auto& x) { return ad::scale(x[0], -1.7); });
  add_case("add_scalar", {random_parameter({5}, rng)},
           [](const auto& x) { return ad::mul(ad::add_scalar(x[0], 0.3), x[0]); });
  add_case("rsub_scalar", {random_parameter({5}, rng)},
           [](const auto& x) { return ad::mul(ad::rsub_scalar(1.0, x[0]), x[0]); });
  add_case("matmul_2d", {random_parameter({3, 4}, rng), random_parameter({4, 2}, rng)},
           [](const auto& x) { return ad::matmul(x[0], x[1]); });
  add_case("matmul_nd", {random_parameter({2, 3, 4}, rng), random_parameter({4, 5}, rng)},
           [](const auto& x) { return ad::matmul(x[0], x[1]); });
  add_case("matmul_batched",
           {random_parameter({2, 3, 4}, rng), random_parameter({2, 4, 3}, rng)},
           [](const auto& x) { return ad::matmul(x[0], x[1]); });
  add_case("linear",
           {random_parameter({2, 3, 4}, rng), random_parameter({4, 5}, rng),
            random_parameter({5}, rng)},
           [](const auto& x) { return ad::linear(x[0], x[1], x[2]); });
  add_case("sigmoid", {random_parameter({6}, rng, -3, 3)},
           [](const auto& x) { return ad::sigmoid(x[0]); });
  add_case("log", {random_parameter({6}, rng, 0.2, 2.0)},
           [](const auto& x) { return ad::log(x[0]); });
  add_case("exp", {random_parameter({6}, rng)}, [](const auto& x) { return ad::exp(x[0]); });
  add_case("abs", {signed_parameter({6}, rng)}, [](const auto& x) { return ad::abs(x[0]); });
  add_case("max_with_zero", {signed_parameter({6}, rng)},
           [](const auto& x) { return ad::max_with_zero(x[0]); });
  add_case("clamp", {signed_parameter({8}, rng)},
           [](const auto& x) { return ad::clamp(x[0], -0.5, 0.5); });
  add_case("softmax", {random_parameter({2, 3, 5}, rng, -2, 2)},
           [](const auto& x) { return ad::softmax(x[0], -1); });
  add_case("softmax_inner_axis", {random_parameter({2, 4, 3}, rng, -2, 2)},
           [](const auto& x) { return ad::softmax(x[0], 1); });
  add_case("layer_norm",
           {random_parameter({2, 3, 6}, rng), random_parameter({6}, rng, 0.5, 1.5),
            random_parameter({6}, rng)},
           [](const auto& x) { return ad::layer_norm(x[0], x[1], x[2], -1); });
  add_case("concat", {random_parameter({2, 3}, rng), random_parameter({2, 2}, rng)},
           [](const auto& x) { return ad::concat({x[0], x[1]}, 1); });
  add_case("slice", {random_parameter({3, 5}, rng)},
           [](const auto& x) { return ad::slice(x[0], 1, 1, 4); });
  add_case("sum", {random_parameter({2, 3, 4}, rng)},
           [](const auto& x) { return ad::sum(x[0], 1); });
  add_case("sum_all", {random_parameter({2, 3}, rng)},
           [](const auto& x) { return ad::mul(ad::sum_all(x[0]), ad::sum_all(x[0])); });
  add_case("mean", {random_parameter({2, 3, 4}, rng)},
           [](const auto& x) { return ad::mean(x[0], 2); });
  add_case("cumsum", {random_parameter({2, 5}, rng)},
           [](const auto& x) { return ad::cumsum(x[0], 1); });
  add_case("reshape", {random_parameter({2, 6}, rng)},
           [](const auto& x) { return ad::mul(ad::reshape(x[0], {3, 4}), ad::reshape(x[0], {3, 4})); });
  add_case("permute", {random_parameter({2, 3, 4}, rng)},
           [](const auto& x) { return ad::permute(x[0], {2, 0, 1}); });
  add_case("dropout", {random_parameter({4, 6}, rng)}, [](const auto& x) {
    std::mt19937_64 local(17);
    return ad::dropout(x[0], 0.3, true, &local);
  });
  add_case("masked_fill", {random_parameter({2, 3, 3}, rng)}, [](const auto& x) {
    static const std::vector<std::uint8_t> mask{0, 1, 1, 0, 0, 1, 0, 0, 0};
    return ad::masked_fill(x[0], mask, {3, 3}, -2.0);
  });
  add_case("causal_self_attention", {random_parameter({2, 5, 12}, rng)}, [](const auto& x) {
    return ad::causal_self_attention(x[0], 2, 0.0, false, nullptr);
  });
  add_case("causal_self_attention_dropout", {random_parameter({2, 5, 18}, rng)},
           [](const auto& x) {
             std::mt19937_64 local(23);
             return ad::causal_self_attention(x[0], 3, 0.25, true, &local);
           });
  return cases;
}

}  // namespace

void to_json(nlohmann::json& j, const CheckResult& r) {
  j = nlohmann::json{
      {"name", r.name}, {"value", r.value}, {"tolerance", r.tolerance}, {"passed", r.passed}};
}

std::vector<CheckResult> gradient_checks(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<CheckResult> out;
  std::uint64_t projection_seed = seed;
  for (auto& c : primitive_cases(rng)) {
    const std::uint64_t ps = ++projection_seed;
    auto body = c.body;
    const double err = ad::gradient_check(
        [body, ps](const std::vector<Tensor>& x) { return project(body(x), ps); }, c.leaves);
    out.push_back({c.name, err, kPrimitiveTolerance, err <= kPrimitiveTolerance});
  }

  // Full objective through the transformer on a toy batch.
  model::ModelConfig mc;
  mc.d_model = 8;
  mc.n_layers = 2;
  mc.n_heads = 2;
  mc.d_ff = 16;
  mc.dropout = 0.0;
  mc.t_max = 6;
  mc.p_static = 3;
  mc.q_temporal = 2;
  const model::DynstModel net(mc, seed + 1);
  Batch batch;
  batch.size = 3;
  batch.t_max = mc.t_max;
  batch.p = mc.p_static;
  batch.q = mc.q_temporal;
  std::normal_distribution<double> normal(0.0, 1.0);
  std::bernoulli_distribution bit(0.5);
  for (std::size_t i = 0; i < batch.size * batch.p; ++i) batch.static_features.push_back(bit(rng));
  for (std::size_t i = 0; i < batch.size * batch.t_max * batch.q; ++i)
    batch.temporal.push_back(normal(rng));
  batch.observed_time = {2, 6, 4};
  batch.event = {1, 0, 1};
  for (double alpha : {0.0, 0.3}) {
    const losses::LossConfig lc{alpha};
    const double err = ad::gradient_check(
        [&](const std::vector<Tensor>&) {
          return losses::total_loss(net.forward(batch, {}), batch, lc);
        },
        net.parameters());
    out.push_back({"end_to_end_loss_alpha_" + std::to_string(alpha).substr(0, 3), err,
                   kEndToEndTolerance, err <= kEndToEndTolerance});
  }
  return out;
}

CheckResult causality_check(const model::SurvivalModel& model, const Cohort& cohort,
                            std::size_t n_patients, std::uint64_t seed) {
  constexpr double kTolerance = 1e-12;
  if (cohort.size() == 0) throw ContractError("causality_check on an empty cohort");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, cohort.size() - 1);
  std::normal_distribution<double> normal(0.0, 3.0);
  ad::NoGradGuard guard;
  const std::size_t t_max = cohort.t_max;
  double worst = 0.0;
  for (std::size_t n = 0; n < n_patients; ++n) {
    const std::size_t idx = pick(rng);
    const std::vector<std::size_t> one{idx};
    const Batch base = make_batch(cohort, one);
    const ad::Tensor reference = model.forward(base, {});
    const auto ref = reference.data();

    // One copy per cut point t = 1..t_max-1, with rows after t replaced.
    Batch perturbed = base;
    const std::size_t copies = t_max - 1;
    if (copies == 0) continue;
    perturbed.size = copies;
    perturbed.static_features.clear();
    perturbed.temporal.clear();
    perturbed.observed_time.assign(copies, base.observed_time[0]);
    perturbed.event.assign(copies, base.event[0]);
    for (std::size_t t = 1; t <= copies; ++t) {
      perturbed.static_features.insert(perturbed.static_features.end(),
                                       base.static_features.begin(), base.static_features.end());
      for (std::size_t row = 0; row < t_max; ++row) {
        for (std::size_t j = 0; j < base.q; ++j) {
          const double v = base.temporal[row * base.q + j];
          perturbed.temporal.push_back(row < t ? v : v + normal(rng));
        }
      }
    }
    const ad::Tensor q_hat = model.forward(perturbed, {});
    const auto out = q_hat.data();
    for (std::size_t c = 0; c < copies; ++c) {
      const std::size_t t = c + 1;
      for (std::size_t k = 0; k < t; ++k)
        worst = std::max(worst, std::abs(out[c * t_max + k] - ref[k]));
    }
  }
  return {"causality", worst, kTolerance, worst < kTolerance};
}

CheckResult survival_math_check(std::size_t n_curves, std::uint64_t seed) {
  constexpr double kTolerance = 1e-12;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> horizon(1, 64);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst = 0.0;
  std::vector<double> predicted, observed;
  std::vector<int> events;
  for (std::size_t c = 0; c < n_curves; ++c) {
    const int t_max = horizon(rng);
    std::vector<double> h(static_cast<std::size_t>(t_max));
    for (double& v : h) v = 0.2 * unit(rng);
    const auto s = survival::survival_from_hazard(survival::HazardCurve(h));

    double product = 1.0, total = 0.0;
    const int tau = 1 + static_cast<int>(unit(rng) * t_max) % t_max;
    double restricted = 0.0;
    for (int t = 1; t <= t_max; ++t) {
      product *= 1.0 - h[static_cast<std::size_t>(t) - 1];
      worst = std::max(worst, std::abs(product - s.at(t)));
      total += product;
      if (t <= tau) restricted += product;
    }
    worst = std::max(worst, std::abs(total - survival::expected_survival_time(s)));
    worst = std::max(worst, std::abs(restricted - survival::restricted_mean(s.values(), tau)));

    predicted.push_back(total);
    observed.push_back(1 + static_cast<int>(unit(rng) * t_max) % t_max);
    events.push_back(unit(rng) < 0.6 ? 1 : 0);
  }
  double mae = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double gap = observed[i] - predicted[i];
    mae += events[i] ? std::abs(gap) : std::max(0.0, gap);
  }
  if (!predicted.empty()) {
    mae /= static_cast<double>(predicted.size());
    worst = std::max(worst, std::abs(mae - survival::censored_mae(predicted, observed, events)));
  }
  return {"survival_math", worst, kTolerance, worst <= kTolerance};
}

}  // namespace dynst::pipeline
