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

// Shared helpers for the test binaries. The finite-difference routine here is
// deliberately separate from the library's own gradient checker.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "dynst/autodiff/ops.hpp"
#include "dynst/autodiff/tensor.hpp"
#include "dynst/data/cohort.hpp"

namespace dynst::testing {

inline ad::Tensor uniform_parameter(const ad::Shape& shape, std::mt19937_64& rng,
                                    double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(ad::num_elements(shape));
  for (double& x : v) x = u(rng);
  return ad::Tensor::parameter(shape, std::move(v));
}

// Values with |x| in [0.2, 1], away from kinks at zero.
inline ad::Tensor kink_free_parameter(const ad::Shape& shape, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> mag(0.2, 1.0);
  std::bernoulli_distribution neg(0.5);
  std::vector<double> v(ad::num_elements(shape));
  for (double& x : v) x = neg(rng) ? -mag(rng) : mag(rng);
  return ad::Tensor::parameter(shape, std::move(v));
}

// Reduces any tensor to a scalar with fixed random weights.
inline ad::Tensor weighted_sum(const ad::Tensor& t, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> w(t.size());
  for (double& x : w) x = n(rng);
  return ad::sum_all(ad::mul(t, ad::Tensor::constant(t.shape(), std::move(w))));
}

using Objective = std::function<ad::Tensor(const std::vector<ad::Tensor>&)>;

// Largest per-leaf norm-wise relative error between backprop gradients and
// central differences.
inline double finite_difference_error(const Objective& f, std::vector<ad::Tensor> leaves,
                                      double h = 1e-6) {
  for (auto& leaf : leaves) leaf.node()->grad.clear();
  ad::backward(f(leaves));
  double worst = 0.0;
  for (auto& leaf : leaves) {
    std::vector<double> analytic(leaf.size(), 0.0);
    if (leaf.has_grad()) std::copy(leaf.grad().begin(), leaf.grad().end(), analytic.begin());
    auto values = leaf.mutable_data();
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (std::size_t k = 0; k < values.size(); ++k) {
      const double x0 = values[k];
      double plus, minus;
      {
        ad::NoGradGuard guard;
        values[k] = x0 + h;
        plus = f(leaves).item();
        values[k] = x0 - h;
        minus = f(leaves).item();
      }
      values[k] = x0;
      const double numeric = (plus - minus) / (2 * h);
      diff2 += (numeric - analytic[k]) * (numeric - analytic[k]);
      a2 += analytic[k] * analytic[k];
      n2 += numeric * numeric;
    }
    const double scale = std::max({std::sqrt(a2), std::sqrt(n2), 1e-300});
    worst = std::max(worst, std::sqrt(diff2) / scale);
  }
  return worst;
}

struct PrimitiveCase {
  const char* name;
  Objective f;
  std::vector<ad::Tensor> leaves;
};

// One randomized scalar objective per differentiable primitive, with inputs
// kept away from kinks and domain edges.
inline std::vector<PrimitiveCase> primitive_cases(std::mt19937_64& rng) {
  using namespace ad;
  static const std::vector<std::uint8_t> mask = {0, 1, 1, 0, 0, 1, 0, 0, 0};
  return {
      {"add", [](auto& p) { return weighted_sum(add(p[0], p[1]), 1); },
       {uniform_parameter({3, 4}, rng), uniform_parameter({4}, rng)}},
      {"sub", [](auto& p) { return weighted_sum(sub(p[0], p[1]), 2); },
       {uniform_parameter({3, 1}, rng), uniform_parameter({3, 4}, rng)}},
      {"mul", [](auto& p) { return weighted_sum(mul(p[0], p[1]), 3); },
       {uniform_parameter({2, 3, 4}, rng), uniform_parameter({3, 4}, rng)}},
      {"scale", [](auto& p) { return weighted_sum(scale(p[0], -1.7), 4); },
       {uniform_parameter({5}, rng)}},
      {"add_scalar", [](auto& p) { return weighted_sum(add_scalar(p[0], 0.3), 4); },
       {uniform_parameter({5}, rng)}},
      {"rsub_scalar", [](auto& p) { return weighted_sum(rsub_scalar(2.0, p[0]), 5); },
       {uniform_parameter({5}, rng)}},
      {"matmul", [](auto& p) { return weighted_sum(matmul(p[0], p[1]), 5); },
       {uniform_parameter({2, 3}, rng), uniform_parameter({3, 4}, rng)}},
      {"batched matmul", [](auto& p) { return weighted_sum(matmul(p[0], p[1]), 12); },
       {uniform_parameter({2, 3, 4}, rng), uniform_parameter({2, 4, 2}, rng)}},
      {"broadcast matmul", [](auto& p) { return weighted_sum(matmul(p[0], p[1]), 26); },
       {uniform_parameter({2, 3, 4}, rng), uniform_parameter({4, 2}, rng)}},
      {"linear", [](auto& p) { return weighted_sum(linear(p[0], p[1], p[2]), 11); },
       {uniform_parameter({2, 3, 5}, rng), uniform_parameter({5, 4}, rng),
        uniform_parameter({4}, rng)}},
      {"sigmoid", [](auto& p) { return weighted_sum(sigmoid(p[0]), 6); },
       {uniform_parameter({3, 4}, rng, -3, 3)}},
      {"log", [](auto& p) { return weighted_sum(log(p[0]), 7); },
       {uniform_parameter({3, 4}, rng, 0.5, 2.0)}},
      {"exp", [](auto& p) { return weighted_sum(exp(p[0]), 8); },
       {uniform_parameter({3, 4}, rng)}},
      {"abs", [](auto& p) { return weighted_sum(abs(p[0]), 9); },
       {kink_free_parameter({3, 4}, rng)}},
      {"max_with_zero", [](auto& p) { return weighted_sum(max_with_zero(p[0]), 10); },
       {kink_free_parameter({3, 4}, rng)}},
      {"clamp", [](auto& p) { return weighted_sum(clamp(p[0], -2.0, 2.0), 27); },
       {uniform_parameter({3, 4}, rng)}},
      {"softmax axis 0", [](auto& p) { return weighted_sum(softmax(p[0], 0), 13); },
       {uniform_parameter({4, 3}, rng)}},
      {"softmax last axis", [](auto& p) { return weighted_sum(softmax(p[0], -1), 14); },
       {uniform_parameter({2, 3, 5}, rng)}},
      {"layer_norm",
       [](auto& p) { return weighted_sum(layer_norm(p[0], p[1], p[2], -1), 15); },
       {uniform_parameter({2, 3, 6}, rng), uniform_parameter({6}, rng),
        uniform_parameter({6}, rng)}},
      {"dropout",
       [](auto& p) {
         std::mt19937_64 fixed(99);
         return weighted_sum(dropout(p[0], 0.4, true, &fixed), 25);
       },
       {uniform_parameter({4, 5}, rng)}},
      {"concat", [](auto& p) { return weighted_sum(concat({p[0], p[1]}, 1), 16); },
       {uniform_parameter({2, 3}, rng), uniform_parameter({2, 2}, rng)}},
      {"slice", [](auto& p) { return weighted_sum(slice(p[0], 1, 1, 3), 17); },
       {uniform_parameter({2, 4, 3}, rng)}},
      {"sum", [](auto& p) { return weighted_sum(sum(p[0], 1), 18); },
       {uniform_parameter({2, 4, 3}, rng)}},
      {"sum_all", [](auto& p) { return scale(sum_all(p[0]), 0.7); },
       {uniform_parameter({2, 4}, rng)}},
      {"mean", [](auto& p) { return weighted_sum(mean(p[0], -1), 19); },
       {uniform_parameter({2, 4, 3}, rng)}},
      {"cumsum", [](auto& p) { return weighted_sum(cumsum(p[0], 1), 20); },
       {uniform_parameter({3, 5}, rng)}},
      {"masked_fill",
       [](auto& p) {
         return weighted_sum(softmax(masked_fill(p[0], mask, {3, 3}, -1e9), -1), 23);
       },
       {uniform_parameter({2, 3, 3}, rng)}},
      {"reshape", [](auto& p) { return weighted_sum(reshape(p[0], {6, 2}), 21); },
       {uniform_parameter({3, 4}, rng)}},
      {"permute", [](auto& p) { return weighted_sum(permute(p[0], {2, 0, 1}), 22); },
       {uniform_parameter({2, 3, 4}, rng)}},
      {"causal_self_attention",
       [](auto& p) {
         return weighted_sum(causal_self_attention(p[0], 2, 0.0, false, nullptr), 24);
       },
       {uniform_parameter({2, 5, 12}, rng)}},
      {"causal_self_attention with dropout",
       [](auto& p) {
         std::mt19937_64 fixed(98);
         return weighted_sum(causal_self_attention(p[0], 3, 0.3, true, &fixed), 28);
       },
       {uniform_parameter({2, 5, 18}, rng)}},
  };
}

// Small random cohort with binary static features and Gaussian vitals.
inline Cohort random_cohort(std::size_t n, std::size_t t_max, std::size_t q, std::uint64_t seed,
                            std::size_t z_width = kNumStaticFeatures) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution bit(0.4);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> time(1, static_cast<int>(t_max));
  Cohort c;
  c.t_max = t_max;
  c.q = q;
  for (std::size_t i = 0; i < n; ++i) {
    PatientRecord p;
    p.id = static_cast<int>(i);
    for (std::size_t j = 0; j < z_width; ++j) p.z.push_back(bit(rng));
    for (std::size_t k = 0; k < t_max * q; ++k) p.v.push_back(normal(rng));
    p.treatment = bit(rng);
    p.observed_time = time(rng);
    p.event = bit(rng);
    c.patients.push_back(std::move(p));
  }
  return c;
}

}  // namespace dynst::testing
