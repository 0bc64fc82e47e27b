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

#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "dynst/autodiff/ops.hpp"
#include "dynst/autodiff/tensor.hpp"
#include "dynst/error.hpp"
#include "support.hpp"

using namespace dynst;
using namespace dynst::ad;
using dynst::testing::finite_difference_error;
using dynst::testing::kink_free_parameter;
using dynst::testing::uniform_parameter;
using dynst::testing::weighted_sum;

namespace {

constexpr double kPrimitiveTol = 1e-4;

double grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& f,
                  std::vector<Tensor> leaves) {
  return finite_difference_error(f, std::move(leaves), 1e-5);
}

}  // namespace

TEST_SUITE("autodiff") {

TEST_CASE("sigmoid of zero is one half with derivative one quarter") {
  auto x = Tensor::parameter({1}, {0.0});
  auto y = sigmoid(x);
  CHECK(y.item() == 0.5);
  backward(sum_all(y));
  CHECK(x.grad()[0] == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("log derivative at two") {
  auto x = Tensor::parameter({1}, {2.0});
  backward(sum_all(log(x)));
  CHECK(x.grad()[0] == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("softmax of equal logits is uniform") {
  auto s = softmax(Tensor::constant({3}, {0.7, 0.7, 0.7}), 0);
  for (double v : s.data()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("softmax rows sum to one") {
  std::mt19937_64 rng(11);
  auto x = uniform_parameter({7, 13}, rng, -30.0, 30.0);
  auto s = softmax(x, 1);
  for (std::size_t r = 0; r < 7; ++r) {
    double total = 0.0;
    for (std::size_t c = 0; c < 13; ++c) total += s.data()[r * 13 + c];
    CHECK(std::abs(total - 1.0) < 1e-12);
  }
}

TEST_CASE("shape mismatch names the op and both shapes") {
  auto a = Tensor::constant({2, 3}, std::vector<double>(6, 1.0));
  auto b = Tensor::constant({4}, std::vector<double>(4, 1.0));
  try {
    (void)add(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("add") != std::string::npos);
    CHECK(msg.find("[2,3]") != std::string::npos);
    CHECK(msg.find("[4]") != std::string::npos);
  }
  CHECK_THROWS_AS((void)matmul(a, a), ShapeError);
}

TEST_CASE("log of a non-positive value is a domain error") {
  CHECK_THROWS_AS((void)log(Tensor::constant({2}, {1.0, 0.0})), DomainError);
  CHECK_THROWS_AS((void)log(Tensor::constant({1}, {-3.0})), DomainError);
}

TEST_CASE("non-finite forward results are rejected") {
  CHECK_THROWS_AS((void)exp(Tensor::constant({1}, {1e6})), DomainError);
}

TEST_CASE("backward on a non-scalar loss is a contract error") {
  auto x = Tensor::parameter({3}, {1.0, 2.0, 3.0});
  CHECK_THROWS_AS(backward(mul(x, x)), ContractError);
}

TEST_CASE("repeated backward accumulates until zero_grad") {
  auto x = Tensor::parameter({2}, {1.5, -2.0});
  auto loss = [&] { return sum_all(mul(x, x)); };
  backward(loss());
  backward(loss());
  CHECK(x.grad()[0] == doctest::Approx(6.0));
  CHECK(x.grad()[1] == doctest::Approx(-8.0));
  x.zero_grad();
  backward(loss());
  CHECK(x.grad()[0] == doctest::Approx(3.0));
}

TEST_CASE("no-grad guard records nothing") {
  auto x = Tensor::parameter({2}, {1.0, 2.0});
  Tensor y;
  {
    NoGradGuard guard;
    y = mul(x, x);
  }
  CHECK_FALSE(y.requires_grad());
  CHECK(grad_mode_enabled());
}

TEST_CASE("mutable_data is refused on computed tensors") {
  auto x = Tensor::parameter({2}, {1.0, 2.0});
  auto y = add_scalar(x, 1.0);
  CHECK_THROWS_AS((void)y.mutable_data(), ContractError);
}

TEST_CASE("every primitive matches finite differences") {
  std::mt19937_64 rng(2);
  for (auto& c : dynst::testing::primitive_cases(rng)) {
    CAPTURE(c.name);
    CHECK(grad_check(c.f, c.leaves) < kPrimitiveTol);
  }
}

TEST_CASE("masked_fill gradient is zero on masked entries") {
  std::mt19937_64 rng(3);
  auto x = uniform_parameter({2, 3, 3}, rng);
  std::vector<std::uint8_t> mask = {0, 1, 1, 0, 0, 1, 0, 0, 0};
  auto f = [&](const std::vector<Tensor>& p) {
    return weighted_sum(softmax(masked_fill(p[0], mask, {3, 3}, -1e9), -1), 23);
  };
  x.zero_grad();
  backward(f({x}));
  CHECK(x.grad()[1] == 0.0);
  CHECK(x.grad()[9 + 5] == 0.0);
  CHECK(x.grad()[3] != 0.0);
  auto y = masked_fill(x, mask, {3, 3}, -5.0);
  CHECK(y.data()[1] == -5.0);
  CHECK(y.data()[9 + 2] == -5.0);
  CHECK(y.data()[0] == x.data()[0]);
}

TEST_CASE("clamp passes gradient only inside the interval") {
  auto x = Tensor::parameter({3}, {-2.0, 0.3, 2.0});
  backward(sum_all(clamp(x, -1.0, 1.0)));
  CHECK(x.grad()[0] == 0.0);
  CHECK(x.grad()[1] == 1.0);
  CHECK(x.grad()[2] == 0.0);
}

TEST_CASE("abs and hinge use zero subgradient at the kink") {
  auto x = Tensor::parameter({1}, {0.0});
  backward(add(sum_all(abs(x)), sum_all(max_with_zero(x))));
  CHECK(x.grad()[0] == 0.0);
}

TEST_CASE("causal self-attention agrees with an explicit masked softmax") {
  std::mt19937_64 rng(5);
  const std::size_t b = 2, t = 4, d = 6, h = 2, dh = d / h;
  auto qkv = uniform_parameter({b, t, 3 * d}, rng);
  Tensor weights;
  auto out = causal_self_attention(qkv, h, 0.0, false, nullptr, &weights);
  const auto x = qkv.data();
  for (std::size_t bi = 0; bi < b; ++bi) {
    for (std::size_t hi = 0; hi < h; ++hi) {
      for (std::size_t i = 0; i < t; ++i) {
        std::vector<double> logits(i + 1);
        double mx = -1e300;
        for (std::size_t j = 0; j <= i; ++j) {
          double dot = 0.0;
          for (std::size_t k = 0; k < dh; ++k) {
            dot += x[(bi * t + i) * 3 * d + hi * dh + k] *
                   x[(bi * t + j) * 3 * d + d + hi * dh + k];
          }
          logits[j] = dot / std::sqrt(static_cast<double>(dh));
          mx = std::max(mx, logits[j]);
        }
        double z = 0.0;
        for (double& l : logits) z += (l = std::exp(l - mx));
        double row_total = 0.0;
        for (std::size_t j = 0; j < t; ++j) {
          const double w = weights.data()[((bi * h + hi) * t + i) * t + j];
          row_total += w;
          if (j > i) {
            CHECK(w == 0.0);
          } else {
            CHECK(w == doctest::Approx(logits[j] / z).epsilon(1e-12));
          }
        }
        CHECK(std::abs(row_total - 1.0) < 1e-12);
        for (std::size_t k = 0; k < dh; ++k) {
          double expect = 0.0;
          for (std::size_t j = 0; j <= i; ++j) {
            expect += logits[j] / z * x[(bi * t + j) * 3 * d + 2 * d + hi * dh + k];
          }
          CHECK(out.data()[(bi * t + i) * d + hi * dh + k] ==
                doctest::Approx(expect).epsilon(1e-12));
        }
      }
    }
  }
}

TEST_CASE("dropout is the identity in eval mode") {
  std::mt19937_64 rng(6);
  auto x = uniform_parameter({50}, rng);
  auto y = dropout(x, 0.5, false, nullptr);
  for (std::size_t i = 0; i < 50; ++i) CHECK(y.data()[i] == x.data()[i]);
}

TEST_CASE("dropout zeroes about p of the entries and rescales survivors") {
  const std::size_t n = 100000;
  const double p = 0.3;
  std::mt19937_64 rng(7);
  auto x = Tensor::constant({n}, std::vector<double>(n, 2.0));
  auto y = dropout(x, p, true, &rng);
  std::size_t zeros = 0;
  for (double v : y.data()) {
    if (v == 0.0) {
      ++zeros;
    } else {
      CHECK(v == doctest::Approx(2.0 / (1.0 - p)).epsilon(1e-15));
    }
  }
  // Two-sided binomial test at alpha = 0.001.
  const double sd = std::sqrt(n * p * (1 - p));
  CHECK(std::abs(static_cast<double>(zeros) - n * p) < 3.2905 * sd);
}

TEST_CASE("dropout rejects p outside [0,1)") {
  std::mt19937_64 rng(8);
  auto x = Tensor::constant({3}, {1.0, 2.0, 3.0});
  CHECK_THROWS_AS((void)dropout(x, 1.0, true, &rng), DomainError);
  CHECK_THROWS_AS((void)dropout(x, -0.1, true, &rng), DomainError);
}

TEST_CASE("identical seeds give bit-identical values and gradients") {
  auto run = [] {
    std::mt19937_64 rng(10);
    auto qkv = uniform_parameter({2, 6, 24}, rng);
    auto y = causal_self_attention(qkv, 4, 0.2, true, &rng);
    auto loss = weighted_sum(layer_norm(y, Tensor::full({8}, 1.0), Tensor::zeros({8}), -1), 3);
    backward(loss);
    std::vector<double> out(y.data().begin(), y.data().end());
    out.insert(out.end(), qkv.grad().begin(), qkv.grad().end());
    return out;
  };
  CHECK(run() == run());
}

}  // TEST_SUITE
