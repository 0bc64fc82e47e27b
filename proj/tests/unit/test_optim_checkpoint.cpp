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
#include <filesystem>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "dynst/autodiff/adam.hpp"
#include "dynst/autodiff/checkpoint.hpp"
#include "dynst/autodiff/ops.hpp"
#include "dynst/error.hpp"

using namespace dynst;
using namespace dynst::ad;

TEST_SUITE("optimizer") {

TEST_CASE("first step moves each weight by about lr times the gradient sign") {
  auto w = Tensor::parameter({4}, {0.5, -0.5, 1.0, 0.0});
  auto g = Tensor::constant({4}, {3.0, 3.0, 3.0, 3.0});
  Adam opt({w}, AdamOptions{.lr = 0.01});
  backward(sum_all(mul(w, g)));
  opt.step();
  // m_hat = g and v_hat = g^2 after bias correction.
  const double step = 0.01 * 3.0 / (3.0 + 1e-8);
  const std::vector<double> start = {0.5, -0.5, 1.0, 0.0};
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(w.data()[i] == doctest::Approx(start[i] - step).epsilon(1e-14));
  }
  CHECK(opt.step_count() == 1);
}

TEST_CASE("zero gradient without decay leaves parameters unchanged") {
  auto w = Tensor::parameter({3}, {0.1, -2.0, 7.0});
  Adam opt({w}, AdamOptions{});
  backward(scale(sum_all(w), 0.0));
  for (int k = 0; k < 3; ++k) opt.step();
  CHECK(w.data()[0] == 0.1);
  CHECK(w.data()[1] == -2.0);
  CHECK(w.data()[2] == 7.0);
  CHECK(opt.step_count() == 3);
}

TEST_CASE("decoupled decay shrinks by one minus lr times decay") {
  auto w = Tensor::parameter({2}, {2.0, -4.0});
  Adam opt({w}, AdamOptions{.lr = 0.01, .weight_decay = 0.1});
  backward(scale(sum_all(w), 0.0));
  opt.step();
  CHECK(w.data()[0] == doctest::Approx(2.0 * 0.999).epsilon(1e-15));
  CHECK(w.data()[1] == doctest::Approx(-4.0 * 0.999).epsilon(1e-15));
}

TEST_CASE("moments keep parameter shapes and follow the recursions") {
  auto w = Tensor::parameter({2, 3}, std::vector<double>(6, 1.0));
  Adam opt({w}, AdamOptions{.lr = 1e-3, .beta1 = 0.9, .beta2 = 0.999});
  double m = 0.0, v = 0.0;
  for (int k = 1; k <= 4; ++k) {
    opt.zero_grad();
    backward(scale(sum_all(w), static_cast<double>(k)));
    opt.step();
    m = 0.9 * m + 0.1 * k;
    v = 0.999 * v + 0.001 * k * k;
    CHECK(opt.first_moment(0).size() == 6);
    CHECK(opt.second_moment(0).size() == 6);
    CHECK(opt.first_moment(0)[3] == doctest::Approx(m).epsilon(1e-14));
    CHECK(opt.second_moment(0)[3] == doctest::Approx(v).epsilon(1e-14));
    CHECK(opt.step_count() == static_cast<std::size_t>(k));
  }
}

TEST_CASE("missing gradient is a contract error") {
  auto w = Tensor::parameter({2}, {1.0, 2.0});
  Adam opt({w}, AdamOptions{});
  CHECK_THROWS_AS(opt.step(), ContractError);
}

TEST_CASE("invalid hyperparameters are rejected") {
  auto w = Tensor::parameter({1}, {1.0});
  CHECK_THROWS_AS(Adam({w}, AdamOptions{.lr = 0.0}), ConfigError);
  CHECK_THROWS_AS(Adam({w}, AdamOptions{.beta1 = 1.0}), ConfigError);
}

}  // TEST_SUITE

TEST_SUITE("checkpoint") {

TEST_CASE("text round trip preserves every bit") {
  std::vector<double> odd = {0.1, -1.0 / 3.0, 1e-300, 6.02214076e23, -0.0,
                             std::nextafter(1.0, 2.0)};
  auto a = Tensor::parameter({2, 3}, odd);
  auto b = Tensor::parameter({1}, {std::acos(-1.0)});
  std::stringstream ss;
  write_checkpoint(ss, {{"kind", "test"}, {"n", 3}}, {{"a", a}, {"b", b}});
  const Checkpoint ck = read_checkpoint(ss);
  CHECK(ck.header["kind"] == "test");
  CHECK(ck.find("a").shape == Shape{2, 3});
  for (std::size_t i = 0; i < odd.size(); ++i) {
    CHECK(std::signbit(ck.find("a").values[i]) == std::signbit(odd[i]));
    CHECK(ck.find("a").values[i] == odd[i]);
  }
  CHECK(ck.find("b").values[0] == std::acos(-1.0));

  auto a2 = Tensor::parameter({2, 3}, std::vector<double>(6, 0.0));
  auto b2 = Tensor::parameter({1}, {0.0});
  restore_parameters(ck, {{"a", a2}, {"b", b2}});
  CHECK(std::vector<double>(a2.data().begin(), a2.data().end()) == odd);
}

TEST_CASE("writing twice gives identical bytes") {
  auto a = Tensor::parameter({3}, {0.25, 1e-17, -9.5});
  std::stringstream s1, s2;
  write_checkpoint(s1, {{"x", 1}}, {{"a", a}});
  write_checkpoint(s2, {{"x", 1}}, {{"a", a}});
  CHECK(s1.str() == s2.str());
}

TEST_CASE("restore refuses mismatched shapes and missing names") {
  auto a = Tensor::parameter({3}, {1.0, 2.0, 3.0});
  std::stringstream ss;
  write_checkpoint(ss, nlohmann::json::object(), {{"a", a}});
  const Checkpoint ck = read_checkpoint(ss);
  auto wrong = Tensor::parameter({2}, {0.0, 0.0});
  CHECK_THROWS_AS(restore_parameters(ck, {{"a", wrong}}), ShapeError);
  CHECK_THROWS(restore_parameters(ck, {{"missing", wrong}}));
}

TEST_CASE("malformed input is a format error") {
  std::stringstream bad1("not-a-checkpoint\n");
  CHECK_THROWS_AS(read_checkpoint(bad1), FormatError);
  std::stringstream bad2("dynst-checkpoint 1\nheader {}\nparam a 1 3\n1 2\nend\n");
  CHECK_THROWS_AS(read_checkpoint(bad2), FormatError);
  std::stringstream bad3("dynst-checkpoint 1\nheader {}\nparam a 1 2\n1 2\n");
  CHECK_THROWS_AS(read_checkpoint(bad3), FormatError);
}

TEST_CASE("file save and load") {
  const auto path = std::filesystem::temp_directory_path() / "dynst_ckpt_test.txt";
  auto a = Tensor::parameter({2}, {1.5, -2.5});
  save_checkpoint(path, {{"k", "v"}}, {{"a", a}});
  const Checkpoint ck = load_checkpoint(path);
  CHECK(ck.find("a").values == std::vector<double>{1.5, -2.5});
  std::filesystem::remove(path);
  CHECK_THROWS(load_checkpoint(path));
}

}  // TEST_SUITE
