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

#include "dynst/autodiff/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "dynst/error.hpp"

namespace dynst::ad {

double gradient_check(const ScalarFunction& f, const std::vector<Tensor>& leaves,
                      double step) {
  for (const auto& leaf : leaves) {
    if (!leaf.requires_grad()) throw ContractError("gradient_check: leaves must be parameters");
    leaf.node()->grad.clear();
  }
  backward(f(leaves));

  double worst = 0.0;
  for (const auto& leaf : leaves) {
    std::vector<double> analytic(leaf.size(), 0.0);
    if (leaf.has_grad()) std::copy(leaf.grad().begin(), leaf.grad().end(), analytic.begin());

    std::vector<double> numeric(leaf.size());
    auto values = Tensor(leaf.node_ptr()).mutable_data();
    for (std::size_t k = 0; k < values.size(); ++k) {
      const double saved = values[k];
      NoGradGuard guard;
      values[k] = saved + step;
      const double up = f(leaves).item();
      values[k] = saved - step;
      const double down = f(leaves).item();
      values[k] = saved;
      numeric[k] = (up - down) / (2.0 * step);
    }

    double diff = 0.0, na = 0.0, nn = 0.0;
    for (std::size_t k = 0; k < analytic.size(); ++k) {
      diff += (analytic[k] - numeric[k]) * (analytic[k] - numeric[k]);
      na += analytic[k] * analytic[k];
      nn += numeric[k] * numeric[k];
    }
    const double denom = std::max({std::sqrt(na), std::sqrt(nn), 1e-300});
    worst = std::max(worst, std::sqrt(diff) / denom);
  }
  return worst;
}

}  // namespace dynst::ad
