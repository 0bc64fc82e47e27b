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

#include <functional>
#include <vector>

#include "dynst/autodiff/tensor.hpp"

namespace dynst::ad {

using ScalarFunction = std::function<Tensor(const std::vector<Tensor>&)>;

// Compares reverse-mode gradients of `f` with central differences for every
// leaf. Returns the largest norm-wise relative error
// ||g_analytic - g_numeric|| / max(||g_analytic||, ||g_numeric||, 1e-300)
// over the leaves. Leaves must be parameters; their values are restored.
double gradient_check(const ScalarFunction& f, const std::vector<Tensor>& leaves,
                      double step = 1e-6);

}  // namespace dynst::ad
