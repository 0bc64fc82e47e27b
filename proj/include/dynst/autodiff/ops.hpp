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

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "dynst/autodiff/tensor.hpp"

namespace dynst::ad {

// Elementwise arithmetic with numpy-style broadcasting.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double offset);
// offset - x
Tensor rsub_scalar(double offset, const Tensor& x);

// Matrix product over the last two axes. Supported forms:
//   [n,k] x [k,m], [...,n,k] x [k,m], and [...,n,k] x [...,k,m] with equal
//   leading axes.
Tensor matmul(const Tensor& a, const Tensor& b);
// x[..., in] * w[in, out] + b[out]
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

Tensor sigmoid(const Tensor& x);
// Throws DomainError if any input is <= 0.
Tensor log(const Tensor& x);
Tensor exp(const Tensor& x);
// Subgradient 0 at the kink.
Tensor abs(const Tensor& x);
// max(0, x); subgradient 0 at the kink.
Tensor max_with_zero(const Tensor& x);
// Gradient passes only where lo <= x <= hi.
Tensor clamp(const Tensor& x, double lo, double hi);

Tensor softmax(const Tensor& x, int axis);
// Normalizes over `axis`, then applies gamma * xhat + beta with gamma and beta
// shaped [dim(axis)].
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  int axis, double eps = 1e-5);
// Inverted dropout. Identity when `train` is false or p == 0.
Tensor dropout(const Tensor& x, double p, bool train, std::mt19937_64* rng);

Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& x, int axis, std::size_t begin, std::size_t end);
Tensor sum(const Tensor& x, int axis);
Tensor sum_all(const Tensor& x);
Tensor mean(const Tensor& x, int axis);
Tensor cumsum(const Tensor& x, int axis);

// Sets entries where `mask` is nonzero to `value`. The mask shape must equal a
// trailing suffix of x's shape and is broadcast over the leading axes.
Tensor masked_fill(const Tensor& x, std::span<const std::uint8_t> mask,
                   const Shape& mask_shape, double value);

// Multi-head causal self-attention core. `qkv` is [batch, t, 3*d] holding the
// query, key and value projections side by side; each of the `n_heads` heads
// uses a d/n_heads slice. Position i attends only to positions j <= i with
// softmax(q.k / sqrt(d_head)) weights, followed by inverted dropout on the
// weights. Returns the concatenated head outputs [batch, t, d]. When
// `weights_out` is non-null it receives the pre-dropout attention weights
// [batch, heads, t, t] as a constant tensor (zeros above the diagonal).
Tensor causal_self_attention(const Tensor& qkv, std::size_t n_heads,
                             double dropout_p, bool train, std::mt19937_64* rng,
                             Tensor* weights_out = nullptr);

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& order);

}  // namespace dynst::ad
