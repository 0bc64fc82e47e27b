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

#include "dynst/autodiff/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

#include "dynst/error.hpp"

namespace dynst::ad {

namespace {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

using detail::make_result;

std::size_t normalize_axis(int axis, std::size_t rank, const char* op) {
  const int r = static_cast<int>(rank);
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) +
                     " out of range for rank " + std::to_string(rank));
  }
  return static_cast<std::size_t>(a);
}

// Views a tensor as [outer, len, inner] around one axis.
struct AxisSplit {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.len = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

[[noreturn]] void shape_mismatch(const char* op, const Shape& a,
                                 const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " +
                   shape_to_string(a) + " and " + shape_to_string(b));
}

struct Broadcast {
  Shape out;
  std::vector<std::size_t> stride_a, stride_b;
  bool same = false;
};

std::vector<std::size_t> contiguous_strides(const Shape& shape) {
  std::vector<std::size_t> s(shape.size());
  std::size_t acc = 1;
  for (std::size_t i = shape.size(); i-- > 0;) {
    s[i] = acc;
    acc *= shape[i];
  }
  return s;
}

Broadcast plan_broadcast(const Shape& a, const Shape& b, const char* op) {
  Broadcast p;
  if (a == b) {
    p.out = a;
    p.same = true;
    return p;
  }
  const std::size_t r = std::max(a.size(), b.size());
  p.out.assign(r, 1);
  p.stride_a.assign(r, 0);
  p.stride_b.assign(r, 0);
  const auto sa = contiguous_strides(a);
  const auto sb = contiguous_strides(b);
  for (std::size_t i = 0; i < r; ++i) {
    const std::size_t ia = i + a.size();
    const std::size_t ib = i + b.size();
    const std::size_t da = ia >= r ? a[ia - r] : 1;
    const std::size_t db = ib >= r ? b[ib - r] : 1;
    if (da != db && da != 1 && db != 1) shape_mismatch(op, a, b);
    p.out[i] = std::max(da, db);
    if (ia >= r && da != 1) p.stride_a[i] = sa[ia - r];
    if (ib >= r && db != 1) p.stride_b[i] = sb[ib - r];
  }
  return p;
}

// Calls f(out_index, a_index, b_index) for every output element.
template <class F>
void for_each_broadcast(const Broadcast& p, F&& f) {
  const std::size_t n = num_elements(p.out);
  if (p.same) {
    for (std::size_t i = 0; i < n; ++i) f(i, i, i);
    return;
  }
  const std::size_t r = p.out.size();
  if (r == 0) {
    f(0, 0, 0);
    return;
  }
  const std::size_t last = p.out[r - 1];
  const std::size_t la = p.stride_a[r - 1], lb = p.stride_b[r - 1];
  std::vector<std::size_t> idx(r, 0);
  std::size_t base_a = 0, base_b = 0, o = 0;
  while (o < n) {
    for (std::size_t j = 0; j < last; ++j) f(o + j, base_a + j * la, base_b + j * lb);
    o += last;
    // Advance the odometer over the leading axes.
    for (std::size_t ax = r - 1; ax-- > 0;) {
      ++idx[ax];
      base_a += p.stride_a[ax];
      base_b += p.stride_b[ax];
      if (idx[ax] < p.out[ax]) break;
      base_a -= p.stride_a[ax] * idx[ax];
      base_b -= p.stride_b[ax] * idx[ax];
      idx[ax] = 0;
    }
  }
}

template <class Fwd, class DA, class DB>
Tensor binary(const char* op, const Tensor& a, const Tensor& b, Fwd fwd,
              DA da, DB db) {
  const Broadcast plan = plan_broadcast(a.shape(), b.shape(), op);
  std::vector<double> out(num_elements(plan.out));
  const auto av = a.data();
  const auto bv = b.data();
  for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t j) {
    out[o] = fwd(av[i], bv[j]);
  });
  return make_result(
      op, plan.out, std::move(out), {a, b}, [plan, da, db](Node& self) {
        Node& na = *self.inputs[0];
        Node& nb = *self.inputs[1];
        const auto& g = self.grad;
        if (na.requires_grad) {
          auto& ga = na.ensure_grad();
          for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t j) {
            ga[i] += g[o] * da(na.value[i], nb.value[j]);
          });
        }
        if (nb.requires_grad) {
          auto& gb = nb.ensure_grad();
          for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t j) {
            gb[j] += g[o] * db(na.value[i], nb.value[j]);
          });
        }
      });
}

// Elementwise unary op whose derivative is expressed through input x and
// output y.
template <class Fwd, class Deriv>
Tensor unary(const char* op, const Tensor& x, Fwd fwd, Deriv deriv) {
  const auto xv = x.data();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
  return make_result(op, x.shape(), std::move(out), {x}, [deriv](Node& self) {
    Node& in = *self.inputs[0];
    auto& gi = in.ensure_grad();
    for (std::size_t i = 0; i < gi.size(); ++i) {
      gi[i] += self.grad[i] * deriv(in.value[i], self.value[i]);
    }
  });
}

// C[n,m] (+)= op(A) * op(B) on row-major buffers.
void gemm(const double* a, std::size_t a_rows, std::size_t a_cols, bool trans_a,
          const double* b, std::size_t b_rows, std::size_t b_cols, bool trans_b,
          double* c, bool accumulate) {
  ConstMap am(a, static_cast<Eigen::Index>(a_rows), static_cast<Eigen::Index>(a_cols));
  ConstMap bm(b, static_cast<Eigen::Index>(b_rows), static_cast<Eigen::Index>(b_cols));
  const Eigen::Index n = trans_a ? am.cols() : am.rows();
  const Eigen::Index m = trans_b ? bm.rows() : bm.cols();
  MutMap cm(c, n, m);
  if (accumulate) {
    if (trans_a && trans_b) {
      cm.noalias() += am.transpose() * bm.transpose();
    } else if (trans_a) {
      cm.noalias() += am.transpose() * bm;
    } else if (trans_b) {
      cm.noalias() += am * bm.transpose();
    } else {
      cm.noalias() += am * bm;
    }
    return;
  }
  if (trans_a && trans_b) {
    cm.noalias() = am.transpose() * bm.transpose();
  } else if (trans_a) {
    cm.noalias() = am.transpose() * bm;
  } else if (trans_b) {
    cm.noalias() = am * bm.transpose();
  } else {
    cm.noalias() = am * bm;
  }
}

// Draws inverted-dropout multipliers: 0 with probability p, 1/(1-p)
// otherwise. Uses 32-bit thresholds, two per engine draw.
class DropoutSampler {
 public:
  DropoutSampler(double p, std::mt19937_64& rng)
      : rng_(rng),
        threshold_(static_cast<std::uint64_t>(std::ldexp(p, 32))),
        keep_(1.0 / (1.0 - p)) {}

  double next() {
    if (remaining_ == 0) {
      bits_ = rng_();
      remaining_ = 2;
    }
    const std::uint64_t r = bits_ & 0xffffffffULL;
    bits_ >>= 32;
    --remaining_;
    return r < threshold_ ? 0.0 : keep_;
  }

 private:
  std::mt19937_64& rng_;
  std::uint64_t threshold_;
  double keep_;
  std::uint64_t bits_ = 0;
  int remaining_ = 0;
};

// Copies head `hi` of batch row `bi` out of a packed [b, t, 3d] qkv buffer.
void gather_head(const double* qkv, std::size_t bi, std::size_t hi, std::size_t t,
                 std::size_t d, std::size_t dh, double* q, double* k, double* v) {
  for (std::size_t i = 0; i < t; ++i) {
    const double* row = qkv + (bi * t + i) * 3 * d + hi * dh;
    std::copy_n(row, dh, q + i * dh);
    std::copy_n(row + d, dh, k + i * dh);
    std::copy_n(row + 2 * d, dh, v + i * dh);
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor scale(const Tensor& x, double factor) {
  return unary(
      "scale", x, [factor](double v) { return v * factor; },
      [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double offset) {
  return unary(
      "add_scalar", x, [offset](double v) { return v + offset; },
      [](double, double) { return 1.0; });
}

Tensor rsub_scalar(double offset, const Tensor& x) {
  return unary(
      "rsub_scalar", x, [offset](double v) { return offset - v; },
      [](double, double) { return -1.0; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() < 2 || sb.size() < 2) shape_mismatch("matmul", sa, sb);
  const std::size_t n = sa[sa.size() - 2], k = sa.back();
  const std::size_t kb = sb[sb.size() - 2], m = sb.back();
  if (k != kb) shape_mismatch("matmul", sa, sb);

  const bool shared_rhs = sb.size() == 2;
  if (!shared_rhs &&
      (sa.size() != sb.size() ||
       !std::equal(sa.begin(), sa.end() - 2, sb.begin()))) {
    shape_mismatch("matmul", sa, sb);
  }
  std::size_t batch = 1;
  for (std::size_t i = 0; i + 2 < sa.size(); ++i) batch *= sa[i];
  Shape out_shape(sa.begin(), sa.end() - 1);
  out_shape.push_back(m);
  std::vector<double> out(batch * n * m);
  const double* ap = a.data().data();
  const double* bp = b.data().data();

  if (shared_rhs) {
    gemm(ap, batch * n, k, false, bp, k, m, false, out.data(), false);
  } else {
    for (std::size_t i = 0; i < batch; ++i) {
      gemm(ap + i * n * k, n, k, false, bp + i * k * m, k, m, false,
           out.data() + i * n * m, false);
    }
  }

  return make_result(
      "matmul", std::move(out_shape), std::move(out), {a, b},
      [batch, n, k, m, shared_rhs](Node& self) {
        Node& na = *self.inputs[0];
        Node& nb = *self.inputs[1];
        const double* g = self.grad.data();
        if (shared_rhs) {
          if (na.requires_grad) {
            gemm(g, batch * n, m, false, nb.value.data(), k, m, true,
                 na.ensure_grad().data(), true);
          }
          if (nb.requires_grad) {
            gemm(na.value.data(), batch * n, k, true, g, batch * n, m, false,
                 nb.ensure_grad().data(), true);
          }
          return;
        }
        for (std::size_t i = 0; i < batch; ++i) {
          if (na.requires_grad) {
            gemm(g + i * n * m, n, m, false, nb.value.data() + i * k * m, k, m,
                 true, na.ensure_grad().data() + i * n * k, true);
          }
          if (nb.requires_grad) {
            gemm(na.value.data() + i * n * k, n, k, true, g + i * n * m, n, m,
                 false, nb.ensure_grad().data() + i * k * m, true);
          }
        }
      });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (w.rank() != 2 || b.rank() != 1 || b.dim(0) != w.dim(1) ||
      x.rank() < 1 || x.dim(-1) != w.dim(0)) {
    throw ShapeError("linear: incompatible shapes x" +
                     shape_to_string(x.shape()) + " w" +
                     shape_to_string(w.shape()) + " b" +
                     shape_to_string(b.shape()));
  }
  const std::size_t in = w.dim(0), outd = w.dim(1);
  const std::size_t rows = x.size() / in;
  Shape out_shape = x.shape();
  out_shape.back() = outd;
  std::vector<double> out(rows * outd);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy(b.data().begin(), b.data().end(), out.begin() + r * outd);
  }
  gemm(x.data().data(), rows, in, false, w.data().data(), in, outd, false,
       out.data(), true);
  return make_result(
      "linear", std::move(out_shape), std::move(out), {x, w, b},
      [rows, in, outd](Node& self) {
        Node& nx = *self.inputs[0];
        Node& nw = *self.inputs[1];
        Node& nb = *self.inputs[2];
        const double* g = self.grad.data();
        if (nx.requires_grad) {
          gemm(g, rows, outd, false, nw.value.data(), in, outd, true,
               nx.ensure_grad().data(), true);
        }
        if (nw.requires_grad) {
          gemm(nx.value.data(), rows, in, true, g, rows, outd, false,
               nw.ensure_grad().data(), true);
        }
        if (nb.requires_grad) {
          auto& gb = nb.ensure_grad();
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < outd; ++j) gb[j] += g[r * outd + j];
          }
        }
      });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      "sigmoid", x,
      [](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor log(const Tensor& x) {
  for (double v : x.data()) {
    if (!(v > 0.0)) {
      throw DomainError("log: non-positive input " + std::to_string(v));
    }
  }
  return unary(
      "log", x, [](double v) { return std::log(v); },
      [](double v, double) { return 1.0 / v; });
}

Tensor exp(const Tensor& x) {
  return unary(
      "exp", x, [](double v) { return std::exp(v); },
      [](double, double y) { return y; });
}

Tensor abs(const Tensor& x) {
  return unary(
      "abs", x, [](double v) { return std::abs(v); },
      [](double v, double) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
}

Tensor max_with_zero(const Tensor& x) {
  return unary(
      "max_with_zero", x, [](double v) { return v > 0 ? v : 0.0; },
      [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  if (!(lo <= hi)) throw DomainError("clamp: lo > hi");
  return unary(
      "clamp", x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v, double) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

Tensor softmax(const Tensor& x, int axis) {
  const std::size_t ax = normalize_axis(axis, x.rank(), "softmax");
  const AxisSplit s = split_at(x.shape(), ax);
  const auto xv = x.data();
  std::vector<double> out(xv.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.len * s.inner + in;
      double mx = xv[base];
      for (std::size_t l = 1; l < s.len; ++l) mx = std::max(mx, xv[base + l * s.inner]);
      double total = 0.0;
      for (std::size_t l = 0; l < s.len; ++l) {
        const double e = std::exp(xv[base + l * s.inner] - mx);
        out[base + l * s.inner] = e;
        total += e;
      }
      for (std::size_t l = 0; l < s.len; ++l) out[base + l * s.inner] /= total;
    }
  }
  return make_result("softmax", x.shape(), std::move(out), {x}, [s](Node& self) {
    auto& gi = self.inputs[0]->ensure_grad();
    const auto& y = self.value;
    const auto& g = self.grad;
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t in = 0; in < s.inner; ++in) {
        const std::size_t base = o * s.len * s.inner + in;
        double dot = 0.0;
        for (std::size_t l = 0; l < s.len; ++l) {
          const std::size_t i = base + l * s.inner;
          dot += g[i] * y[i];
        }
        for (std::size_t l = 0; l < s.len; ++l) {
          const std::size_t i = base + l * s.inner;
          gi[i] += y[i] * (g[i] - dot);
        }
      }
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  int axis, double eps) {
  const std::size_t ax = normalize_axis(axis, x.rank(), "layer_norm");
  const AxisSplit s = split_at(x.shape(), ax);
  if (gamma.shape() != Shape{s.len} || beta.shape() != Shape{s.len}) {
    throw ShapeError("layer_norm: gamma" + shape_to_string(gamma.shape()) +
                     "/beta" + shape_to_string(beta.shape()) +
                     " must be [" + std::to_string(s.len) + "] for input " +
                     shape_to_string(x.shape()));
  }
  const auto xv = x.data();
  const auto gv = gamma.data();
  const auto bv = beta.data();
  std::vector<double> out(xv.size());
  // Normalized activations and per-group inverse std are kept for backward.
  std::vector<double> xhat(xv.size());
  std::vector<double> inv_std(s.outer * s.inner);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.len * s.inner + in;
      double mu = 0.0;
      for (std::size_t l = 0; l < s.len; ++l) mu += xv[base + l * s.inner];
      mu /= static_cast<double>(s.len);
      double var = 0.0;
      for (std::size_t l = 0; l < s.len; ++l) {
        const double d = xv[base + l * s.inner] - mu;
        var += d * d;
      }
      var /= static_cast<double>(s.len);
      const double is = 1.0 / std::sqrt(var + eps);
      inv_std[o * s.inner + in] = is;
      for (std::size_t l = 0; l < s.len; ++l) {
        const std::size_t i = base + l * s.inner;
        xhat[i] = (xv[i] - mu) * is;
        out[i] = gv[l] * xhat[i] + bv[l];
      }
    }
  }
  return make_result(
      "layer_norm", x.shape(), std::move(out), {x, gamma, beta},
      [s, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
        Node& nx = *self.inputs[0];
        Node& ng = *self.inputs[1];
        Node& nb = *self.inputs[2];
        const auto& g = self.grad;
        const auto& gam = ng.value;
        const double len = static_cast<double>(s.len);
        for (std::size_t o = 0; o < s.outer; ++o) {
          for (std::size_t in = 0; in < s.inner; ++in) {
            const std::size_t base = o * s.len * s.inner + in;
            if (ng.requires_grad || nb.requires_grad) {
              auto& gg = ng.ensure_grad();
              auto& gb = nb.ensure_grad();
              for (std::size_t l = 0; l < s.len; ++l) {
                const std::size_t i = base + l * s.inner;
                gg[l] += g[i] * xhat[i];
                gb[l] += g[i];
              }
            }
            if (!nx.requires_grad) continue;
            auto& gx = nx.ensure_grad();
            double mean_d = 0.0, mean_dx = 0.0;
            for (std::size_t l = 0; l < s.len; ++l) {
              const std::size_t i = base + l * s.inner;
              const double d = g[i] * gam[l];
              mean_d += d;
              mean_dx += d * xhat[i];
            }
            mean_d /= len;
            mean_dx /= len;
            const double is = inv_std[o * s.inner + in];
            for (std::size_t l = 0; l < s.len; ++l) {
              const std::size_t i = base + l * s.inner;
              const double d = g[i] * gam[l];
              gx[i] += is * (d - mean_d - xhat[i] * mean_dx);
            }
          }
        }
      });
}

Tensor dropout(const Tensor& x, double p, bool train, std::mt19937_64* rng) {
  if (!(p >= 0.0 && p < 1.0)) {
    throw DomainError("dropout: p must lie in [0,1), got " + std::to_string(p));
  }
  if (!train || p == 0.0) return x;
  if (rng == nullptr) throw ContractError("dropout: train mode needs an rng");
  DropoutSampler sampler(p, *rng);
  const auto xv = x.data();
  std::vector<double> mask(xv.size());
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    mask[i] = sampler.next();
    out[i] = xv[i] * mask[i];
  }
  return make_result("dropout", x.shape(), std::move(out), {x},
                     [mask = std::move(mask)](Node& self) {
                       auto& gi = self.inputs[0]->ensure_grad();
                       for (std::size_t i = 0; i < gi.size(); ++i) {
                         gi[i] += self.grad[i] * mask[i];
                       }
                     });
}

Tensor causal_self_attention(const Tensor& qkv, std::size_t n_heads,
                             double dropout_p, bool train, std::mt19937_64* rng,
                             Tensor* weights_out) {
  if (qkv.rank() != 3 || n_heads == 0 || qkv.dim(2) % (3 * n_heads) != 0) {
    throw ShapeError("causal_self_attention: qkv " +
                     shape_to_string(qkv.shape()) +
                     " is not [batch, t, 3*d] with d divisible by " +
                     std::to_string(n_heads) + " heads");
  }
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) {
    throw DomainError("causal_self_attention: dropout must lie in [0,1)");
  }
  const bool drop = train && dropout_p > 0.0;
  if (drop && rng == nullptr) {
    throw ContractError("causal_self_attention: train mode needs an rng");
  }
  const std::size_t b = qkv.dim(0), t = qkv.dim(1), d = qkv.dim(2) / 3;
  const std::size_t h = n_heads, dh = d / h;
  const double scale_qk = 1.0 / std::sqrt(static_cast<double>(dh));
  const std::size_t tt = t * t;

  // Per (batch, head) attention weights before and after dropout.
  // Every entry is written below, so the buffers start uninitialized.
  std::shared_ptr<double[]> probs(new double[b * h * tt]);
  std::shared_ptr<double[]> dropped;
  if (drop) dropped.reset(new double[b * h * tt]);
  std::vector<double> out(b * t * d);
  std::vector<double> qh(t * dh), kh(t * dh), vh(t * dh), ctx(t * dh);
  const auto src = qkv.data();
  std::optional<DropoutSampler> sampler;
  if (drop) sampler.emplace(dropout_p, *rng);

  for (std::size_t bi = 0; bi < b; ++bi) {
    for (std::size_t hi = 0; hi < h; ++hi) {
      gather_head(src.data(), bi, hi, t, d, dh, qh.data(), kh.data(), vh.data());
      double* p = probs.get() + (bi * h + hi) * tt;
      gemm(qh.data(), t, dh, false, kh.data(), t, dh, true, p, false);
      for (std::size_t i = 0; i < t; ++i) {
        double* row = p + i * t;
        double mx = row[0] * scale_qk;
        for (std::size_t j = 0; j <= i; ++j) {
          row[j] *= scale_qk;
          mx = std::max(mx, row[j]);
        }
        double total = 0.0;
        for (std::size_t j = 0; j <= i; ++j) {
          row[j] = std::exp(row[j] - mx);
          total += row[j];
        }
        for (std::size_t j = 0; j <= i; ++j) row[j] /= total;
        std::fill(row + i + 1, row + t, 0.0);
      }
      const double* weights = p;
      if (drop) {
        double* pd = dropped.get() + (bi * h + hi) * tt;
        for (std::size_t i = 0; i < t; ++i) {
          for (std::size_t j = 0; j <= i; ++j) {
            pd[i * t + j] = p[i * t + j] * sampler->next();
          }
          std::fill(pd + i * t + i + 1, pd + (i + 1) * t, 0.0);
        }
        weights = pd;
      }
      gemm(weights, t, t, false, vh.data(), t, dh, false, ctx.data(), false);
      for (std::size_t i = 0; i < t; ++i) {
        std::copy_n(ctx.data() + i * dh, dh, out.data() + (bi * t + i) * d + hi * dh);
      }
    }
  }
  if (weights_out != nullptr) {
    *weights_out = Tensor::constant(
        {b, h, t, t}, std::vector<double>(probs.get(), probs.get() + b * h * tt));
  }

  return make_result(
      "causal_self_attention", {b, t, d}, std::move(out), {qkv},
      [b, t, d, h, dh, scale_qk, probs, dropped](Node& self) {
        Node& in = *self.inputs[0];
        auto& gqkv = in.ensure_grad();
        const std::size_t tt = t * t;
        std::vector<double> qh(t * dh), kh(t * dh), vh(t * dh);
        std::vector<double> gctx(t * dh), gq(t * dh), gk(t * dh), gv(t * dh);
        std::vector<double> gp(tt);
        for (std::size_t bi = 0; bi < b; ++bi) {
          for (std::size_t hi = 0; hi < h; ++hi) {
            gather_head(in.value.data(), bi, hi, t, d, dh, qh.data(), kh.data(),
                        vh.data());
            for (std::size_t i = 0; i < t; ++i) {
              std::copy_n(self.grad.data() + (bi * t + i) * d + hi * dh, dh,
                          gctx.data() + i * dh);
            }
            const double* p = probs.get() + (bi * h + hi) * tt;
            const double* pd = dropped ? dropped.get() + (bi * h + hi) * tt : p;
            // dV = Pd^T dCtx ; dPd = dCtx V^T
            gemm(pd, t, t, true, gctx.data(), t, dh, false, gv.data(), false);
            gemm(gctx.data(), t, dh, false, vh.data(), t, dh, true, gp.data(), false);
            for (std::size_t i = 0; i < t; ++i) {
              double* g = gp.data() + i * t;
              const double* pr = p + i * t;
              if (dropped) {
                // Chain through the dropout mask, recovered as pd / p.
                const double* pdr = pd + i * t;
                for (std::size_t j = 0; j <= i; ++j) {
                  g[j] = pr[j] > 0.0 ? g[j] * (pdr[j] / pr[j]) : 0.0;
                }
              }
              double dot = 0.0;
              for (std::size_t j = 0; j <= i; ++j) dot += g[j] * pr[j];
              for (std::size_t j = 0; j <= i; ++j) {
                g[j] = pr[j] * (g[j] - dot) * scale_qk;
              }
              std::fill(g + i + 1, g + t, 0.0);
            }
            // dQ = dS K ; dK = dS^T Q
            gemm(gp.data(), t, t, false, kh.data(), t, dh, false, gq.data(), false);
            gemm(gp.data(), t, t, true, qh.data(), t, dh, false, gk.data(), false);
            for (std::size_t i = 0; i < t; ++i) {
              double* row = gqkv.data() + (bi * t + i) * 3 * d + hi * dh;
              for (std::size_t c = 0; c < dh; ++c) {
                row[c] += gq[i * dh + c];
                row[d + c] += gk[i * dh + c];
                row[2 * d + c] += gv[i * dh + c];
              }
            }
          }
        }
      });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  const Shape& first = parts.front().shape();
  const std::size_t ax = normalize_axis(axis, first.size(), "concat");
  Shape out_shape = first;
  out_shape[ax] = 0;
  std::vector<std::size_t> lens;
  for (const auto& t : parts) {
    const Shape& s = t.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) {
      ok = (i == ax) || s[i] == first[i];
    }
    if (!ok) shape_mismatch("concat", first, s);
    out_shape[ax] += s[ax];
    lens.push_back(s[ax]);
  }
  const AxisSplit so = split_at(out_shape, ax);
  std::vector<double> out(num_elements(out_shape));
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto v = parts[p].data();
    const std::size_t chunk = lens[p] * so.inner;
    for (std::size_t o = 0; o < so.outer; ++o) {
      std::copy_n(v.begin() + o * chunk, chunk,
                  out.begin() + o * so.len * so.inner + offset * so.inner);
    }
    offset += lens[p];
  }
  return make_result("concat", out_shape, std::move(out), parts,
                     [so, lens](Node& self) {
                       std::size_t offset = 0;
                       for (std::size_t p = 0; p < lens.size(); ++p) {
                         Node& in = *self.inputs[p];
                         const std::size_t chunk = lens[p] * so.inner;
                         if (in.requires_grad) {
                           auto& gi = in.ensure_grad();
                           for (std::size_t o = 0; o < so.outer; ++o) {
                             const double* src = self.grad.data() +
                                                 o * so.len * so.inner +
                                                 offset * so.inner;
                             for (std::size_t j = 0; j < chunk; ++j) {
                               gi[o * chunk + j] += src[j];
                             }
                           }
                         }
                         offset += lens[p];
                       }
                     });
}

Tensor slice(const Tensor& x, int axis, std::size_t begin, std::size_t end) {
  const std::size_t ax = normalize_axis(axis, x.rank(), "slice");
  const AxisSplit s = split_at(x.shape(), ax);
  if (begin > end || end > s.len) {
    throw ShapeError("slice: range [" + std::to_string(begin) + "," +
                     std::to_string(end) + ") invalid for shape " +
                     shape_to_string(x.shape()));
  }
  Shape out_shape = x.shape();
  out_shape[ax] = end - begin;
  const std::size_t chunk = (end - begin) * s.inner;
  std::vector<double> out(s.outer * chunk);
  const auto xv = x.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy_n(xv.begin() + o * s.len * s.inner + begin * s.inner, chunk,
                out.begin() + o * chunk);
  }
  return make_result("slice", std::move(out_shape), std::move(out), {x},
                     [s, begin, chunk](Node& self) {
                       auto& gi = self.inputs[0]->ensure_grad();
                       for (std::size_t o = 0; o < s.outer; ++o) {
                         double* dst = gi.data() + o * s.len * s.inner +
                                       begin * s.inner;
                         for (std::size_t j = 0; j < chunk; ++j) {
                           dst[j] += self.grad[o * chunk + j];
                         }
                       }
                     });
}

Tensor sum(const Tensor& x, int axis) {
  const std::size_t ax = normalize_axis(axis, x.rank(), "sum");
  const AxisSplit s = split_at(x.shape(), ax);
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(ax));
  std::vector<double> out(s.outer * s.inner, 0.0);
  const auto xv = x.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t l = 0; l < s.len; ++l) {
      for (std::size_t in = 0; in < s.inner; ++in) {
        out[o * s.inner + in] += xv[(o * s.len + l) * s.inner + in];
      }
    }
  }
  return make_result("sum", std::move(out_shape), std::move(out), {x},
                     [s](Node& self) {
                       auto& gi = self.inputs[0]->ensure_grad();
                       for (std::size_t o = 0; o < s.outer; ++o) {
                         for (std::size_t l = 0; l < s.len; ++l) {
                           for (std::size_t in = 0; in < s.inner; ++in) {
                             gi[(o * s.len + l) * s.inner + in] +=
                                 self.grad[o * s.inner + in];
                           }
                         }
                       }
                     });
}

Tensor sum_all(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  return make_result("sum_all", {}, {total}, {x}, [](Node& self) {
    auto& gi = self.inputs[0]->ensure_grad();
    for (double& g : gi) g += self.grad[0];
  });
}

Tensor mean(const Tensor& x, int axis) {
  const std::size_t ax = normalize_axis(axis, x.rank(), "mean");
  const std::size_t len = x.shape()[ax];
  if (len == 0) throw ShapeError("mean: empty axis");
  return scale(sum(x, axis), 1.0 / static_cast<double>(len));
}

Tensor cumsum(const Tensor& x, int axis) {
  const std::size_t ax = normalize_axis(axis, x.rank(), "cumsum");
  const AxisSplit s = split_at(x.shape(), ax);
  const auto xv = x.data();
  std::vector<double> out(xv.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      double acc = 0.0;
      for (std::size_t l = 0; l < s.len; ++l) {
        const std::size_t i = (o * s.len + l) * s.inner + in;
        acc += xv[i];
        out[i] = acc;
      }
    }
  }
  return make_result("cumsum", x.shape(), std::move(out), {x}, [s](Node& self) {
    auto& gi = self.inputs[0]->ensure_grad();
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t in = 0; in < s.inner; ++in) {
        double acc = 0.0;
        for (std::size_t l = s.len; l-- > 0;) {
          const std::size_t i = (o * s.len + l) * s.inner + in;
          acc += self.grad[i];
          gi[i] += acc;
        }
      }
    }
  });
}

Tensor masked_fill(const Tensor& x, std::span<const std::uint8_t> mask,
                   const Shape& mask_shape, double value) {
  const Shape& xs = x.shape();
  const bool suffix =
      mask_shape.size() <= xs.size() &&
      std::equal(mask_shape.begin(), mask_shape.end(),
                 xs.end() - static_cast<std::ptrdiff_t>(mask_shape.size()));
  if (!suffix || mask.size() != num_elements(mask_shape)) {
    shape_mismatch("masked_fill", xs, mask_shape);
  }
  const std::size_t period = mask.size();
  const auto xv = x.data();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    out[i] = mask[i % period] ? value : xv[i];
  }
  std::vector<std::uint8_t> keep(mask.begin(), mask.end());
  return make_result("masked_fill", xs, std::move(out), {x},
                     [keep = std::move(keep)](Node& self) {
                       auto& gi = self.inputs[0]->ensure_grad();
                       const std::size_t period = keep.size();
                       for (std::size_t i = 0; i < gi.size(); ++i) {
                         if (!keep[i % period]) gi[i] += self.grad[i];
                       }
                     });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (num_elements(shape) != x.size()) shape_mismatch("reshape", x.shape(), shape);
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_result("reshape", std::move(shape), std::move(out), {x},
                     [](Node& self) {
                       auto& gi = self.inputs[0]->ensure_grad();
                       for (std::size_t i = 0; i < gi.size(); ++i) {
                         gi[i] += self.grad[i];
                       }
                     });
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& order) {
  const Shape& xs = x.shape();
  const std::size_t r = xs.size();
  std::vector<bool> used(r, false);
  bool valid = order.size() == r;
  for (std::size_t i = 0; valid && i < r; ++i) {
    valid = order[i] < r && !used[order[i]];
    if (valid) used[order[i]] = true;
  }
  if (!valid) throw ShapeError("permute: invalid axis order for shape " + shape_to_string(xs));

  Shape out_shape(r);
  for (std::size_t i = 0; i < r; ++i) out_shape[i] = xs[order[i]];
  const auto in_strides = contiguous_strides(xs);
  // Source stride for each output axis.
  std::vector<std::size_t> src(r);
  for (std::size_t i = 0; i < r; ++i) src[i] = in_strides[order[i]];

  const std::size_t n = x.size();
  std::vector<std::size_t> gather(n);
  {
    std::vector<std::size_t> idx(r, 0);
    std::size_t off = 0;
    for (std::size_t o = 0; o < n; ++o) {
      gather[o] = off;
      for (std::size_t ax = r; ax-- > 0;) {
        ++idx[ax];
        off += src[ax];
        if (idx[ax] < out_shape[ax]) break;
        off -= src[ax] * idx[ax];
        idx[ax] = 0;
      }
    }
  }
  const auto xv = x.data();
  std::vector<double> out(n);
  for (std::size_t o = 0; o < n; ++o) out[o] = xv[gather[o]];
  return make_result("permute", std::move(out_shape), std::move(out), {x},
                     [gather = std::move(gather)](Node& self) {
                       auto& gi = self.inputs[0]->ensure_grad();
                       for (std::size_t o = 0; o < gather.size(); ++o) {
                         gi[gather[o]] += self.grad[o];
                       }
                     });
}

}  // namespace dynst::ad
