#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "egomesh/error.hpp"
#include "egomesh/tensor.hpp"

namespace egomesh {

namespace {

using detail::Node;

void accumulate(Node& input, std::span<const double> g) {
  if (!input.requires_grad) return;
  auto& buf = input.grad_buffer();
  for (std::size_t i = 0; i < g.size(); ++i) buf[i] += g[i];
}

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

enum class Expand { kNone, kRight, kLeft };

Expand expansion(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return Expand::kNone;
  if (is_suffix(b.shape(), a.shape())) return Expand::kRight;
  if (is_suffix(a.shape(), b.shape())) return Expand::kLeft;
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) +
                       " and " + shape_str(b.shape()));
}

// Elementwise binary op with leading-batch expansion of the smaller operand.
// da(x, y) / db(x, y) are the partial derivatives. Element i of the result
// pairs a[i % na] with b[i % nb].
template <class F, class Da, class Db>
Tensor binary(const Tensor& a, const Tensor& b, const char* name, F f, Da da, Db db) {
  const Expand ex = expansion(a, b, name);
  const Tensor& big = ex == Expand::kLeft ? b : a;
  const std::size_t n = big.numel();
  const std::size_t na = a.numel();
  const std::size_t nb = b.numel();
  const double* av = a.values().data();
  const double* bv = b.values().data();
  std::vector<double> out(n);
  for (std::size_t base = 0; base < n; base += std::min(na, nb)) {
    const double* ap = na == n ? av + base : av;
    const double* bp = nb == n ? bv + base : bv;
    const std::size_t w = std::min(na, nb);
    for (std::size_t j = 0; j < w; ++j) out[base + j] = f(ap[j], bp[j]);
  }
  return make_op(big.shape(), std::move(out), {a, b}, [na, nb, n, da, db](Node& self) {
    Node& an = *self.inputs[0];
    Node& bn = *self.inputs[1];
    const std::size_t w = std::min(na, nb);
    const double* g = self.grad.data();
    if (an.requires_grad) {
      double* ga = an.grad_buffer().data();
      for (std::size_t base = 0; base < n; base += w) {
        const double* ap = na == n ? an.value.data() + base : an.value.data();
        const double* bp = nb == n ? bn.value.data() + base : bn.value.data();
        double* gp = na == n ? ga + base : ga;
        for (std::size_t j = 0; j < w; ++j) gp[j] += g[base + j] * da(ap[j], bp[j]);
      }
    }
    if (bn.requires_grad) {
      double* gb = bn.grad_buffer().data();
      for (std::size_t base = 0; base < n; base += w) {
        const double* ap = na == n ? an.value.data() + base : an.value.data();
        const double* bp = nb == n ? bn.value.data() + base : bn.value.data();
        double* gp = nb == n ? gb + base : gb;
        for (std::size_t j = 0; j < w; ++j) gp[j] += g[base + j] * db(ap[j], bp[j]);
      }
    }
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.values().begin(), a.values().end());
  for (double& v : out) v *= factor;
  return make_op(a.shape(), std::move(out), {a}, [factor](Node& self) {
    Node& in = *self.inputs[0];
    auto& g = in.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
  });
}

Tensor abs(const Tensor& a) {
  std::vector<double> out(a.values().begin(), a.values().end());
  for (double& v : out) v = std::fabs(v);
  return make_op(a.shape(), std::move(out), {a}, [](Node& self) {
    Node& in = *self.inputs[0];
    auto& g = in.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double x = in.value[i];
      const double s = x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
      g[i] += s * self.grad[i];
    }
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  auto mismatch = [&]() {
    return DimensionError("matmul: incompatible shapes " + shape_str(sa) + " and " +
                          shape_str(sb));
  };
  if (sa.size() < 2 || sb.size() < 2) throw mismatch();
  const std::size_t m = sa[sa.size() - 2];
  const std::size_t k = sa.back();
  if (sb[sb.size() - 2] != k) throw mismatch();
  const std::size_t n = sb.back();

  Shape out_shape(sa.begin(), sa.end() - 1);
  out_shape.push_back(n);

  if (sb.size() == 2) {
    // Shared right operand: one flattened product.
    const std::size_t rows = a.numel() / k;
    std::vector<double> out(rows * n, 0.0);
    kernels::gemm_nn(rows, k, n, a.values().data(), b.values().data(), out.data());
    return make_op(std::move(out_shape), std::move(out), {a, b}, [rows, k, n](Node& self) {
      Node& an = *self.inputs[0];
      Node& bn = *self.inputs[1];
      if (an.requires_grad)
        kernels::gemm_nt(rows, n, k, self.grad.data(), bn.value.data(),
                         an.grad_buffer().data());
      if (bn.requires_grad)
        kernels::gemm_tn(k, rows, n, an.value.data(), self.grad.data(),
                         bn.grad_buffer().data());
    });
  }

  if (sa.size() != sb.size() || !std::equal(sa.begin(), sa.end() - 2, sb.begin())) {
    throw mismatch();
  }
  const std::size_t batch = a.numel() / (m * k);
  std::vector<double> out(batch * m * n, 0.0);
  const double* av = a.values().data();
  const double* bv = b.values().data();
  for (std::size_t t = 0; t < batch; ++t) {
    kernels::gemm_nn(m, k, n, av + t * m * k, bv + t * k * n, out.data() + t * m * n);
  }
  return make_op(std::move(out_shape), std::move(out), {a, b}, [batch, m, k, n](Node& self) {
    Node& an = *self.inputs[0];
    Node& bn = *self.inputs[1];
    for (std::size_t t = 0; t < batch; ++t) {
      const double* g = self.grad.data() + t * m * n;
      if (an.requires_grad)
        kernels::gemm_nt(m, n, k, g, bn.value.data() + t * k * n,
                         an.grad_buffer().data() + t * m * k);
      if (bn.requires_grad)
        kernels::gemm_tn(k, m, n, an.value.data() + t * m * k, g,
                         bn.grad_buffer().data() + t * k * n);
    }
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                         shape_str(shape));
  }
  std::vector<double> out(a.values().begin(), a.values().end());
  return make_op(std::move(shape), std::move(out), {a},
                 [](Node& self) { accumulate(*self.inputs[0], self.grad); });
}

Tensor permute(const Tensor& a, const std::vector<std::size_t>& axes) {
  const Shape& in_shape = a.shape();
  const std::size_t r = in_shape.size();
  if (axes.size() != r) {
    throw DimensionError("permute: " + std::to_string(axes.size()) + " axes for rank " +
                         std::to_string(r) + " tensor");
  }
  std::vector<bool> seen(r, false);
  for (std::size_t ax : axes) {
    if (ax >= r || seen[ax]) throw DimensionError("permute: invalid axis permutation");
    seen[ax] = true;
  }
  std::vector<std::size_t> in_strides(r, 1);
  for (std::size_t i = r - 1; i-- > 0;) in_strides[i] = in_strides[i + 1] * in_shape[i + 1];
  Shape out_shape(r);
  std::vector<std::size_t> strides(r);
  for (std::size_t i = 0; i < r; ++i) {
    out_shape[i] = in_shape[axes[i]];
    strides[i] = in_strides[axes[i]];
  }

  const std::size_t n = a.numel();
  auto src = std::make_shared<std::vector<std::size_t>>(n);
  std::vector<std::size_t> counter(r, 0);
  std::size_t offset = 0;
  for (std::size_t i = 0; i < n; ++i) {
    (*src)[i] = offset;
    for (std::size_t d = r; d-- > 0;) {
      offset += strides[d];
      if (++counter[d] < out_shape[d]) break;
      offset -= strides[d] * out_shape[d];
      counter[d] = 0;
    }
  }
  const auto av = a.values();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = av[(*src)[i]];
  return make_op(std::move(out_shape), std::move(out), {a}, [src](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < src->size(); ++i) g[(*src)[i]] += self.grad[i];
  });
}

Tensor transpose(const Tensor& a) {
  const std::size_t r = a.rank();
  if (r < 2) throw DimensionError("transpose needs rank >= 2, got " + shape_str(a.shape()));
  std::vector<std::size_t> axes(r);
  std::iota(axes.begin(), axes.end(), 0);
  std::swap(axes[r - 1], axes[r - 2]);
  return permute(a, axes);
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end) {
  const Shape& s = a.shape();
  if (axis >= s.size() || begin >= end || end > s[axis]) {
    throw DimensionError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") on axis " + std::to_string(axis) + " of " + shape_str(s));
  }
  std::size_t outer = 1;
  std::size_t inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t len = s[axis];
  const std::size_t width = end - begin;
  Shape out_shape = s;
  out_shape[axis] = width;
  const auto av = a.values();
  std::vector<double> out(outer * width * inner);
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(av.begin() + static_cast<std::ptrdiff_t>((o * len + begin) * inner),
                width * inner, out.begin() + static_cast<std::ptrdiff_t>(o * width * inner));
  }
  return make_op(std::move(out_shape), std::move(out), {a},
                 [outer, inner, len, width, begin](Node& self) {
                   auto& g = self.inputs[0]->grad_buffer();
                   for (std::size_t o = 0; o < outer; ++o) {
                     const double* src = self.grad.data() + o * width * inner;
                     double* dst = g.data() + (o * len + begin) * inner;
                     for (std::size_t i = 0; i < width * inner; ++i) dst[i] += src[i];
                   }
                 });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat of zero tensors");
  const Shape& s0 = parts[0].shape();
  if (axis >= s0.size()) throw DimensionError("concat: axis out of range for " + shape_str(s0));
  std::size_t outer = 1;
  std::size_t inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s0[i];
  for (std::size_t i = axis + 1; i < s0.size(); ++i) inner *= s0[i];
  std::vector<std::size_t> lens;
  std::size_t total = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == s0.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = i == axis || s[i] == s0[i];
    if (!ok) {
      throw DimensionError("concat: shape " + shape_str(s) + " incompatible with " +
                           shape_str(s0) + " along axis " + std::to_string(axis));
    }
    lens.push_back(s[axis]);
    total += s[axis];
  }
  Shape out_shape = s0;
  out_shape[axis] = total;
  std::vector<double> out(outer * total * inner);
  std::size_t at = 0;
  for (std::size_t pi = 0; pi < parts.size(); ++pi) {
    const auto pv = parts[pi].values();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(pv.begin() + static_cast<std::ptrdiff_t>(o * lens[pi] * inner),
                  lens[pi] * inner,
                  out.begin() + static_cast<std::ptrdiff_t>((o * total + at) * inner));
    }
    at += lens[pi];
  }
  return make_op(std::move(out_shape), std::move(out), parts,
                 [outer, inner, total, lens](Node& self) {
                   std::size_t at = 0;
                   for (std::size_t pi = 0; pi < lens.size(); ++pi) {
                     Node& in = *self.inputs[pi];
                     if (in.requires_grad) {
                       auto& g = in.grad_buffer();
                       for (std::size_t o = 0; o < outer; ++o) {
                         const double* src = self.grad.data() + (o * total + at) * inner;
                         double* dst = g.data() + o * lens[pi] * inner;
                         for (std::size_t i = 0; i < lens[pi] * inner; ++i) dst[i] += src[i];
                       }
                     }
                     at += lens[pi];
                   }
                 });
}

Tensor softmax_rows(const Tensor& x) {
  const std::size_t c = x.shape().back();
  const std::size_t rows = x.numel() / c;
  const auto xv = x.values();
  std::vector<double> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.data() + r * c;
    double* o = out.data() + r * c;
    const double mx = *std::max_element(in, in + c);
    double total = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      o[j] = std::exp(in[j] - mx);
      total += o[j];
    }
    const double inv = 1.0 / total;
    for (std::size_t j = 0; j < c; ++j) o[j] *= inv;
  }
  return make_op(x.shape(), std::move(out), {x}, [rows, c](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.value.data() + r * c;
      const double* gy = self.grad.data() + r * c;
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += y[j] * gy[j];
      double* gx = g.data() + r * c;
      for (std::size_t j = 0; j < c; ++j) gx[j] += y[j] * (gy[j] - dot);
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::size_t d = x.shape().back();
  if (gamma.shape() != Shape{d} || beta.shape() != Shape{d}) {
    throw DimensionError("layer_norm: gamma " + shape_str(gamma.shape()) + " / beta " +
                         shape_str(beta.shape()) + " do not match last axis of " +
                         shape_str(x.shape()));
  }
  const std::size_t rows = x.numel() / d;
  const auto xv = x.values();
  const auto gv = gamma.values();
  const auto bv = beta.values();
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  std::vector<double> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += in[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (in[j] - mu) * (in[j] - mu);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (in[j] - mu) * is;
      (*xhat)[r * d + j] = h;
      out[r * d + j] = gv[j] * h + bv[j];
    }
  }
  return make_op(x.shape(), std::move(out), {x, gamma, beta},
                 [rows, d, xhat, inv_std](Node& self) {
                   Node& xn = *self.inputs[0];
                   Node& gn = *self.inputs[1];
                   Node& bn = *self.inputs[2];
                   const auto& g = self.grad;
                   if (gn.requires_grad || bn.requires_grad) {
                     auto& gg = gn.grad_buffer();
                     auto& gb = bn.grad_buffer();
                     for (std::size_t r = 0; r < rows; ++r) {
                       for (std::size_t j = 0; j < d; ++j) {
                         gg[j] += g[r * d + j] * (*xhat)[r * d + j];
                         gb[j] += g[r * d + j];
                       }
                     }
                   }
                   if (xn.requires_grad) {
                     auto& gx = xn.grad_buffer();
                     std::vector<double> dh(d);
                     for (std::size_t r = 0; r < rows; ++r) {
                       double mean_dh = 0.0;
                       double mean_dh_h = 0.0;
                       for (std::size_t j = 0; j < d; ++j) {
                         dh[j] = g[r * d + j] * gn.value[j];
                         mean_dh += dh[j];
                         mean_dh_h += dh[j] * (*xhat)[r * d + j];
                       }
                       mean_dh /= static_cast<double>(d);
                       mean_dh_h /= static_cast<double>(d);
                       const double is = (*inv_std)[r];
                       for (std::size_t j = 0; j < d; ++j) {
                         gx[r * d + j] +=
                             is * (dh[j] - mean_dh - (*xhat)[r * d + j] * mean_dh_h);
                       }
                     }
                   }
                 });
}

Tensor gelu(const Tensor& x) {
  const auto xv = x.values();
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = 0.5 * xv[i] * (1.0 + std::erf(xv[i] * std::numbers::sqrt2 * 0.5));
  }
  return make_op(x.shape(), std::move(out), {x}, [](Node& self) {
    Node& in = *self.inputs[0];
    auto& g = in.grad_buffer();
    const double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = in.value[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 * 0.5));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
      g[i] += self.grad[i] * (cdf + v * pdf);
    }
  });
}

Tensor sum(const Tensor& x) {
  const auto xv = x.values();
  double total = 0.0;
  for (double v : xv) total += v;
  return make_op({1}, {total}, {x}, [](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (double& v : g) v += self.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  const double inv = 1.0 / static_cast<double>(x.numel());
  const auto xv = x.values();
  double total = 0.0;
  for (double v : xv) total += v;
  return make_op({1}, {total * inv}, {x}, [inv](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (double& v : g) v += self.grad[0] * inv;
  });
}

Tensor mean_rows(const Tensor& x) {
  const Shape& s = x.shape();
  if (s.size() < 2) throw DimensionError("mean_rows needs rank >= 2, got " + shape_str(s));
  const std::size_t n = s[0];
  const std::size_t w = x.numel() / n;
  const double inv = 1.0 / static_cast<double>(n);
  const auto xv = x.values();
  std::vector<double> out(w, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < w; ++j) out[j] += xv[r * w + j];
  for (double& v : out) v *= inv;
  return make_op(Shape(s.begin() + 1, s.end()), std::move(out), {x}, [n, w, inv](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t j = 0; j < w; ++j) g[r * w + j] += self.grad[j] * inv;
  });
}

Tensor gather_rows(const Tensor& table, std::span<const std::size_t> indices) {
  const Shape& s = table.shape();
  const std::size_t rows = s[0];
  const std::size_t w = table.numel() / rows;
  if (indices.empty()) throw DimensionError("gather_rows with no indices");
  for (std::size_t idx : indices) {
    if (idx >= rows) {
      throw IndexError("gather_rows: index " + std::to_string(idx) + " out of range [0, " +
                       std::to_string(rows) + ")");
    }
  }
  auto idx = std::make_shared<std::vector<std::size_t>>(indices.begin(), indices.end());
  const auto tv = table.values();
  std::vector<double> out(idx->size() * w);
  for (std::size_t i = 0; i < idx->size(); ++i) {
    std::copy_n(tv.begin() + static_cast<std::ptrdiff_t>((*idx)[i] * w), w,
                out.begin() + static_cast<std::ptrdiff_t>(i * w));
  }
  Shape out_shape = s;
  out_shape[0] = idx->size();
  return make_op(std::move(out_shape), std::move(out), {table}, [idx, w](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < idx->size(); ++i) {
      const double* src = self.grad.data() + i * w;
      double* dst = g.data() + (*idx)[i] * w;
      for (std::size_t j = 0; j < w; ++j) dst[j] += src[j];
    }
  });
}

}  // namespace egomesh
