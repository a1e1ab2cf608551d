#include "textsplat/diff/ops.hpp"

#include <algorithm>
#include <cmath>

namespace textsplat::diff {

namespace {

template <typename T>
using ImplPtr = std::shared_ptr<TensorImpl<T>>;

// Grad buffer of an input if it participates in differentiation.
template <typename T>
T* grad_of(const ImplPtr<T>& in) {
  if (!in->requires_grad) return nullptr;
  return in->grad_buffer().data();
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

template <typename T>
std::size_t last_dim(const Tensor<T>& x, const char* op) {
  if (x.rank() == 0) throw ShapeError(std::string(op) + ": expected rank >= 1");
  return x.shape().back();
}

template <typename T>
T sigmoid_scalar(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  auto ai = a.impl(), bi = b.impl();
  return make_result<T>(a.shape(), std::move(out), {ai, bi}, [ai, bi](const TensorImpl<T>& o) {
    for (auto* in : {&ai, &bi}) {
      if (T* g = grad_of(*in)) {
        for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
      }
    }
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "sub");
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  auto ai = a.impl(), bi = b.impl();
  return make_result<T>(a.shape(), std::move(out), {ai, bi}, [ai, bi](const TensorImpl<T>& o) {
    if (T* g = grad_of(ai)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
    }
    if (T* g = grad_of(bi)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] -= o.grad[i];
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  auto ai = a.impl(), bi = b.impl();
  return make_result<T>(a.shape(), std::move(out), {ai, bi}, [ai, bi](const TensorImpl<T>& o) {
    if (T* g = grad_of(ai)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] * bi->values[i];
    }
    if (T* g = grad_of(bi)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] * ai->values[i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * s;
  auto ai = a.impl();
  return make_result<T>(a.shape(), std::move(out), {ai}, [ai, s](const TensorImpl<T>& o) {
    if (T* g = grad_of(ai)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] * s;
    }
  });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T s) {
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + s;
  auto ai = a.impl();
  return make_result<T>(a.shape(), std::move(out), {ai}, [ai](const TensorImpl<T>& o) {
    if (T* g = grad_of(ai)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
    }
  });
}

template <typename T>
Tensor<T> add_rowvec(const Tensor<T>& x, const Tensor<T>& v) {
  const std::size_t d = last_dim(x, "add_rowvec");
  if (v.shape() != Shape{d}) {
    throw ShapeError("add_rowvec: vector " + shape_str(v.shape()) + " vs rows of " + shape_str(x.shape()));
  }
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + v[i % d];
  auto xi = x.impl(), vi = v.impl();
  return make_result<T>(x.shape(), std::move(out), {xi, vi}, [xi, vi, d](const TensorImpl<T>& o) {
    if (T* g = grad_of(xi)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
    }
    if (T* g = grad_of(vi)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i % d] += o.grad[i];
    }
  });
}

template <typename T>
Tensor<T> mul_rowvec(const Tensor<T>& x, const Tensor<T>& v) {
  const std::size_t d = last_dim(x, "mul_rowvec");
  if (v.shape() != Shape{d}) {
    throw ShapeError("mul_rowvec: vector " + shape_str(v.shape()) + " vs rows of " + shape_str(x.shape()));
  }
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * v[i % d];
  auto xi = x.impl(), vi = v.impl();
  return make_result<T>(x.shape(), std::move(out), {xi, vi}, [xi, vi, d](const TensorImpl<T>& o) {
    if (T* g = grad_of(xi)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] * vi->values[i % d];
    }
    if (T* g = grad_of(vi)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i % d] += o.grad[i] * xi->values[i];
    }
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T acc = T(0);
  for (T v : a.values()) acc += v;
  auto ai = a.impl();
  return make_result<T>({}, {acc}, {ai}, [ai](const TensorImpl<T>& o) {
    if (T* g = grad_of(ai)) {
      for (std::size_t i = 0; i < ai->values.size(); ++i) g[i] += o.grad[0];
    }
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  if (a.size() == 0) throw ShapeError("mean of empty tensor");
  return scale(sum(a), T(1) / static_cast<T>(a.size()));
}

template <typename T>
Tensor<T> dot_const(const Tensor<T>& a, std::span<const T> c) {
  if (c.size() != a.size()) {
    throw ShapeError("dot_const: " + std::to_string(c.size()) + " weights for tensor " + shape_str(a.shape()));
  }
  T acc = T(0);
  for (std::size_t i = 0; i < c.size(); ++i) acc += a[i] * c[i];
  auto ai = a.impl();
  std::vector<T> weights(c.begin(), c.end());
  return make_result<T>({}, {acc}, {ai}, [ai, weights = std::move(weights)](const TensorImpl<T>& o) {
    if (T* g = grad_of(ai)) {
      for (std::size_t i = 0; i < weights.size(); ++i) g[i] += o.grad[0] * weights[i];
    }
  });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (numel(shape) != a.size()) {
    throw ShapeError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
  }
  auto ai = a.impl();
  std::vector<T> out(a.values().begin(), a.values().end());
  return make_result<T>(std::move(shape), std::move(out), {ai}, [ai](const TensorImpl<T>& o) {
    if (T* g = grad_of(ai)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
    }
  });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  if (a.rank() != 2) throw ShapeError("transpose: expected rank 2, got " + shape_str(a.shape()));
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a[i * n + j];
  auto ai = a.impl();
  return make_result<T>({n, m}, std::move(out), {ai}, [ai, m, n](const TensorImpl<T>& o) {
    if (T* g = grad_of(ai)) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[i * n + j] += o.grad[j * m + i];
    }
  });
}

template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t rows = parts[0].rank() == 2 ? parts[0].dim(0) : 0;
  std::size_t cols = 0;
  std::vector<ImplPtr<T>> ins;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.dim(0) != rows) {
      throw ShapeError("concat_cols: incompatible part " + shape_str(p.shape()));
    }
    widths.push_back(p.dim(1));
    cols += p.dim(1);
    ins.push_back(p.impl());
  }
  std::vector<T> out(rows * cols);
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < widths[k]; ++c) out[r * cols + off + c] = parts[k][r * widths[k] + c];
    off += widths[k];
  }
  return make_result<T>({rows, cols}, std::move(out), ins, [ins, widths, rows, cols](const TensorImpl<T>& o) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < ins.size(); ++k) {
      if (T* g = grad_of(ins[k])) {
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < widths[k]; ++c) g[r * widths[k] + c] += o.grad[r * cols + off + c];
      }
      off += widths[k];
    }
  });
}

template <typename T>
Tensor<T> select_cols(const Tensor<T>& a, const std::vector<std::size_t>& cols) {
  if (a.rank() != 2) throw ShapeError("select_cols: expected rank 2, got " + shape_str(a.shape()));
  const std::size_t rows = a.dim(0), n = a.dim(1), k = cols.size();
  for (auto c : cols) {
    if (c >= n) throw ShapeError("select_cols: column " + std::to_string(c) + " out of range");
  }
  std::vector<T> out(rows * k);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < k; ++j) out[r * k + j] = a[r * n + cols[j]];
  auto ai = a.impl();
  return make_result<T>({rows, k}, std::move(out), {ai}, [ai, cols, rows, n, k](const TensorImpl<T>& o) {
    if (T* g = grad_of(ai)) {
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < k; ++j) g[r * n + cols[j]] += o.grad[r * k + j];
    }
  });
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& a, std::size_t begin, std::size_t count) {
  if (a.rank() != 2 || begin + count > a.dim(1)) {
    throw ShapeError("slice_cols: [" + std::to_string(begin) + "," + std::to_string(begin + count) +
                     ") out of " + shape_str(a.shape()));
  }
  std::vector<std::size_t> cols(count);
  for (std::size_t j = 0; j < count; ++j) cols[j] = begin + j;
  return select_cols(a, cols);
}

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, std::size_t begin, std::size_t count) {
  if (x.rank() != 3 || begin + count > x.dim(0)) {
    throw ShapeError("slice_channels: [" + std::to_string(begin) + "," + std::to_string(begin + count) +
                     ") out of " + shape_str(x.shape()));
  }
  const std::size_t plane = x.dim(1) * x.dim(2);
  std::vector<T> out(x.values().begin() + begin * plane, x.values().begin() + (begin + count) * plane);
  auto xi = x.impl();
  return make_result<T>({count, x.dim(1), x.dim(2)}, std::move(out), {xi},
                        [xi, begin, plane](const TensorImpl<T>& o) {
                          if (T* g = grad_of(xi)) {
                            for (std::size_t i = 0; i < o.grad.size(); ++i) g[begin * plane + i] += o.grad[i];
                          }
                        });
}

namespace {

// c[m,n] += a[m,k] * b[k,n]
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    T* ci = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[i * k + p];
      const T* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// c[m,k] += a[m,n] * b[k,n]^T
template <typename T>
void gemm_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      T acc = T(0);
      const T* ai = a + i * n;
      const T* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) acc += ai[j] * bp[j];
      c[i * k + p] += acc;
    }
  }
}

// c[k,n] += a[m,k]^T * b[m,n]
template <typename T>
void gemm_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* bi = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[i * k + p];
      T* cp = c + p * n;
      for (std::size_t j = 0; j < n; ++j) cp[j] += av * bi[j];
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() < 2 || b.rank() < 2) {
    throw ShapeError("matmul: operands must have rank >= 2, got " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  }
  const std::size_t m = a.dim(a.rank() - 2), k = a.dim(a.rank() - 1);
  const std::size_t kb = b.dim(b.rank() - 2), n = b.dim(b.rank() - 1);
  const Shape batch(a.shape().begin(), a.shape().end() - 2);
  const bool shared_b = b.rank() == 2;
  if (kb != k || (!shared_b && Shape(b.shape().begin(), b.shape().end() - 2) != batch)) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const std::size_t nb = numel(batch);
  Shape out_shape = batch;
  out_shape.push_back(m);
  out_shape.push_back(n);
  std::vector<T> out(nb * m * n, T(0));
  for (std::size_t s = 0; s < nb; ++s) {
    gemm_nn(a.values().data() + s * m * k, b.values().data() + (shared_b ? 0 : s * k * n), out.data() + s * m * n,
            m, k, n);
  }
  auto ai = a.impl(), bi = b.impl();
  return make_result<T>(std::move(out_shape), std::move(out), {ai, bi},
                        [ai, bi, nb, m, k, n, shared_b](const TensorImpl<T>& o) {
                          T* ga = grad_of(ai);
                          T* gb = grad_of(bi);
                          for (std::size_t s = 0; s < nb; ++s) {
                            const T* go = o.grad.data() + s * m * n;
                            const std::size_t boff = shared_b ? 0 : s * k * n;
                            if (ga) gemm_nt(go, bi->values.data() + boff, ga + s * m * k, m, n, k);
                            if (gb) gemm_tn(ai->values.data() + s * m * k, go, gb + boff, m, k, n);
                          }
                        });
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias) {
  return add_rowvec(matmul(x, w), bias);
}

template <typename T>
Tensor<T> exp(const Tensor<T>& x) {
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(x[i]);
  auto xi = x.impl();
  return make_result<T>(x.shape(), std::move(out), {xi}, [xi](const TensorImpl<T>& o) {
    if (T* g = grad_of(xi)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] * o.values[i];
    }
  });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = sigmoid_scalar(x[i]);
  auto xi = x.impl();
  return make_result<T>(x.shape(), std::move(out), {xi}, [xi](const TensorImpl<T>& o) {
    if (T* g = grad_of(xi)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] * o.values[i] * (T(1) - o.values[i]);
    }
  });
}

template <typename T>
Tensor<T> range_sigmoid(const Tensor<T>& x, T lo, T hi) {
  if (!(lo < hi)) throw std::invalid_argument("range_sigmoid: need lo < hi");
  const T first = std::nextafter(lo, hi), last = std::nextafter(hi, lo);
  const T span = hi - lo;
  std::vector<T> out(x.size()), sig(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    sig[i] = sigmoid_scalar(x[i]);
    out[i] = std::clamp(lo + span * sig[i], first, last);
  }
  auto xi = x.impl();
  return make_result<T>(x.shape(), std::move(out), {xi}, [xi, sig = std::move(sig), span](const TensorImpl<T>& o) {
    if (T* g = grad_of(xi)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] * span * sig[i] * (T(1) - sig[i]);
    }
  });
}

template <typename T>
Tensor<T> silu(const Tensor<T>& x) {
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * sigmoid_scalar(x[i]);
  auto xi = x.impl();
  return make_result<T>(x.shape(), std::move(out), {xi}, [xi](const TensorImpl<T>& o) {
    if (T* g = grad_of(xi)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) {
        const T v = xi->values[i];
        const T s = sigmoid_scalar(v);
        g[i] += o.grad[i] * (s + v * s * (T(1) - s));
      }
    }
  });
}

template <typename T>
Tensor<T> activation(const Tensor<T>& x, Activation kind) {
  return kind == Activation::silu ? silu(x) : sigmoid(x);
}

template <typename T>
Tensor<T> softmax_lastdim(const Tensor<T>& x) {
  const std::size_t k = last_dim(x, "softmax_lastdim");
  if (k == 0) throw ShapeError("softmax_lastdim: empty last axis");
  const std::size_t rows = x.size() / k;
  std::vector<T> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x.values().data() + r * k;
    T* yr = out.data() + r * k;
    T mx = xr[0];
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, xr[j]);
    T total = T(0);
    for (std::size_t j = 0; j < k; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      total += yr[j];
    }
    for (std::size_t j = 0; j < k; ++j) yr[j] /= total;
  }
  auto xi = x.impl();
  return make_result<T>(x.shape(), std::move(out), {xi}, [xi, rows, k](const TensorImpl<T>& o) {
    if (T* g = grad_of(xi)) {
      for (std::size_t r = 0; r < rows; ++r) {
        const T* y = o.values.data() + r * k;
        const T* gy = o.grad.data() + r * k;
        T dot = T(0);
        for (std::size_t j = 0; j < k; ++j) dot += gy[j] * y[j];
        for (std::size_t j = 0; j < k; ++j) g[r * k + j] += y[j] * (gy[j] - dot);
      }
    }
  });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
  const std::size_t d = last_dim(x, "layer_norm");
  if (gamma.shape() != Shape{d} || beta.shape() != Shape{d}) {
    throw ShapeError("layer_norm: affine parameters " + shape_str(gamma.shape()) + "/" +
                     shape_str(beta.shape()) + " do not match width " + std::to_string(d));
  }
  const std::size_t rows = x.size() / d;
  std::vector<T> out(x.size());
  std::vector<T> xhat(x.size());
  std::vector<T> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x.values().data() + r * d;
    T mu = T(0);
    for (std::size_t j = 0; j < d; ++j) mu += xr[j];
    mu /= static_cast<T>(d);
    T var = T(0);
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<T>(d);
    const T is = T(1) / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t j = 0; j < d; ++j) {
      xhat[r * d + j] = (xr[j] - mu) * is;
      out[r * d + j] = xhat[r * d + j] * gamma[j] + beta[j];
    }
  }
  auto xi = x.impl(), gi = gamma.impl(), bi = beta.impl();
  return make_result<T>(
      x.shape(), std::move(out), {xi, gi, bi},
      [xi, gi, bi, rows, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](const TensorImpl<T>& o) {
        T* gx = grad_of(xi);
        T* gg = grad_of(gi);
        T* gb = grad_of(bi);
        for (std::size_t r = 0; r < rows; ++r) {
          const T* gy = o.grad.data() + r * d;
          const T* xh = xhat.data() + r * d;
          if (gg)
            for (std::size_t j = 0; j < d; ++j) gg[j] += gy[j] * xh[j];
          if (gb)
            for (std::size_t j = 0; j < d; ++j) gb[j] += gy[j];
          if (gx) {
            T mean_g = T(0), mean_gx = T(0);
            for (std::size_t j = 0; j < d; ++j) {
              const T dxh = gy[j] * gi->values[j];
              mean_g += dxh;
              mean_gx += dxh * xh[j];
            }
            mean_g /= static_cast<T>(d);
            mean_gx /= static_cast<T>(d);
            for (std::size_t j = 0; j < d; ++j) {
              const T dxh = gy[j] * gi->values[j];
              gx[r * d + j] += inv_std[r] * (dxh - mean_g - xh[j] * mean_gx);
            }
          }
        }
      });
}

template <typename T>
Tensor<T> conv2d_3x3(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  if (x.rank() != 3) throw ShapeError("conv2d_3x3: input must be [C,H,W], got " + shape_str(x.shape()));
  const std::size_t cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
  if (w.rank() != 4 || w.dim(1) != cin || w.dim(2) != 3 || w.dim(3) != 3) {
    throw ShapeError("conv2d_3x3: channel mismatch, input " + shape_str(x.shape()) + " weight " +
                     shape_str(w.shape()));
  }
  const std::size_t cout = w.dim(0);
  if (b.shape() != Shape{cout}) throw ShapeError("conv2d_3x3: bias " + shape_str(b.shape()));
  const std::size_t hw = h * wd;
  std::vector<T> out(cout * hw);
  const T* xv = x.values().data();
  const T* wv = w.values().data();
  for (std::size_t co = 0; co < cout; ++co) {
    T* oc = out.data() + co * hw;
    std::fill(oc, oc + hw, b[co]);
    for (std::size_t ci = 0; ci < cin; ++ci) {
      const T* xc = xv + ci * hw;
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          const T k = wv[((co * cin + ci) * 3 + ky) * 3 + kx];
          const int dy = ky - 1, dx = kx - 1;
          const std::size_t y0 = dy < 0 ? 1 : 0, y1 = dy > 0 ? h - 1 : h;
          const std::size_t x0 = dx < 0 ? 1 : 0, x1 = dx > 0 ? wd - 1 : wd;
          for (std::size_t yy = y0; yy < y1; ++yy) {
            T* orow = oc + yy * wd;
            const T* irow = xc + (yy + dy) * wd + dx;
            for (std::size_t xx = x0; xx < x1; ++xx) orow[xx] += k * irow[xx];
          }
        }
      }
    }
  }
  auto xi = x.impl(), wi = w.impl(), bi = b.impl();
  return make_result<T>({cout, h, wd}, std::move(out), {xi, wi, bi},
                        [xi, wi, bi, cin, cout, h, wd, hw](const TensorImpl<T>& o) {
                          T* gx = grad_of(xi);
                          T* gw = grad_of(wi);
                          T* gb = grad_of(bi);
                          const T* xv = xi->values.data();
                          const T* wv = wi->values.data();
                          for (std::size_t co = 0; co < cout; ++co) {
                            const T* go = o.grad.data() + co * hw;
                            if (gb) {
                              T acc = T(0);
                              for (std::size_t i = 0; i < hw; ++i) acc += go[i];
                              gb[co] += acc;
                            }
                            for (std::size_t ci = 0; ci < cin; ++ci) {
                              for (int ky = 0; ky < 3; ++ky) {
                                for (int kx = 0; kx < 3; ++kx) {
                                  const std::size_t widx = ((co * cin + ci) * 3 + ky) * 3 + kx;
                                  const int dy = ky - 1, dx = kx - 1;
                                  const std::size_t y0 = dy < 0 ? 1 : 0, y1 = dy > 0 ? h - 1 : h;
                                  const std::size_t x0 = dx < 0 ? 1 : 0, x1 = dx > 0 ? wd - 1 : wd;
                                  T acc = T(0);
                                  const T k = wv[widx];
                                  for (std::size_t yy = y0; yy < y1; ++yy) {
                                    const T* grow = go + yy * wd;
                                    const std::size_t ioff = ci * hw + (yy + dy) * wd + dx;
                                    if (gw)
                                      for (std::size_t xx = x0; xx < x1; ++xx) acc += grow[xx] * xv[ioff + xx];
                                    if (gx)
                                      for (std::size_t xx = x0; xx < x1; ++xx) gx[ioff + xx] += k * grow[xx];
                                  }
                                  if (gw) gw[widx] += acc;
                                }
                              }
                            }
                          }
                        });
}

namespace {

// Align-corners mapping of a normalized coordinate to a texel lower index and
// fractional weight. `clamped` reports that the coordinate was outside [-1,1].
template <typename T>
void corner_index(T u, std::size_t extent, std::size_t& i0, std::size_t& i1, T& frac, bool& clamped) {
  clamped = u < T(-1) || u > T(1);
  const T uc = std::clamp(u, T(-1), T(1));
  if (extent == 1) {
    i0 = i1 = 0;
    frac = T(0);
    return;
  }
  const T pos = (uc + T(1)) * T(0.5) * static_cast<T>(extent - 1);
  std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  lo = std::min(lo, extent - 2);
  i0 = lo;
  i1 = lo + 1;
  frac = pos - static_cast<T>(lo);
}

}  // namespace

template <typename T>
Tensor<T> grid_sample_bilinear(const Tensor<T>& plane, const Tensor<T>& coords) {
  if (plane.rank() != 3) throw ShapeError("grid_sample_bilinear: plane must be [C,H,W], got " + shape_str(plane.shape()));
  if (coords.rank() != 2 || coords.dim(1) != 2) {
    throw ShapeError("grid_sample_bilinear: coords must be [M,2], got " + shape_str(coords.shape()));
  }
  const std::size_t c = plane.dim(0), h = plane.dim(1), w = plane.dim(2), m = coords.dim(0);
  const std::size_t hw = h * w;
  std::vector<T> out(m * c);
  const T* pv = plane.values().data();
  for (std::size_t i = 0; i < m; ++i) {
    std::size_t x0, x1, y0, y1;
    T fx, fy;
    bool cx, cy;
    corner_index(coords[i * 2 + 0], w, x0, x1, fx, cx);
    corner_index(coords[i * 2 + 1], h, y0, y1, fy, cy);
    const T w00 = (T(1) - fx) * (T(1) - fy), w01 = fx * (T(1) - fy);
    const T w10 = (T(1) - fx) * fy, w11 = fx * fy;
    for (std::size_t ch = 0; ch < c; ++ch) {
      const T* p = pv + ch * hw;
      out[i * c + ch] = w00 * p[y0 * w + x0] + w01 * p[y0 * w + x1] + w10 * p[y1 * w + x0] + w11 * p[y1 * w + x1];
    }
  }
  auto pi = plane.impl(), ci = coords.impl();
  return make_result<T>({m, c}, std::move(out), {pi, ci}, [pi, ci, c, h, w, m, hw](const TensorImpl<T>& o) {
    T* gp = grad_of(pi);
    T* gc = grad_of(ci);
    const T* pv = pi->values.data();
    // Derivative of the align-corners map with respect to the coordinate.
    const T sx = w > 1 ? T(0.5) * static_cast<T>(w - 1) : T(0);
    const T sy = h > 1 ? T(0.5) * static_cast<T>(h - 1) : T(0);
    for (std::size_t i = 0; i < m; ++i) {
      std::size_t x0, x1, y0, y1;
      T fx, fy;
      bool cx, cy;
      corner_index(ci->values[i * 2 + 0], w, x0, x1, fx, cx);
      corner_index(ci->values[i * 2 + 1], h, y0, y1, fy, cy);
      const T w00 = (T(1) - fx) * (T(1) - fy), w01 = fx * (T(1) - fy);
      const T w10 = (T(1) - fx) * fy, w11 = fx * fy;
      T dfx = T(0), dfy = T(0);
      for (std::size_t ch = 0; ch < c; ++ch) {
        const T g = o.grad[i * c + ch];
        const std::size_t base = ch * hw;
        if (gp) {
          gp[base + y0 * w + x0] += g * w00;
          gp[base + y0 * w + x1] += g * w01;
          gp[base + y1 * w + x0] += g * w10;
          gp[base + y1 * w + x1] += g * w11;
        }
        const T p00 = pv[base + y0 * w + x0], p01 = pv[base + y0 * w + x1];
        const T p10 = pv[base + y1 * w + x0], p11 = pv[base + y1 * w + x1];
        dfx += g * ((p01 - p00) * (T(1) - fy) + (p11 - p10) * fy);
        dfy += g * ((p10 - p00) * (T(1) - fx) + (p11 - p01) * fx);
      }
      if (gc) {
        if (!cx) gc[i * 2 + 0] += dfx * sx;
        if (!cy) gc[i * 2 + 1] += dfy * sy;
      }
    }
  });
}

namespace {

struct Lerp1d {
  std::size_t i0, i1;
  double frac;
};

std::vector<Lerp1d> upsample_taps(std::size_t in) {
  std::vector<Lerp1d> taps(2 * in);
  for (std::size_t o = 0; o < 2 * in; ++o) {
    double src = (static_cast<double>(o) + 0.5) * 0.5 - 0.5;
    if (src < 0.0) src = 0.0;
    auto i0 = static_cast<std::size_t>(src);
    i0 = std::min(i0, in - 1);
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    taps[o] = {i0, i1, src - static_cast<double>(i0)};
  }
  return taps;
}

}  // namespace

template <typename T>
Tensor<T> upsample2x_bilinear(const Tensor<T>& x) {
  if (x.rank() != 3 || x.dim(1) == 0 || x.dim(2) == 0) {
    throw ShapeError("upsample2x_bilinear: input must be non-empty [C,H,W], got " + shape_str(x.shape()));
  }
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t oh = 2 * h, ow = 2 * w;
  auto ty = upsample_taps(h);
  auto tx = upsample_taps(w);
  std::vector<T> out(c * oh * ow);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const T* p = x.values().data() + ch * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      const auto& a = ty[oy];
      const T fy = static_cast<T>(a.frac);
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const auto& bt = tx[ox];
        const T fx = static_cast<T>(bt.frac);
        out[(ch * oh + oy) * ow + ox] =
            (T(1) - fy) * ((T(1) - fx) * p[a.i0 * w + bt.i0] + fx * p[a.i0 * w + bt.i1]) +
            fy * ((T(1) - fx) * p[a.i1 * w + bt.i0] + fx * p[a.i1 * w + bt.i1]);
      }
    }
  }
  auto xi = x.impl();
  return make_result<T>({c, oh, ow}, std::move(out), {xi},
                        [xi, c, h, w, oh, ow, ty = std::move(ty), tx = std::move(tx)](const TensorImpl<T>& o) {
                          T* g = grad_of(xi);
                          if (!g) return;
                          for (std::size_t ch = 0; ch < c; ++ch) {
                            T* gp = g + ch * h * w;
                            for (std::size_t oy = 0; oy < oh; ++oy) {
                              const auto& a = ty[oy];
                              const T fy = static_cast<T>(a.frac);
                              for (std::size_t ox = 0; ox < ow; ++ox) {
                                const auto& bt = tx[ox];
                                const T fx = static_cast<T>(bt.frac);
                                const T go = o.grad[(ch * oh + oy) * ow + ox];
                                gp[a.i0 * w + bt.i0] += go * (T(1) - fy) * (T(1) - fx);
                                gp[a.i0 * w + bt.i1] += go * (T(1) - fy) * fx;
                                gp[a.i1 * w + bt.i0] += go * fy * (T(1) - fx);
                                gp[a.i1 * w + bt.i1] += go * fy * fx;
                              }
                            }
                          }
                        });
}

template <typename T>
Tensor<T> chw_to_rows(const Tensor<T>& x) {
  if (x.rank() != 3) throw ShapeError("chw_to_rows: expected [C,H,W], got " + shape_str(x.shape()));
  const std::size_t c = x.dim(0), hw = x.dim(1) * x.dim(2);
  std::vector<T> out(x.size());
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t p = 0; p < hw; ++p) out[p * c + ch] = x[ch * hw + p];
  auto xi = x.impl();
  return make_result<T>({hw, c}, std::move(out), {xi}, [xi, c, hw](const TensorImpl<T>& o) {
    if (T* g = grad_of(xi)) {
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t p = 0; p < hw; ++p) g[ch * hw + p] += o.grad[p * c + ch];
    }
  });
}

template <typename T>
Tensor<T> rows_to_chw(const Tensor<T>& x, std::size_t h, std::size_t w) {
  if (x.rank() != 2 || x.dim(0) != h * w) {
    throw ShapeError("rows_to_chw: " + shape_str(x.shape()) + " is not " + std::to_string(h * w) + " rows");
  }
  const std::size_t c = x.dim(1), hw = h * w;
  std::vector<T> out(x.size());
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t p = 0; p < hw; ++p) out[ch * hw + p] = x[p * c + ch];
  auto xi = x.impl();
  return make_result<T>({c, h, w}, std::move(out), {xi}, [xi, c, hw](const TensorImpl<T>& o) {
    if (T* g = grad_of(xi)) {
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t p = 0; p < hw; ++p) g[p * c + ch] += o.grad[ch * hw + p];
    }
  });
}

template <typename T>
Tensor<T> normalize_rows_or_identity(const Tensor<T>& q, T min_norm) {
  if (q.rank() != 2 || q.dim(1) == 0) {
    throw ShapeError("normalize_rows_or_identity: expected [M,K], got " + shape_str(q.shape()));
  }
  const std::size_t m = q.dim(0), k = q.dim(1);
  std::vector<T> out(q.size(), T(0));
  std::vector<T> norms(m);
  for (std::size_t i = 0; i < m; ++i) {
    T n2 = T(0);
    for (std::size_t j = 0; j < k; ++j) n2 += q[i * k + j] * q[i * k + j];
    norms[i] = std::sqrt(n2);
    if (norms[i] < min_norm) {
      out[i * k] = T(1);
    } else {
      for (std::size_t j = 0; j < k; ++j) out[i * k + j] = q[i * k + j] / norms[i];
    }
  }
  auto qi = q.impl();
  return make_result<T>(q.shape(), std::move(out), {qi},
                        [qi, m, k, min_norm, norms = std::move(norms)](const TensorImpl<T>& o) {
                          T* g = grad_of(qi);
                          if (!g) return;
                          for (std::size_t i = 0; i < m; ++i) {
                            if (norms[i] < min_norm) continue;
                            const T* y = o.values.data() + i * k;
                            const T* gy = o.grad.data() + i * k;
                            T dot = T(0);
                            for (std::size_t j = 0; j < k; ++j) dot += gy[j] * y[j];
                            for (std::size_t j = 0; j < k; ++j) g[i * k + j] += (gy[j] - dot * y[j]) / norms[i];
                          }
                        });
}

#define TEXTSPLAT_INSTANTIATE_OPS(T)                                                                     \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                            \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                            \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                            \
  template Tensor<T> scale(const Tensor<T>&, T);                                                         \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                                    \
  template Tensor<T> add_rowvec(const Tensor<T>&, const Tensor<T>&);                                     \
  template Tensor<T> mul_rowvec(const Tensor<T>&, const Tensor<T>&);                                     \
  template Tensor<T> sum(const Tensor<T>&);                                                              \
  template Tensor<T> mean(const Tensor<T>&);                                                             \
  template Tensor<T> dot_const(const Tensor<T>&, std::span<const T>);                                    \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                                   \
  template Tensor<T> transpose(const Tensor<T>&);                                                        \
  template Tensor<T> concat_cols(const std::vector<Tensor<T>>&);                                         \
  template Tensor<T> slice_cols(const Tensor<T>&, std::size_t, std::size_t);                             \
  template Tensor<T> select_cols(const Tensor<T>&, const std::vector<std::size_t>&);                     \
  template Tensor<T> slice_channels(const Tensor<T>&, std::size_t, std::size_t);                         \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                         \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                       \
  template Tensor<T> exp(const Tensor<T>&);                                                              \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                          \
  template Tensor<T> silu(const Tensor<T>&);                                                             \
  template Tensor<T> range_sigmoid(const Tensor<T>&, T, T);                                              \
  template Tensor<T> activation(const Tensor<T>&, Activation);                                           \
  template Tensor<T> softmax_lastdim(const Tensor<T>&);                                                  \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);                \
  template Tensor<T> conv2d_3x3(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                   \
  template Tensor<T> grid_sample_bilinear(const Tensor<T>&, const Tensor<T>&);                           \
  template Tensor<T> upsample2x_bilinear(const Tensor<T>&);                                              \
  template Tensor<T> chw_to_rows(const Tensor<T>&);                                                      \
  template Tensor<T> rows_to_chw(const Tensor<T>&, std::size_t, std::size_t);                            \
  template Tensor<T> normalize_rows_or_identity(const Tensor<T>&, T);

TEXTSPLAT_INSTANTIATE_OPS(float)
TEXTSPLAT_INSTANTIATE_OPS(double)

}  // namespace textsplat::diff
