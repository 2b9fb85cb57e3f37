#include "exitrack/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "exitrack/numerics/kernels.hpp"

namespace exitrack::num {

namespace {

template <class T>
using ImplPtr = std::shared_ptr<TensorImpl<T>>;

template <class T>
bool needs_grad(std::initializer_list<const BasicTensor<T>*> inputs) {
  if (!GradMode::enabled()) return false;
  return std::any_of(inputs.begin(), inputs.end(), [](const BasicTensor<T>* t) { return t->defined() && t->requires_grad(); });
}

template <class T>
BasicTensor<T> make_output(Shape shape, bool track) {
  BasicTensor<T> out(std::move(shape));
  out.set_requires_grad(track);
  return out;
}

template <class T, class Step>
void record(Step&& step) {
  Tape<T>::local().record(std::forward<Step>(step));
}

template <class T>
void require_defined(const BasicTensor<T>& t, const char* op) {
  if (!t.defined()) throw ContractError(std::string(op) + ": undefined tensor operand");
}

template <class T>
void require_rank(const BasicTensor<T>& t, std::size_t rank, const char* op) {
  require_defined(t, op);
  if (t.rank() != rank)
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                         to_string(t.shape()));
}

template <class T>
void require_same_shape(const BasicTensor<T>& a, const BasicTensor<T>& b, const char* op) {
  require_defined(a, op);
  require_defined(b, op);
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
}

// Shared skeleton for same-shape binary elementwise ops. `forward(x, y)`
// gives the value; `partials(x, y, out)` returns {d/dx, d/dy}.
template <class T, class Forward, class Partials>
BasicTensor<T> binary_elementwise(const BasicTensor<T>& a, const BasicTensor<T>& b, const char* name, Forward forward,
                                  Partials partials) {
  require_same_shape(a, b, name);
  const bool track = needs_grad<T>({&a, &b});
  auto out = make_output<T>(a.shape(), track);
  auto ad = a.data();
  auto bd = b.data();
  auto od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = forward(ad[i], bd[i]);
  if (track) {
    record<T>([ai = a.impl(), bi = b.impl(), oi = out.impl(), partials] {
      if (oi->grad.empty()) return;
      const std::size_t n = oi->data.size();
      T* ga = ai->requires_grad ? ai->grad_buffer() : nullptr;
      T* gb = bi->requires_grad ? bi->grad_buffer() : nullptr;
      for (std::size_t i = 0; i < n; ++i) {
        const auto [da, db] = partials(ai->data[i], bi->data[i], oi->data[i]);
        if (ga) ga[i] += oi->grad[i] * da;
        if (gb) gb[i] += oi->grad[i] * db;
      }
    });
  }
  return out;
}

// Unary elementwise skeleton; `derivative(x, y)` is dy/dx.
template <class T, class Forward, class Derivative>
BasicTensor<T> unary_elementwise(const BasicTensor<T>& x, const char* name, Forward forward, Derivative derivative) {
  require_defined(x, name);
  const bool track = needs_grad<T>({&x});
  auto out = make_output<T>(x.shape(), track);
  auto xd = x.data();
  auto od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = forward(xd[i]);
  if (track) {
    record<T>([xi = x.impl(), oi = out.impl(), derivative] {
      if (oi->grad.empty() || !xi->requires_grad) return;
      T* gx = xi->grad_buffer();
      for (std::size_t i = 0; i < oi->data.size(); ++i) gx[i] += oi->grad[i] * derivative(xi->data[i], oi->data[i]);
    });
  }
  return out;
}

template <class T>
T stable_sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

}  // namespace

template <class T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k)
    throw DimensionError("matmul: inner extents differ for " + to_string(a.shape()) + " x " + to_string(b.shape()));
  const bool track = needs_grad<T>({&a, &b});
  auto out = make_output<T>({m, n}, track);
  kernels::gemm_nn(m, n, k, a.data().data(), b.data().data(), out.data().data(), false);
  if (track) {
    record<T>([ai = a.impl(), bi = b.impl(), oi = out.impl(), m, n, k] {
      if (oi->grad.empty()) return;
      if (ai->requires_grad) kernels::gemm_nt(m, k, n, oi->grad.data(), bi->data.data(), ai->grad_buffer(), true);
      if (bi->requires_grad) kernels::gemm_tn(k, n, m, ai->data.data(), oi->grad.data(), bi->grad_buffer(), true);
    });
  }
  return out;
}

template <class T>
BasicTensor<T> matmul_nt(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_rank(a, 2, "matmul_nt");
  require_rank(b, 2, "matmul_nt");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  if (b.dim(1) != k)
    throw DimensionError("matmul_nt: inner extents differ for " + to_string(a.shape()) + " x " +
                         to_string(b.shape()) + "^T");
  const bool track = needs_grad<T>({&a, &b});
  auto out = make_output<T>({m, n}, track);
  kernels::gemm_nt(m, n, k, a.data().data(), b.data().data(), out.data().data(), false);
  if (track) {
    record<T>([ai = a.impl(), bi = b.impl(), oi = out.impl(), m, n, k] {
      if (oi->grad.empty()) return;
      if (ai->requires_grad) kernels::gemm_nn(m, k, n, oi->grad.data(), bi->data.data(), ai->grad_buffer(), true);
      if (bi->requires_grad) kernels::gemm_tn(n, k, m, oi->grad.data(), ai->data.data(), bi->grad_buffer(), true);
    });
  }
  return out;
}

template <class T>
BasicTensor<T> linear(const BasicTensor<T>& x, const BasicTensor<T>& weight, const BasicTensor<T>& bias) {
  require_rank(x, 2, "linear");
  require_rank(weight, 2, "linear");
  const std::size_t rows = x.dim(0), in = x.dim(1), out_dim = weight.dim(1);
  if (weight.dim(0) != in)
    throw DimensionError("linear: input " + to_string(x.shape()) + " does not match weight " +
                         to_string(weight.shape()));
  if (bias.defined() && bias.size() != out_dim)
    throw DimensionError("linear: bias " + to_string(bias.shape()) + " does not match weight " +
                         to_string(weight.shape()));
  const bool track = needs_grad<T>({&x, &weight, &bias});
  auto out = make_output<T>({rows, out_dim}, track);
  T* od = out.data().data();
  kernels::gemm_nn(rows, out_dim, in, x.data().data(), weight.data().data(), od, false);
  if (bias.defined()) {
    const T* bd = bias.data().data();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < out_dim; ++j) od[r * out_dim + j] += bd[j];
  }
  if (track) {
    ImplPtr<T> bi = bias.defined() ? bias.impl() : nullptr;
    record<T>([xi = x.impl(), wi = weight.impl(), bi, oi = out.impl(), rows, in, out_dim] {
      if (oi->grad.empty()) return;
      const T* g = oi->grad.data();
      if (xi->requires_grad) kernels::gemm_nt(rows, in, out_dim, g, wi->data.data(), xi->grad_buffer(), true);
      if (wi->requires_grad) kernels::gemm_tn(in, out_dim, rows, xi->data.data(), g, wi->grad_buffer(), true);
      if (bi && bi->requires_grad) {
        T* gb = bi->grad_buffer();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < out_dim; ++j) gb[j] += g[r * out_dim + j];
      }
    });
  }
  return out;
}

template <class T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return binary_elementwise(
      a, b, "add", [](T x, T y) { return x + y; }, [](T, T, T) { return std::pair<T, T>{T(1), T(1)}; });
}

template <class T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return binary_elementwise(
      a, b, "sub", [](T x, T y) { return x - y; }, [](T, T, T) { return std::pair<T, T>{T(1), T(-1)}; });
}

template <class T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return binary_elementwise(
      a, b, "mul", [](T x, T y) { return x * y; }, [](T x, T y, T) { return std::pair<T, T>{y, x}; });
}

template <class T>
BasicTensor<T> div(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return binary_elementwise(
      a, b, "div", [](T x, T y) { return x / y; },
      [](T, T y, T out) { return std::pair<T, T>{T(1) / y, -out / y}; });
}

template <class T>
BasicTensor<T> minimum(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return binary_elementwise(
      a, b, "minimum", [](T x, T y) { return x <= y || x != x ? x : y; },
      [](T x, T y, T) { return x <= y ? std::pair<T, T>{T(1), T(0)} : std::pair<T, T>{T(0), T(1)}; });
}

template <class T>
BasicTensor<T> maximum(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return binary_elementwise(
      a, b, "maximum", [](T x, T y) { return x >= y || x != x ? x : y; },
      [](T x, T y, T) { return x >= y ? std::pair<T, T>{T(1), T(0)} : std::pair<T, T>{T(0), T(1)}; });
}

template <class T>
BasicTensor<T> scale(const BasicTensor<T>& x, T factor) {
  return unary_elementwise(
      x, "scale", [factor](T v) { return v * factor; }, [factor](T, T) { return factor; });
}

template <class T>
BasicTensor<T> add_scalar(const BasicTensor<T>& x, T value) {
  return unary_elementwise(
      x, "add_scalar", [value](T v) { return v + value; }, [](T, T) { return T(1); });
}

template <class T>
BasicTensor<T> add_rowvec(const BasicTensor<T>& x, const BasicTensor<T>& v) {
  require_defined(x, "add_rowvec");
  require_defined(v, "add_rowvec");
  const std::size_t d = x.shape().back();
  if (v.size() != d)
    throw DimensionError("add_rowvec: vector " + to_string(v.shape()) + " does not match trailing axis of " +
                         to_string(x.shape()));
  const bool track = needs_grad<T>({&x, &v});
  auto out = make_output<T>(x.shape(), track);
  const std::size_t rows = x.size() / d;
  auto xd = x.data();
  auto vd = v.data();
  auto od = out.data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < d; ++j) od[r * d + j] = xd[r * d + j] + vd[j];
  if (track) {
    record<T>([xi = x.impl(), vi = v.impl(), oi = out.impl(), rows, d] {
      if (oi->grad.empty()) return;
      const T* g = oi->grad.data();
      if (xi->requires_grad) {
        T* gx = xi->grad_buffer();
        for (std::size_t i = 0; i < rows * d; ++i) gx[i] += g[i];
      }
      if (vi->requires_grad) {
        T* gv = vi->grad_buffer();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < d; ++j) gv[j] += g[r * d + j];
      }
    });
  }
  return out;
}

template <class T>
BasicTensor<T> mul_rowvec(const BasicTensor<T>& x, const BasicTensor<T>& v) {
  require_defined(x, "mul_rowvec");
  require_defined(v, "mul_rowvec");
  const std::size_t d = x.shape().back();
  if (v.size() != d)
    throw DimensionError("mul_rowvec: vector " + to_string(v.shape()) + " does not match trailing axis of " +
                         to_string(x.shape()));
  const bool track = needs_grad<T>({&x, &v});
  auto out = make_output<T>(x.shape(), track);
  const std::size_t rows = x.size() / d;
  auto xd = x.data();
  auto vd = v.data();
  auto od = out.data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < d; ++j) od[r * d + j] = xd[r * d + j] * vd[j];
  if (track) {
    record<T>([xi = x.impl(), vi = v.impl(), oi = out.impl(), rows, d] {
      if (oi->grad.empty()) return;
      const T* g = oi->grad.data();
      if (xi->requires_grad) {
        T* gx = xi->grad_buffer();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < d; ++j) gx[r * d + j] += g[r * d + j] * vi->data[j];
      }
      if (vi->requires_grad) {
        T* gv = vi->grad_buffer();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < d; ++j) gv[j] += g[r * d + j] * xi->data[r * d + j];
      }
    });
  }
  return out;
}

template <class T>
BasicTensor<T> mul_colvec(const BasicTensor<T>& x, const BasicTensor<T>& c) {
  require_rank(x, 2, "mul_colvec");
  require_defined(c, "mul_colvec");
  const std::size_t rows = x.dim(0), d = x.dim(1);
  if (c.size() != rows)
    throw DimensionError("mul_colvec: column " + to_string(c.shape()) + " does not match rows of " +
                         to_string(x.shape()));
  const bool track = needs_grad<T>({&x, &c});
  auto out = make_output<T>(x.shape(), track);
  auto xd = x.data();
  auto cd = c.data();
  auto od = out.data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < d; ++j) od[r * d + j] = xd[r * d + j] * cd[r];
  if (track) {
    record<T>([xi = x.impl(), ci = c.impl(), oi = out.impl(), rows, d] {
      if (oi->grad.empty()) return;
      const T* g = oi->grad.data();
      if (xi->requires_grad) {
        T* gx = xi->grad_buffer();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < d; ++j) gx[r * d + j] += g[r * d + j] * ci->data[r];
      }
      if (ci->requires_grad) {
        T* gc = ci->grad_buffer();
        for (std::size_t r = 0; r < rows; ++r) {
          T acc = T(0);
          for (std::size_t j = 0; j < d; ++j) acc += g[r * d + j] * xi->data[r * d + j];
          gc[r] += acc;
        }
      }
    });
  }
  return out;
}

template <class T>
BasicTensor<T> sum(const BasicTensor<T>& x) {
  require_defined(x, "sum");
  const bool track = needs_grad<T>({&x});
  auto out = make_output<T>({1}, track);
  auto xd = x.data();
  out.data()[0] = std::accumulate(xd.begin(), xd.end(), T(0));
  if (track) {
    record<T>([xi = x.impl(), oi = out.impl()] {
      if (oi->grad.empty() || !xi->requires_grad) return;
      T* gx = xi->grad_buffer();
      for (std::size_t i = 0; i < xi->data.size(); ++i) gx[i] += oi->grad[0];
    });
  }
  return out;
}

template <class T>
BasicTensor<T> mean(const BasicTensor<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.size()));
}

template <class T>
BasicTensor<T> sum_rows(const BasicTensor<T>& x) {
  require_rank(x, 2, "sum_rows");
  const std::size_t rows = x.dim(0), d = x.dim(1);
  const bool track = needs_grad<T>({&x});
  auto out = make_output<T>({d}, track);
  auto xd = x.data();
  auto od = out.data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < d; ++j) od[j] += xd[r * d + j];
  if (track) {
    record<T>([xi = x.impl(), oi = out.impl(), rows, d] {
      if (oi->grad.empty() || !xi->requires_grad) return;
      T* gx = xi->grad_buffer();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < d; ++j) gx[r * d + j] += oi->grad[j];
    });
  }
  return out;
}

template <class T>
BasicTensor<T> softmax(const BasicTensor<T>& x, std::size_t axis) {
  require_defined(x, "softmax");
  if (axis >= x.rank())
    throw DimensionError("softmax: axis " + std::to_string(axis) + " out of range for " + to_string(x.shape()));
  const Shape& shape = x.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
  const std::size_t len = shape[axis];
  const bool track = needs_grad<T>({&x});
  auto out = make_output<T>(shape, track);
  const T* xd = x.data().data();
  T* yd = out.data().data();
  if (inner == 1) {
    kernels::softmax_rows(outer, len, xd, yd);
  } else {
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * len * inner + in;
        T hi = xd[base];
        for (std::size_t l = 1; l < len; ++l) hi = std::max(hi, xd[base + l * inner]);
        T total = T(0);
        for (std::size_t l = 0; l < len; ++l) {
          yd[base + l * inner] = std::exp(xd[base + l * inner] - hi);
          total += yd[base + l * inner];
        }
        for (std::size_t l = 0; l < len; ++l) yd[base + l * inner] /= total;
      }
  }
  if (track) {
    record<T>([xi = x.impl(), oi = out.impl(), outer, inner, len] {
      if (oi->grad.empty() || !xi->requires_grad) return;
      T* gx = xi->grad_buffer();
      const T* g = oi->grad.data();
      const T* y = oi->data.data();
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t in = 0; in < inner; ++in) {
          const std::size_t base = o * len * inner + in;
          T dot = T(0);
          for (std::size_t l = 0; l < len; ++l) dot += g[base + l * inner] * y[base + l * inner];
          for (std::size_t l = 0; l < len; ++l) {
            const std::size_t idx = base + l * inner;
            gx[idx] += y[idx] * (g[idx] - dot);
          }
        }
    });
  }
  return out;
}

template <class T>
BasicTensor<T> layer_norm(const BasicTensor<T>& x, const BasicTensor<T>& gain, const BasicTensor<T>& bias, T eps) {
  require_defined(x, "layer_norm");
  const std::size_t d = x.shape().back();
  if (gain.size() != d || bias.size() != d)
    throw DimensionError("layer_norm: gain " + to_string(gain.shape()) + " / bias " + to_string(bias.shape()) +
                         " must match trailing axis of " + to_string(x.shape()));
  const std::size_t rows = x.size() / d;
  const bool track = needs_grad<T>({&x, &gain, &bias});
  auto out = make_output<T>(x.shape(), track);
  std::vector<T> xhat(x.size());
  std::vector<T> inv_std(rows);
  kernels::normalize_rows(rows, d, x.data().data(), eps, xhat.data(), inv_std.data());
  auto od = out.data();
  auto gd = gain.data();
  auto bd = bias.data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < d; ++j) od[r * d + j] = xhat[r * d + j] * gd[j] + bd[j];
  if (track) {
    record<T>([xi = x.impl(), gi = gain.impl(), bi = bias.impl(), oi = out.impl(), xhat = std::move(xhat),
               inv_std = std::move(inv_std), rows, d] {
      if (oi->grad.empty()) return;
      const T* g = oi->grad.data();
      if (gi->requires_grad) {
        T* gg = gi->grad_buffer();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < d; ++j) gg[j] += g[r * d + j] * xhat[r * d + j];
      }
      if (bi->requires_grad) {
        T* gb = bi->grad_buffer();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < d; ++j) gb[j] += g[r * d + j];
      }
      if (xi->requires_grad) {
        T* gx = xi->grad_buffer();
        const T inv_d = T(1) / static_cast<T>(d);
        for (std::size_t r = 0; r < rows; ++r) {
          T sum_dxhat = T(0), sum_dxhat_xhat = T(0);
          for (std::size_t j = 0; j < d; ++j) {
            const T dxhat = g[r * d + j] * gi->data[j];
            sum_dxhat += dxhat;
            sum_dxhat_xhat += dxhat * xhat[r * d + j];
          }
          for (std::size_t j = 0; j < d; ++j) {
            const T dxhat = g[r * d + j] * gi->data[j];
            gx[r * d + j] += inv_std[r] * (dxhat - inv_d * sum_dxhat - xhat[r * d + j] * inv_d * sum_dxhat_xhat);
          }
        }
      }
    });
  }
  return out;
}

template <class T>
BasicTensor<T> gelu(const BasicTensor<T>& x) {
  constexpr T c = T(0.7978845608028654);  // sqrt(2/pi)
  constexpr T a = T(0.044715);
  return unary_elementwise(
      x, "gelu",
      [](T v) { return T(0.5) * v * (T(1) + std::tanh(c * (v + a * v * v * v))); },
      [](T v, T) {
        const T t = std::tanh(c * (v + a * v * v * v));
        return T(0.5) * (T(1) + t) + T(0.5) * v * (T(1) - t * t) * c * (T(1) + T(3) * a * v * v);
      });
}

template <class T>
BasicTensor<T> relu(const BasicTensor<T>& x) {
  return unary_elementwise(
      x, "relu", [](T v) { return v < T(0) ? T(0) : v; }, [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <class T>
BasicTensor<T> sigmoid(const BasicTensor<T>& x) {
  return unary_elementwise(
      x, "sigmoid", [](T v) { return stable_sigmoid(v); }, [](T, T y) { return y * (T(1) - y); });
}

template <class T>
BasicTensor<T> abs(const BasicTensor<T>& x) {
  return unary_elementwise(
      x, "abs", [](T v) { return std::abs(v); },
      [](T v, T) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); });
}

template <class T>
BasicTensor<T> clamp(const BasicTensor<T>& x, T lo, T hi) {
  return unary_elementwise(
      x, "clamp", [lo, hi](T v) { return std::clamp(v, lo, hi); },
      [lo, hi](T v, T) { return (v >= lo && v <= hi) ? T(1) : T(0); });
}

template <class T>
BasicTensor<T> transpose(const BasicTensor<T>& x) {
  require_rank(x, 2, "transpose");
  const std::size_t m = x.dim(0), n = x.dim(1);
  const bool track = needs_grad<T>({&x});
  auto out = make_output<T>({n, m}, track);
  auto xd = x.data();
  auto od = out.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) od[j * m + i] = xd[i * n + j];
  if (track) {
    record<T>([xi = x.impl(), oi = out.impl(), m, n] {
      if (oi->grad.empty() || !xi->requires_grad) return;
      T* gx = xi->grad_buffer();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += oi->grad[j * m + i];
    });
  }
  return out;
}

template <class T>
BasicTensor<T> reshape(const BasicTensor<T>& x, Shape shape) {
  require_defined(x, "reshape");
  if (numel(shape) != x.size())
    throw DimensionError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  const bool track = needs_grad<T>({&x});
  BasicTensor<T> out(std::move(shape), std::vector<T>(x.data().begin(), x.data().end()), track);
  if (track) {
    record<T>([xi = x.impl(), oi = out.impl()] {
      if (oi->grad.empty() || !xi->requires_grad) return;
      T* gx = xi->grad_buffer();
      for (std::size_t i = 0; i < oi->grad.size(); ++i) gx[i] += oi->grad[i];
    });
  }
  return out;
}

template <class T>
BasicTensor<T> slice(const BasicTensor<T>& x, std::size_t axis, std::size_t begin, std::size_t end) {
  require_defined(x, "slice");
  if (axis > 1 || (axis == 1 && x.rank() != 2))
    throw DimensionError("slice: axis " + std::to_string(axis) + " unsupported for " + to_string(x.shape()));
  if (begin >= end || end > x.dim(axis))
    throw DimensionError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") invalid for axis " + std::to_string(axis) + " of " + to_string(x.shape()));
  const bool track = needs_grad<T>({&x});
  Shape shape = x.shape();
  shape[axis] = end - begin;
  auto out = make_output<T>(shape, track);
  auto xd = x.data();
  auto od = out.data();
  const std::size_t row_len = x.size() / x.dim(0);
  if (axis == 0) {
    std::copy(xd.begin() + begin * row_len, xd.begin() + end * row_len, od.begin());
  } else {
    const std::size_t width = end - begin;
    for (std::size_t r = 0; r < x.dim(0); ++r)
      std::copy(xd.begin() + r * row_len + begin, xd.begin() + r * row_len + end, od.begin() + r * width);
  }
  if (track) {
    record<T>([xi = x.impl(), oi = out.impl(), axis, begin, end, row_len] {
      if (oi->grad.empty() || !xi->requires_grad) return;
      T* gx = xi->grad_buffer();
      if (axis == 0) {
        for (std::size_t i = 0; i < oi->grad.size(); ++i) gx[begin * row_len + i] += oi->grad[i];
      } else {
        const std::size_t width = end - begin;
        const std::size_t rows = xi->shape[0];
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < width; ++j) gx[r * row_len + begin + j] += oi->grad[r * width + j];
      }
    });
  }
  return out;
}

template <class T>
BasicTensor<T> concat(const std::vector<BasicTensor<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw ContractError("concat: no operands");
  if (axis > 1) throw DimensionError("concat: axis must be 0 or 1");
  for (const auto& p : parts) require_rank(p, 2, "concat");
  const std::size_t other = 1 - axis;
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.dim(other) != parts.front().dim(other))
      throw DimensionError("concat: " + to_string(p.shape()) + " incompatible with " +
                           to_string(parts.front().shape()) + " along axis " + std::to_string(axis));
    total += p.dim(axis);
  }
  bool track = false;
  if (GradMode::enabled())
    track = std::any_of(parts.begin(), parts.end(), [](const auto& p) { return p.requires_grad(); });
  Shape shape = parts.front().shape();
  shape[axis] = total;
  auto out = make_output<T>(shape, track);
  auto od = out.data();
  const std::size_t out_cols = shape[1];
  std::size_t offset = 0;
  for (const auto& p : parts) {
    auto pd = p.data();
    if (axis == 0) {
      std::copy(pd.begin(), pd.end(), od.begin() + offset * out_cols);
    } else {
      const std::size_t w = p.dim(1);
      for (std::size_t r = 0; r < shape[0]; ++r)
        std::copy(pd.begin() + r * w, pd.begin() + (r + 1) * w, od.begin() + r * out_cols + offset);
    }
    offset += p.dim(axis);
  }
  if (track) {
    std::vector<ImplPtr<T>> impls;
    for (const auto& p : parts) impls.push_back(p.impl());
    record<T>([impls = std::move(impls), oi = out.impl(), axis, out_cols] {
      if (oi->grad.empty()) return;
      std::size_t off = 0;
      for (const auto& pi : impls) {
        const std::size_t extent = pi->shape[axis];
        if (pi->requires_grad) {
          T* gp = pi->grad_buffer();
          if (axis == 0) {
            for (std::size_t i = 0; i < pi->data.size(); ++i) gp[i] += oi->grad[off * out_cols + i];
          } else {
            const std::size_t rows = pi->shape[0];
            for (std::size_t r = 0; r < rows; ++r)
              for (std::size_t j = 0; j < extent; ++j) gp[r * extent + j] += oi->grad[r * out_cols + off + j];
          }
        }
        off += extent;
      }
    });
  }
  return out;
}

template <class T>
BasicTensor<T> element(const BasicTensor<T>& x, std::size_t index) {
  require_defined(x, "element");
  if (index >= x.size())
    throw DimensionError("element: index " + std::to_string(index) + " out of range for " + to_string(x.shape()));
  const bool track = needs_grad<T>({&x});
  auto out = make_output<T>({1}, track);
  out.data()[0] = x.data()[index];
  if (track) {
    record<T>([xi = x.impl(), oi = out.impl(), index] {
      if (oi->grad.empty() || !xi->requires_grad) return;
      xi->grad_buffer()[index] += oi->grad[0];
    });
  }
  return out;
}

template <class T>
BasicTensor<T> stack(const std::vector<BasicTensor<T>>& scalars) {
  if (scalars.empty()) throw ContractError("stack: no operands");
  for (const auto& s : scalars) {
    require_defined(s, "stack");
    if (s.size() != 1) throw DimensionError("stack: operand " + to_string(s.shape()) + " is not a scalar");
  }
  bool track = false;
  if (GradMode::enabled())
    track = std::any_of(scalars.begin(), scalars.end(), [](const auto& s) { return s.requires_grad(); });
  auto out = make_output<T>({scalars.size()}, track);
  for (std::size_t i = 0; i < scalars.size(); ++i) out.data()[i] = scalars[i].data()[0];
  if (track) {
    std::vector<ImplPtr<T>> impls;
    for (const auto& s : scalars) impls.push_back(s.impl());
    record<T>([impls = std::move(impls), oi = out.impl()] {
      if (oi->grad.empty()) return;
      for (std::size_t i = 0; i < impls.size(); ++i)
        if (impls[i]->requires_grad) impls[i]->grad_buffer()[0] += oi->grad[i];
    });
  }
  return out;
}

template <class T>
BasicTensor<T> patchify(const BasicTensor<T>& image, std::size_t patch) {
  require_rank(image, 3, "patchify");
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  if (patch == 0 || h % patch != 0 || w % patch != 0)
    throw ConfigError("patchify: image " + to_string(image.shape()) + " not divisible by patch size " +
                      std::to_string(patch));
  const std::size_t gh = h / patch, gw = w / patch, row_len = c * patch * patch;
  const bool track = needs_grad<T>({&image});
  auto out = make_output<T>({gh * gw, row_len}, track);
  // index map: output element -> image element
  std::vector<std::size_t> source(gh * gw * row_len);
  for (std::size_t gy = 0; gy < gh; ++gy)
    for (std::size_t gx = 0; gx < gw; ++gx)
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t py = 0; py < patch; ++py)
          for (std::size_t px = 0; px < patch; ++px) {
            const std::size_t dst = (gy * gw + gx) * row_len + (ch * patch + py) * patch + px;
            source[dst] = (ch * h + gy * patch + py) * w + gx * patch + px;
          }
  auto id = image.data();
  auto od = out.data();
  for (std::size_t i = 0; i < source.size(); ++i) od[i] = id[source[i]];
  if (track) {
    record<T>([ii = image.impl(), oi = out.impl(), source = std::move(source)] {
      if (oi->grad.empty() || !ii->requires_grad) return;
      T* gi = ii->grad_buffer();
      for (std::size_t i = 0; i < source.size(); ++i) gi[source[i]] += oi->grad[i];
    });
  }
  return out;
}

template <class T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, std::size_t height, std::size_t width, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias, std::size_t kernel) {
  require_rank(x, 2, "conv2d");
  require_rank(weight, 2, "conv2d");
  if (kernel % 2 == 0) throw ConfigError("conv2d: kernel size must be odd");
  const std::size_t pixels = height * width, in = x.dim(1), out_ch = weight.dim(1);
  if (x.dim(0) != pixels)
    throw DimensionError("conv2d: input " + to_string(x.shape()) + " is not a " + std::to_string(height) + "x" +
                         std::to_string(width) + " grid");
  const std::size_t col_len = kernel * kernel * in;
  if (weight.dim(0) != col_len)
    throw DimensionError("conv2d: weight " + to_string(weight.shape()) + " does not match input " +
                         to_string(x.shape()) + " for kernel " + std::to_string(kernel));
  if (bias.defined() && bias.size() != out_ch)
    throw DimensionError("conv2d: bias " + to_string(bias.shape()) + " does not match weight " +
                         to_string(weight.shape()));
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(kernel / 2);
  const auto h = static_cast<std::ptrdiff_t>(height), w = static_cast<std::ptrdiff_t>(width);
  // im2col; out-of-grid taps read zero
  std::vector<T> cols(pixels * col_len, T(0));
  auto xd = x.data();
  for (std::ptrdiff_t y = 0; y < h; ++y)
    for (std::ptrdiff_t xx = 0; xx < w; ++xx)
      for (std::ptrdiff_t ky = 0; ky < static_cast<std::ptrdiff_t>(kernel); ++ky)
        for (std::ptrdiff_t kx = 0; kx < static_cast<std::ptrdiff_t>(kernel); ++kx) {
          const std::ptrdiff_t sy = y + ky - half, sx = xx + kx - half;
          if (sy < 0 || sy >= h || sx < 0 || sx >= w) continue;
          const std::size_t dst = static_cast<std::size_t>(y * w + xx) * col_len +
                                  static_cast<std::size_t>(ky * static_cast<std::ptrdiff_t>(kernel) + kx) * in;
          const std::size_t src = static_cast<std::size_t>(sy * w + sx) * in;
          std::copy(xd.begin() + src, xd.begin() + src + in, cols.begin() + dst);
        }
  const bool track = needs_grad<T>({&x, &weight, &bias});
  auto out = make_output<T>({pixels, out_ch}, track);
  T* od = out.data().data();
  kernels::gemm_nn(pixels, out_ch, col_len, cols.data(), weight.data().data(), od, false);
  if (bias.defined()) {
    const T* bd = bias.data().data();
    for (std::size_t p = 0; p < pixels; ++p)
      for (std::size_t j = 0; j < out_ch; ++j) od[p * out_ch + j] += bd[j];
  }
  if (track) {
    ImplPtr<T> bi = bias.defined() ? bias.impl() : nullptr;
    record<T>([xi = x.impl(), wi = weight.impl(), bi, oi = out.impl(), cols = std::move(cols), h, w, half, kernel,
               in, out_ch, col_len, pixels] {
      if (oi->grad.empty()) return;
      const T* g = oi->grad.data();
      if (wi->requires_grad) kernels::gemm_tn(col_len, out_ch, pixels, cols.data(), g, wi->grad_buffer(), true);
      if (bi && bi->requires_grad) {
        T* gb = bi->grad_buffer();
        for (std::size_t p = 0; p < pixels; ++p)
          for (std::size_t j = 0; j < out_ch; ++j) gb[j] += g[p * out_ch + j];
      }
      if (xi->requires_grad) {
        std::vector<T> dcols(pixels * col_len);
        kernels::gemm_nt(pixels, col_len, out_ch, g, wi->data.data(), dcols.data(), false);
        T* gx = xi->grad_buffer();
        const auto k = static_cast<std::ptrdiff_t>(kernel);
        for (std::ptrdiff_t y = 0; y < h; ++y)
          for (std::ptrdiff_t xx = 0; xx < w; ++xx)
            for (std::ptrdiff_t ky = 0; ky < k; ++ky)
              for (std::ptrdiff_t kx = 0; kx < k; ++kx) {
                const std::ptrdiff_t sy = y + ky - half, sx = xx + kx - half;
                if (sy < 0 || sy >= h || sx < 0 || sx >= w) continue;
                const std::size_t src = static_cast<std::size_t>(y * w + xx) * col_len +
                                        static_cast<std::size_t>(ky * k + kx) * in;
                const std::size_t dst = static_cast<std::size_t>(sy * w + sx) * in;
                for (std::size_t c = 0; c < in; ++c) gx[dst + c] += dcols[src + c];
              }
      }
    });
  }
  return out;
}

template <class T>
BasicTensor<T> cosine_distance(const BasicTensor<T>& a, const BasicTensor<T>& b, T eps) {
  require_defined(a, "cosine_distance");
  require_defined(b, "cosine_distance");
  if (a.size() != b.size())
    throw DimensionError("cosine_distance: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  auto ad = a.data();
  auto bd = b.data();
  T dot = T(0), aa = T(0), bb = T(0);
  for (std::size_t i = 0; i < ad.size(); ++i) {
    dot += ad[i] * bd[i];
    aa += ad[i] * ad[i];
    bb += bd[i] * bd[i];
  }
  const T na = std::sqrt(aa), nb = std::sqrt(bb);
  const bool guarded = na * nb <= eps;
  const T den = guarded ? eps : na * nb;
  const bool track = needs_grad<T>({&a, &b});
  auto out = make_output<T>({1}, track);
  out.data()[0] = T(1) - dot / den;
  if (track) {
    record<T>([ai = a.impl(), bi = b.impl(), oi = out.impl(), dot, aa, bb, den, guarded] {
      if (oi->grad.empty()) return;
      const T g = oi->grad[0];
      const std::size_t n = ai->data.size();
      // d/da (dot/den) = b/den - dot * a / (|a|^2 den) when den = |a||b|
      if (ai->requires_grad) {
        T* ga = ai->grad_buffer();
        for (std::size_t i = 0; i < n; ++i) {
          T d = bi->data[i] / den;
          if (!guarded) d -= dot * ai->data[i] / (aa * den);
          ga[i] -= g * d;
        }
      }
      if (bi->requires_grad) {
        T* gb = bi->grad_buffer();
        for (std::size_t i = 0; i < n; ++i) {
          T d = ai->data[i] / den;
          if (!guarded) d -= dot * bi->data[i] / (bb * den);
          gb[i] -= g * d;
        }
      }
    });
  }
  return out;
}

#define EXITRACK_INSTANTIATE_OPS(T)                                                                               \
  template BasicTensor<T> matmul(const BasicTensor<T>&, const BasicTensor<T>&);                                  \
  template BasicTensor<T> matmul_nt(const BasicTensor<T>&, const BasicTensor<T>&);                               \
  template BasicTensor<T> linear(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&);           \
  template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);                                     \
  template BasicTensor<T> sub(const BasicTensor<T>&, const BasicTensor<T>&);                                     \
  template BasicTensor<T> mul(const BasicTensor<T>&, const BasicTensor<T>&);                                     \
  template BasicTensor<T> div(const BasicTensor<T>&, const BasicTensor<T>&);                                     \
  template BasicTensor<T> minimum(const BasicTensor<T>&, const BasicTensor<T>&);                                 \
  template BasicTensor<T> maximum(const BasicTensor<T>&, const BasicTensor<T>&);                                 \
  template BasicTensor<T> scale(const BasicTensor<T>&, T);                                                       \
  template BasicTensor<T> add_scalar(const BasicTensor<T>&, T);                                                  \
  template BasicTensor<T> add_rowvec(const BasicTensor<T>&, const BasicTensor<T>&);                              \
  template BasicTensor<T> mul_rowvec(const BasicTensor<T>&, const BasicTensor<T>&);                              \
  template BasicTensor<T> mul_colvec(const BasicTensor<T>&, const BasicTensor<T>&);                              \
  template BasicTensor<T> sum(const BasicTensor<T>&);                                                            \
  template BasicTensor<T> mean(const BasicTensor<T>&);                                                           \
  template BasicTensor<T> sum_rows(const BasicTensor<T>&);                                                       \
  template BasicTensor<T> softmax(const BasicTensor<T>&, std::size_t);                                           \
  template BasicTensor<T> layer_norm(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&, T);    \
  template BasicTensor<T> gelu(const BasicTensor<T>&);                                                           \
  template BasicTensor<T> relu(const BasicTensor<T>&);                                                           \
  template BasicTensor<T> sigmoid(const BasicTensor<T>&);                                                        \
  template BasicTensor<T> abs(const BasicTensor<T>&);                                                            \
  template BasicTensor<T> clamp(const BasicTensor<T>&, T, T);                                                    \
  template BasicTensor<T> transpose(const BasicTensor<T>&);                                                      \
  template BasicTensor<T> reshape(const BasicTensor<T>&, Shape);                                                 \
  template BasicTensor<T> slice(const BasicTensor<T>&, std::size_t, std::size_t, std::size_t);                   \
  template BasicTensor<T> concat(const std::vector<BasicTensor<T>>&, std::size_t);                               \
  template BasicTensor<T> element(const BasicTensor<T>&, std::size_t);                                           \
  template BasicTensor<T> stack(const std::vector<BasicTensor<T>>&);                                             \
  template BasicTensor<T> patchify(const BasicTensor<T>&, std::size_t);                                          \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, std::size_t, std::size_t, const BasicTensor<T>&,         \
                                 const BasicTensor<T>&, std::size_t);                                            \
  template BasicTensor<T> cosine_distance(const BasicTensor<T>&, const BasicTensor<T>&, T);

EXITRACK_INSTANTIATE_OPS(float)
EXITRACK_INSTANTIATE_OPS(double)

#undef EXITRACK_INSTANTIATE_OPS

}  // namespace exitrack::num
