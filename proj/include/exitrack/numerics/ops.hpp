#pragma once

#include <cstddef>
#include <vector>

#include "exitrack/numerics/tensor.hpp"

// Differentiable operations. Each op computes its result eagerly and, when
// grad mode is on and any input requires a gradient, records a backward step
// on the calling thread's tape.
//
// Shapes are never broadcast implicitly. The only broadcasting forms are the
// explicit *_rowvec (vector over the trailing axis) and mul_colvec (one value
// per row) helpers.
namespace exitrack::num {

// a[m,k] * b[k,n]
template <class T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b);

// a[m,k] * b[n,k]^T
template <class T>
BasicTensor<T> matmul_nt(const BasicTensor<T>& a, const BasicTensor<T>& b);

// x[n,in] * weight[in,out] + bias[out]; bias may be undefined.
template <class T>
BasicTensor<T> linear(const BasicTensor<T>& x, const BasicTensor<T>& weight, const BasicTensor<T>& bias);

template <class T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <class T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <class T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <class T>
BasicTensor<T> div(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <class T>
BasicTensor<T> minimum(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <class T>
BasicTensor<T> maximum(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <class T>
BasicTensor<T> scale(const BasicTensor<T>& x, T factor);
template <class T>
BasicTensor<T> add_scalar(const BasicTensor<T>& x, T value);

// x[..., d] (op) v[d]
template <class T>
BasicTensor<T> add_rowvec(const BasicTensor<T>& x, const BasicTensor<T>& v);
template <class T>
BasicTensor<T> mul_rowvec(const BasicTensor<T>& x, const BasicTensor<T>& v);
// x[n, d] * c[n]: scales row i by c[i]. `c` may be shaped [n] or [n,1].
template <class T>
BasicTensor<T> mul_colvec(const BasicTensor<T>& x, const BasicTensor<T>& c);

template <class T>
BasicTensor<T> sum(const BasicTensor<T>& x);
template <class T>
BasicTensor<T> mean(const BasicTensor<T>& x);
// Reduces x[n, d] over rows to [d].
template <class T>
BasicTensor<T> sum_rows(const BasicTensor<T>& x);

template <class T>
BasicTensor<T> softmax(const BasicTensor<T>& x, std::size_t axis);

// Normalises over the trailing axis, then applies gain and bias.
template <class T>
BasicTensor<T> layer_norm(const BasicTensor<T>& x, const BasicTensor<T>& gain, const BasicTensor<T>& bias,
                          T eps = T(1e-5));

// tanh approximation
template <class T>
BasicTensor<T> gelu(const BasicTensor<T>& x);
template <class T>
BasicTensor<T> relu(const BasicTensor<T>& x);
template <class T>
BasicTensor<T> sigmoid(const BasicTensor<T>& x);
template <class T>
BasicTensor<T> abs(const BasicTensor<T>& x);
// Gradient passes where lo <= x <= hi.
template <class T>
BasicTensor<T> clamp(const BasicTensor<T>& x, T lo, T hi);

template <class T>
BasicTensor<T> transpose(const BasicTensor<T>& x);
template <class T>
BasicTensor<T> reshape(const BasicTensor<T>& x, Shape shape);
// [begin, end) along `axis`. Axis 0 works for any rank, axis 1 for rank 2.
template <class T>
BasicTensor<T> slice(const BasicTensor<T>& x, std::size_t axis, std::size_t begin, std::size_t end);
// Concatenation of rank-2 tensors along axis 0 or 1.
template <class T>
BasicTensor<T> concat(const std::vector<BasicTensor<T>>& parts, std::size_t axis);
// Single element as a [1] tensor.
template <class T>
BasicTensor<T> element(const BasicTensor<T>& x, std::size_t index);
// [1] tensors into one [n] tensor.
template <class T>
BasicTensor<T> stack(const std::vector<BasicTensor<T>>& scalars);

template <class T>
BasicTensor<T> detach(const BasicTensor<T>& x) {
  return x.detach();
}

// image[c,h,w] -> [(h/p)*(w/p), c*p*p]; patch rows in raster order, each row
// laid out as (channel, y, x).
template <class T>
BasicTensor<T> patchify(const BasicTensor<T>& image, std::size_t patch);

// Same-padded 2-D convolution over a token grid stored as x[h*w, in]
// (raster order). weight is [k*k*in, out] with rows ordered (ky, kx, in);
// bias may be undefined. Returns [h*w, out].
template <class T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, std::size_t height, std::size_t width, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias, std::size_t kernel);

// 1 - <a,b> / max(|a||b|, eps) over all elements in row-major order.
template <class T>
BasicTensor<T> cosine_distance(const BasicTensor<T>& a, const BasicTensor<T>& b, T eps = T(1e-8));

}  // namespace exitrack::num
