#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "exitrack/numerics/ops.hpp"
#include "exitrack/numerics/random.hpp"

namespace exitrack::num {

template <class T>
struct NamedTensor {
  std::string name;
  BasicTensor<T> tensor;
};

template <class T>
using ParameterList = std::vector<NamedTensor<T>>;

namespace init {

// Normal(0, stddev) truncated to +-2 stddev by redrawing.
template <class T>
BasicTensor<T> truncated_normal(Shape shape, double stddev, RandomState& rng) {
  std::vector<T> values(numel(shape));
  for (auto& v : values) {
    double draw = rng.normal();
    while (std::abs(draw) > 2.0) draw = rng.normal();
    v = static_cast<T>(draw * stddev);
  }
  return BasicTensor<T>(std::move(shape), std::move(values), true);
}

// He initialisation for ReLU stacks.
template <class T>
BasicTensor<T> kaiming(Shape shape, std::size_t fan_in, RandomState& rng) {
  return truncated_normal<T>(std::move(shape), std::sqrt(2.0 / static_cast<double>(fan_in)), rng);
}

template <class T>
BasicTensor<T> constant(Shape shape, T value) {
  return BasicTensor<T>(shape, std::vector<T>(numel(shape), value), true);
}

}  // namespace init

// y = x W + b with W stored [in, out].
template <class T>
class Linear {
 public:
  Linear() = default;
  Linear(std::size_t in, std::size_t out, RandomState& rng, double init_std = 0.02, bool with_bias = true)
      : weight(init::truncated_normal<T>({in, out}, init_std, rng)) {
    if (with_bias) bias = init::constant<T>({out}, T(0));
  }

  BasicTensor<T> operator()(const BasicTensor<T>& x) const { return linear(x, weight, bias); }

  void collect(ParameterList<T>& out, const std::string& prefix) const {
    out.push_back({prefix + ".weight", weight});
    if (bias.defined()) out.push_back({prefix + ".bias", bias});
  }

  BasicTensor<T> weight;
  BasicTensor<T> bias;
};

template <class T>
class LayerNorm {
 public:
  LayerNorm() = default;
  explicit LayerNorm(std::size_t dim, T eps_value = T(1e-5))
      : gain(init::constant<T>({dim}, T(1))), bias(init::constant<T>({dim}, T(0))), eps(eps_value) {}

  BasicTensor<T> operator()(const BasicTensor<T>& x) const { return layer_norm(x, gain, bias, eps); }

  void collect(ParameterList<T>& out, const std::string& prefix) const {
    out.push_back({prefix + ".gain", gain});
    out.push_back({prefix + ".bias", bias});
  }

  BasicTensor<T> gain;
  BasicTensor<T> bias;
  T eps = T(1e-5);
};

// Same-padded convolution over token grids, see conv2d().
template <class T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::size_t in, std::size_t out, std::size_t kernel_size, RandomState& rng)
      : weight(init::kaiming<T>({kernel_size * kernel_size * in, out}, kernel_size * kernel_size * in, rng)),
        bias(init::constant<T>({out}, T(0))),
        kernel(kernel_size) {}

  BasicTensor<T> operator()(const BasicTensor<T>& x, std::size_t height, std::size_t width) const {
    return conv2d(x, height, width, weight, bias, kernel);
  }

  void collect(ParameterList<T>& out, const std::string& prefix) const {
    out.push_back({prefix + ".weight", weight});
    out.push_back({prefix + ".bias", bias});
  }

  BasicTensor<T> weight;
  BasicTensor<T> bias;
  std::size_t kernel = 3;
};

}  // namespace exitrack::num
