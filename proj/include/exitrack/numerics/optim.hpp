#pragma once

#include <cmath>
#include <vector>

#include "exitrack/numerics/tensor.hpp"

namespace exitrack::num {

template <class T>
struct ParamGroup {
  std::vector<BasicTensor<T>> params;
  double lr = 1e-3;
};

// Adam with decoupled weight decay:
//   p <- p - lr * wd * p            (rank >= 2 tensors only)
//   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2
//   p <- p - lr * mhat / (sqrt(vhat) + eps)
// Parameters without a gradient buffer are left untouched.
template <class T>
class AdamW {
 public:
  struct Options {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4;
  };

  AdamW(std::vector<ParamGroup<T>> groups, Options options) : groups_(std::move(groups)), options_(options) {
    for (const auto& g : groups_)
      for (const auto& p : g.params) state_.push_back({std::vector<T>(p.size(), T(0)), std::vector<T>(p.size(), T(0))});
  }

  void step() {
    ++steps_;
    const double c1 = 1.0 - std::pow(options_.beta1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(options_.beta2, static_cast<double>(steps_));
    std::size_t slot = 0;
    for (auto& group : groups_) {
      for (auto& p : group.params) {
        auto& st = state_[slot++];
        if (!p.has_grad()) continue;
        auto data = p.data();
        auto grad = p.grad();
        const bool decay = p.rank() >= 2;
        for (std::size_t i = 0; i < data.size(); ++i) {
          const double g = static_cast<double>(grad[i]);
          double m = options_.beta1 * st.m[i] + (1.0 - options_.beta1) * g;
          double v = options_.beta2 * st.v[i] + (1.0 - options_.beta2) * g * g;
          st.m[i] = static_cast<T>(m);
          st.v[i] = static_cast<T>(v);
          double value = static_cast<double>(data[i]);
          if (decay) value -= group.lr * options_.weight_decay * value;
          value -= group.lr * (m / c1) / (std::sqrt(v / c2) + options_.eps);
          data[i] = static_cast<T>(value);
        }
      }
    }
  }

  void zero_grad() {
    for (auto& g : groups_)
      for (auto& p : g.params) p.zero_grad();
  }

  void set_lr(std::size_t group, double lr) { groups_.at(group).lr = lr; }

  void scale_lr(double factor) {
    for (auto& g : groups_) g.lr *= factor;
  }

  const std::vector<ParamGroup<T>>& groups() const { return groups_; }
  long steps() const { return steps_; }

 private:
  struct Moments {
    std::vector<T> m;
    std::vector<T> v;
  };
  std::vector<ParamGroup<T>> groups_;
  Options options_;
  std::vector<Moments> state_;
  long steps_ = 0;
};

// Rescales all gradients so their joint L2 norm is at most max_norm.
// Returns the norm before clipping.
template <class T>
double clip_grad_norm(std::vector<BasicTensor<T>>& params, double max_norm) {
  double total = 0.0;
  for (const auto& p : params)
    if (p.has_grad())
      for (auto g : p.grad()) total += static_cast<double>(g) * static_cast<double>(g);
  const double norm = std::sqrt(total);
  if (max_norm > 0.0 && norm > max_norm) {
    const T factor = static_cast<T>(max_norm / (norm + 1e-12));
    for (auto& p : params)
      if (p.has_grad())
        for (auto& g : p.mutable_grad()) g *= factor;
  }
  return norm;
}

}  // namespace exitrack::num
