#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "exitrack/numerics/errors.hpp"

namespace exitrack::num {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

template <class T>
struct TensorImpl {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until something accumulates into it
  bool requires_grad = false;

  T* grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), T(0));
    return grad.data();
  }
};

// Dense row-major array taking part in reverse-mode differentiation.
//
// Copies share storage (handle semantics, as in most tensor libraries);
// use clone() or detach() for an independent copy. A tensor is a scalar
// when it holds exactly one element.
template <class T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape, bool requires_grad = false);
  BasicTensor(Shape shape, std::vector<T> values, bool requires_grad = false);

  static BasicTensor scalar(T value, bool requires_grad = false) {
    return BasicTensor(Shape{1}, std::vector<T>{value}, requires_grad);
  }

  bool defined() const noexcept { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const { return impl_->data.size(); }

  std::span<T> data() { return impl_->data; }
  std::span<const T> data() const { return impl_->data; }
  T item() const;
  T at(std::size_t i) const { return impl_->data[i]; }
  T at(std::size_t row, std::size_t col) const { return impl_->data[row * impl_->shape.back() + col]; }

  bool requires_grad() const { return impl_ && impl_->requires_grad; }
  void set_requires_grad(bool on) { impl_->requires_grad = on; }
  bool has_grad() const { return impl_ && !impl_->grad.empty(); }
  std::span<const T> grad() const { return impl_->grad; }
  std::span<T> mutable_grad() { return {impl_->grad_buffer(), impl_->data.size()}; }
  void zero_grad() { impl_->grad.assign(impl_->data.size(), T(0)); }
  void clear_grad() { impl_->grad.clear(); impl_->grad.shrink_to_fit(); }

  // Same values, no gradient history, independent storage.
  BasicTensor detach() const;
  BasicTensor clone() const;
  template <class U>
  BasicTensor<U> cast() const {
    std::vector<U> values(impl_->data.begin(), impl_->data.end());
    return BasicTensor<U>(impl_->shape, std::move(values), impl_->requires_grad);
  }

  bool same_storage(const BasicTensor& other) const { return impl_ == other.impl_; }
  const std::shared_ptr<TensorImpl<T>>& impl() const { return impl_; }
  static BasicTensor wrap(std::shared_ptr<TensorImpl<T>> impl) {
    BasicTensor t;
    t.impl_ = std::move(impl);
    return t;
  }

 private:
  std::shared_ptr<TensorImpl<T>> impl_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

// Thread-local switch controlling whether ops record onto the tape.
class GradMode {
 public:
  static bool enabled() noexcept;
  static void set_enabled(bool on) noexcept;
};

class NoGradGuard {
 public:
  NoGradGuard() : previous_(GradMode::enabled()) { GradMode::set_enabled(false); }
  ~NoGradGuard() { GradMode::set_enabled(previous_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Per-thread record of backward closures in execution order. Each closure
// reads its output's gradient and accumulates into its inputs; closures whose
// output never received a gradient are skipped.
template <class T>
class Tape {
 public:
  using Step = std::function<void()>;

  static Tape& local();

  void record(Step step) { steps_.push_back(std::move(step)); }
  std::size_t size() const noexcept { return steps_.size(); }
  void clear() noexcept { steps_.clear(); }
  void replay_reverse();

 private:
  std::vector<Step> steps_;
};

// Seeds d(loss)/d(loss) = 1, replays the tape in reverse and clears it.
// Throws ContractError for a non-scalar loss.
template <class T>
void backward(const BasicTensor<T>& loss);

}  // namespace exitrack::num
