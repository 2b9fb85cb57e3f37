#include "exitrack/numerics/tensor.hpp"

#include <sstream>

namespace exitrack::num {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto extent : shape) n *= extent;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ')';
  return os.str();
}

namespace {
void check_extents(const Shape& shape) {
  if (shape.empty()) throw DimensionError("tensor shape must have at least one axis");
  for (auto extent : shape)
    if (extent == 0) throw DimensionError("tensor extents must be positive, got " + to_string(shape));
}
}  // namespace

template <class T>
BasicTensor<T>::BasicTensor(Shape shape, bool requires_grad) : impl_(std::make_shared<TensorImpl<T>>()) {
  check_extents(shape);
  impl_->data.assign(numel(shape), T(0));
  impl_->shape = std::move(shape);
  impl_->requires_grad = requires_grad;
}

template <class T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> values, bool requires_grad)
    : impl_(std::make_shared<TensorImpl<T>>()) {
  check_extents(shape);
  if (values.size() != numel(shape))
    throw DimensionError("tensor of shape " + to_string(shape) + " needs " + std::to_string(numel(shape)) +
                         " values, got " + std::to_string(values.size()));
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
  impl_->requires_grad = requires_grad;
}

template <class T>
std::size_t BasicTensor<T>::dim(std::size_t axis) const {
  if (axis >= impl_->shape.size())
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + to_string(impl_->shape));
  return impl_->shape[axis];
}

template <class T>
T BasicTensor<T>::item() const {
  if (impl_->data.size() != 1) throw ContractError("item() on non-scalar tensor " + to_string(impl_->shape));
  return impl_->data[0];
}

template <class T>
BasicTensor<T> BasicTensor<T>::detach() const {
  return BasicTensor(impl_->shape, impl_->data, false);
}

template <class T>
BasicTensor<T> BasicTensor<T>::clone() const {
  return BasicTensor(impl_->shape, impl_->data, impl_->requires_grad);
}

namespace {
thread_local bool grad_enabled = true;
}

bool GradMode::enabled() noexcept { return grad_enabled; }
void GradMode::set_enabled(bool on) noexcept { grad_enabled = on; }

template <class T>
Tape<T>& Tape<T>::local() {
  thread_local Tape<T> tape;
  return tape;
}

template <class T>
void Tape<T>::replay_reverse() {
  for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
}

template <class T>
void backward(const BasicTensor<T>& loss) {
  if (!loss.defined() || loss.size() != 1)
    throw ContractError("backward() needs a scalar loss, got shape " +
                        (loss.defined() ? to_string(loss.shape()) : std::string("<undefined>")));
  auto& tape = Tape<T>::local();
  if (!loss.requires_grad()) {
    tape.clear();
    return;
  }
  loss.impl()->grad_buffer()[0] += T(1);
  tape.replay_reverse();
  tape.clear();
}

template class BasicTensor<float>;
template class BasicTensor<double>;
template class Tape<float>;
template class Tape<double>;
template void backward(const BasicTensor<float>&);
template void backward(const BasicTensor<double>&);

}  // namespace exitrack::num
