#include "exitrack/distill/imitation.hpp"

namespace exitrack::distill {

DistillMode parse_distill(const std::string& text) {
  if (text == "on") return DistillMode::on;
  if (text == "off") return DistillMode::off;
  if (text == "plain") return DistillMode::plain;
  throw ConfigError("unknown distill mode '" + text + "' (expected on|off|plain)");
}

std::string to_string(DistillMode mode) {
  switch (mode) {
    case DistillMode::on: return "on";
    case DistillMode::off: return "off";
    case DistillMode::plain: return "plain";
  }
  return "?";
}

template <class T>
ImitationAttention<T>::ImitationAttention(std::size_t dim)
    : spatial_weight(num::init::constant<T>({dim, 1}, T(0))), spatial_bias(num::init::constant<T>({1}, T(1))) {
  channel.weight = num::init::constant<T>({dim, dim}, T(0));
  channel.bias = num::init::constant<T>({dim}, T(1));
}

template <class T>
typename ImitationAttention<T>::Maps ImitationAttention<T>::maps(const BasicTensor<T>& teacher) const {
  Maps m;
  m.spatial = num::linear(teacher, spatial_weight, spatial_bias);
  const auto v = channel(teacher);
  m.channel_weights = num::softmax(v, 0);
  m.channel = num::sum_rows(num::mul(m.channel_weights, v));
  return m;
}

template <class T>
BasicTensor<T> ImitationAttention<T>::operator()(const BasicTensor<T>& teacher, const BasicTensor<T>& student) const {
  if (teacher.shape() != student.shape())
    throw DimensionError("imitation attention: teacher " + num::to_string(teacher.shape()) + " vs student " +
                         num::to_string(student.shape()));
  const auto m = maps(teacher);
  return num::mul_rowvec(num::mul_colvec(student, m.spatial), m.channel);
}

template <class T>
void ImitationAttention<T>::collect(num::ParameterList<T>& out, const std::string& prefix) const {
  out.push_back({prefix + ".spatial.weight", spatial_weight});
  out.push_back({prefix + ".spatial.bias", spatial_bias});
  channel.collect(out, prefix + ".channel");
}

template <class T>
BasicTensor<T> cosine_imitation(const BasicTensor<T>& student, const BasicTensor<T>& teacher) {
  if (student.shape() != teacher.shape())
    throw DimensionError("cosine_imitation: " + num::to_string(student.shape()) + " vs " + num::to_string(teacher.shape()));
  return num::cosine_distance(student, teacher, T(1e-8));
}

template <class T>
BasicTensor<T> imitation_loss(const std::vector<BasicTensor<T>>& students, const BasicTensor<T>& teacher) {
  if (students.empty()) return BasicTensor<T>::scalar(T(0));
  BasicTensor<T> total;
  for (const auto& s : students) {
    auto term = cosine_imitation(s, teacher);
    total = total.defined() ? num::add(total, term) : term;
  }
  return num::scale(total, static_cast<T>(1.0 / static_cast<double>(students.size())));
}

template class ImitationAttention<float>;
template class ImitationAttention<double>;
template BasicTensor<float> cosine_imitation(const BasicTensor<float>&, const BasicTensor<float>&);
template BasicTensor<double> cosine_imitation(const BasicTensor<double>&, const BasicTensor<double>&);
template BasicTensor<float> imitation_loss(const std::vector<BasicTensor<float>>&, const BasicTensor<float>&);
template BasicTensor<double> imitation_loss(const std::vector<BasicTensor<double>>&, const BasicTensor<double>&);

}  // namespace exitrack::distill
