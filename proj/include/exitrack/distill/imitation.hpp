#pragma once

#include <string>
#include <vector>

#include "exitrack/numerics/layers.hpp"

namespace exitrack::distill {

using num::BasicTensor;

enum class DistillMode { off, on, plain };

DistillMode parse_distill(const std::string& text);
std::string to_string(DistillMode mode);

// Teacher-driven re-weighting G_k for one student branch.
//
//   Att_s = conv1x1(f_teacher)                      [N, 1], one weight per location
//   V     = f_teacher Wc + bc                       [N, D]
//   Att_c = sum_i softmax_i(V)[i, :] * V[i, :]      [D],    one weight per channel
//   f'    = f_student * Att_s * Att_c
//
// Both transforms start at weight 0 and bias 1, so a fresh module is the
// identity (Att_s = Att_c = 1).
template <class T>
class ImitationAttention {
 public:
  ImitationAttention() = default;
  explicit ImitationAttention(std::size_t dim);

  struct Maps {
    BasicTensor<T> spatial;          // [N, 1]
    BasicTensor<T> channel;          // [D]
    BasicTensor<T> channel_weights;  // [N, D], columns sum to 1
  };

  Maps maps(const BasicTensor<T>& teacher) const;
  BasicTensor<T> operator()(const BasicTensor<T>& teacher, const BasicTensor<T>& student) const;

  void collect(num::ParameterList<T>& out, const std::string& prefix) const;

  BasicTensor<T> spatial_weight;  // [D, 1], the 1x1 conv
  BasicTensor<T> spatial_bias;    // [1]
  num::Linear<T> channel;
};

// 1 - cos(f', f_K) over row-major (token, channel) flattening; the
// denominator is guarded with eps = 1e-8.
template <class T>
BasicTensor<T> cosine_imitation(const BasicTensor<T>& student, const BasicTensor<T>& teacher);

// Mean of cosine_imitation over the students; zero when there are none.
template <class T>
BasicTensor<T> imitation_loss(const std::vector<BasicTensor<T>>& students, const BasicTensor<T>& teacher);

}  // namespace exitrack::distill
