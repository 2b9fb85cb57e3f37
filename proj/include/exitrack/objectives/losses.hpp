#pragma once

#include <vector>

#include "exitrack/data/box.hpp"
#include "exitrack/exits/model.hpp"

namespace exitrack::objectives {

using num::BasicTensor;

struct LossWeights {
  double l1 = 5.0;
  double giou = 2.0;
  double score = 5.0;
  double imitation = 10.0;

  void validate() const;
};

// Plain-value oracles on normalized boxes.
double giou(const data::BoundingBox& a, const data::BoundingBox& b);
double giou_loss(const data::BoundingBox& a, const data::BoundingBox& b);

// Differentiable versions on pred[1,4] = (cx, cy, w, h). Widths and heights
// are clamped to kMinExtent before areas are formed.
inline constexpr double kMinExtent = 1e-4;

template <class T>
BasicTensor<T> iou_tensor(const BasicTensor<T>& pred, const data::BoundingBox& gt);
template <class T>
BasicTensor<T> giou_loss(const BasicTensor<T>& pred, const data::BoundingBox& gt);
// Mean absolute error over (cx, cy, w, h).
template <class T>
BasicTensor<T> l1_loss(const BasicTensor<T>& pred, const data::BoundingBox& gt);
template <class T>
BasicTensor<T> locate_loss(const BasicTensor<T>& pred, const data::BoundingBox& gt, const LossWeights& w);
// (s - target)^2, target a constant.
template <class T>
BasicTensor<T> score_loss(const BasicTensor<T>& s, double target_iou);

// Score target for one exit: IoU of its clamped predicted box, detached.
double score_target(const data::BoundingBox& predicted, const data::BoundingBox& gt);

template <class T>
struct LossBreakdown {
  BasicTensor<T> total;
  std::vector<double> locate;  // per exit in `outcomes`
  std::vector<double> score;
  double imitation = 0;
};

// (1/n) sum_k [locate_k + ls * score_k] + lm * imitation over the supplied
// outcomes. `imitation` may be undefined (distillation off).
template <class T>
LossBreakdown<T> joint_loss(const std::vector<exits::ExitOutcome<T>>& outcomes, const data::BoundingBox& gt,
                            const BasicTensor<T>& imitation, const LossWeights& w);

}  // namespace exitrack::objectives
