#include "exitrack/objectives/losses.hpp"

#include <algorithm>
#include <cmath>

namespace exitrack::objectives {

void LossWeights::validate() const {
  if (l1 < 0 || giou < 0 || score < 0 || imitation < 0) throw ConfigError("loss weights must be non-negative");
}

double giou(const data::BoundingBox& a, const data::BoundingBox& b) {
  const double iw = std::max(0.0, std::min(a.x1(), b.x1()) - std::max(a.x0(), b.x0()));
  const double ih = std::max(0.0, std::min(a.y1(), b.y1()) - std::max(a.y0(), b.y0()));
  const double inter = iw * ih;
  const double uni = a.w * a.h + b.w * b.h - inter;
  const double cw = std::max(a.x1(), b.x1()) - std::min(a.x0(), b.x0());
  const double ch = std::max(a.y1(), b.y1()) - std::min(a.y0(), b.y0());
  const double enclose = cw * ch;
  return inter / uni - (enclose - uni) / enclose;
}

double giou_loss(const data::BoundingBox& a, const data::BoundingBox& b) { return 1.0 - giou(a, b); }

namespace {

template <class T>
struct Corners {
  BasicTensor<T> x0, y0, x1, y1, area;
};

template <class T>
Corners<T> corners_of(const BasicTensor<T>& pred) {
  if (pred.size() != 4) throw DimensionError("box tensor must hold 4 values, got " + num::to_string(pred.shape()));
  const auto cx = num::element(pred, 0), cy = num::element(pred, 1);
  const auto w = num::clamp(num::element(pred, 2), static_cast<T>(kMinExtent), T(1e30));
  const auto h = num::clamp(num::element(pred, 3), static_cast<T>(kMinExtent), T(1e30));
  const auto hw = num::scale(w, T(0.5)), hh = num::scale(h, T(0.5));
  return {num::sub(cx, hw), num::sub(cy, hh), num::add(cx, hw), num::add(cy, hh), num::mul(w, h)};
}

template <class T>
BasicTensor<T> constant(double v) {
  return BasicTensor<T>::scalar(static_cast<T>(v));
}

template <class T>
struct Overlap {
  BasicTensor<T> inter, uni;
  Corners<T> p;
};

template <class T>
Overlap<T> overlap(const BasicTensor<T>& pred, const data::BoundingBox& gt) {
  Overlap<T> o;
  o.p = corners_of(pred);
  const auto gx0 = constant<T>(gt.x0()), gy0 = constant<T>(gt.y0()), gx1 = constant<T>(gt.x1()),
             gy1 = constant<T>(gt.y1());
  const auto zero = constant<T>(0.0);
  const auto iw = num::maximum(num::sub(num::minimum(o.p.x1, gx1), num::maximum(o.p.x0, gx0)), zero);
  const auto ih = num::maximum(num::sub(num::minimum(o.p.y1, gy1), num::maximum(o.p.y0, gy0)), zero);
  o.inter = num::mul(iw, ih);
  o.uni = num::sub(num::add_scalar(o.p.area, static_cast<T>(gt.w * gt.h)), o.inter);
  return o;
}

}  // namespace

template <class T>
BasicTensor<T> iou_tensor(const BasicTensor<T>& pred, const data::BoundingBox& gt) {
  const auto o = overlap(pred, gt);
  return num::div(o.inter, o.uni);
}

template <class T>
BasicTensor<T> giou_loss(const BasicTensor<T>& pred, const data::BoundingBox& gt) {
  const auto o = overlap(pred, gt);
  const auto cw = num::sub(num::maximum(o.p.x1, constant<T>(gt.x1())), num::minimum(o.p.x0, constant<T>(gt.x0())));
  const auto ch = num::sub(num::maximum(o.p.y1, constant<T>(gt.y1())), num::minimum(o.p.y0, constant<T>(gt.y0())));
  const auto enclose = num::mul(cw, ch);
  const auto iou = num::div(o.inter, o.uni);
  const auto penalty = num::div(num::sub(enclose, o.uni), enclose);
  // 1 - (iou - penalty)
  return num::add_scalar(num::sub(penalty, iou), T(1));
}

template <class T>
BasicTensor<T> l1_loss(const BasicTensor<T>& pred, const data::BoundingBox& gt) {
  const BasicTensor<T> target(pred.shape(), {static_cast<T>(gt.cx), static_cast<T>(gt.cy), static_cast<T>(gt.w),
                                             static_cast<T>(gt.h)});
  return num::mean(num::abs(num::sub(pred, target)));
}

template <class T>
BasicTensor<T> locate_loss(const BasicTensor<T>& pred, const data::BoundingBox& gt, const LossWeights& w) {
  return num::add(num::scale(l1_loss(pred, gt), static_cast<T>(w.l1)),
                  num::scale(giou_loss(pred, gt), static_cast<T>(w.giou)));
}

template <class T>
BasicTensor<T> score_loss(const BasicTensor<T>& s, double target_iou) {
  const auto d = num::add_scalar(s, static_cast<T>(-target_iou));
  return num::mul(d, d);
}

double score_target(const data::BoundingBox& predicted, const data::BoundingBox& gt) {
  return data::iou(predicted, gt);
}

template <class T>
LossBreakdown<T> joint_loss(const std::vector<exits::ExitOutcome<T>>& outcomes, const data::BoundingBox& gt,
                            const BasicTensor<T>& imitation, const LossWeights& w) {
  if (outcomes.empty()) throw ContractError("joint_loss: no exit outcomes");
  LossBreakdown<T> out;
  BasicTensor<T> per_exit;
  for (const auto& o : outcomes) {
    const auto loc = locate_loss(o.corners.box, gt, w);
    const auto sc = score_loss(o.score_tensor, score_target(o.box, gt));
    out.locate.push_back(static_cast<double>(loc.item()));
    out.score.push_back(static_cast<double>(sc.item()));
    const auto term = num::add(loc, num::scale(sc, static_cast<T>(w.score)));
    per_exit = per_exit.defined() ? num::add(per_exit, term) : term;
  }
  out.total = num::scale(per_exit, static_cast<T>(1.0 / static_cast<double>(outcomes.size())));
  if (imitation.defined()) {
    out.imitation = static_cast<double>(imitation.item());
    out.total = num::add(out.total, num::scale(imitation, static_cast<T>(w.imitation)));
  }
  return out;
}

#define EXITRACK_INSTANTIATE_LOSSES(T)                                                                  \
  template BasicTensor<T> iou_tensor(const BasicTensor<T>&, const data::BoundingBox&);                  \
  template BasicTensor<T> giou_loss(const BasicTensor<T>&, const data::BoundingBox&);                   \
  template BasicTensor<T> l1_loss(const BasicTensor<T>&, const data::BoundingBox&);                     \
  template BasicTensor<T> locate_loss(const BasicTensor<T>&, const data::BoundingBox&, const LossWeights&); \
  template BasicTensor<T> score_loss(const BasicTensor<T>&, double);                                    \
  template LossBreakdown<T> joint_loss(const std::vector<exits::ExitOutcome<T>>&, const data::BoundingBox&, \
                                       const BasicTensor<T>&, const LossWeights&);

EXITRACK_INSTANTIATE_LOSSES(float)
EXITRACK_INSTANTIATE_LOSSES(double)

#undef EXITRACK_INSTANTIATE_LOSSES

}  // namespace exitrack::objectives
