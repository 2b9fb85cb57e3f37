#include "exitrack/data/box.hpp"

#include <charconv>

namespace exitrack::data {

namespace {

double overlap_ratio(double ax0, double ay0, double ax1, double ay1, double bx0, double by0, double bx1, double by1) {
  const double iw = std::max(0.0, std::min(ax1, bx1) - std::max(ax0, bx0));
  const double ih = std::max(0.0, std::min(ay1, by1) - std::max(ay0, by0));
  const double inter = iw * ih;
  const double uni = std::max(0.0, ax1 - ax0) * std::max(0.0, ay1 - ay0) +
                     std::max(0.0, bx1 - bx0) * std::max(0.0, by1 - by0) - inter;
  return uni > 0 ? inter / uni : 0.0;
}

}  // namespace

double iou(const PixelBox& a, const PixelBox& b) {
  return overlap_ratio(a.x, a.y, a.x + a.w, a.y + a.h, b.x, b.y, b.x + b.w, b.y + b.h);
}

double iou(const BoundingBox& a, const BoundingBox& b) {
  return overlap_ratio(a.x0(), a.y0(), a.x1(), a.y1(), b.x0(), b.y0(), b.x1(), b.y1());
}

BoundingBox clamp_box(const BoundingBox& b, double min_extent) {
  return {std::clamp(b.cx, 0.0, 1.0), std::clamp(b.cy, 0.0, 1.0), std::clamp(b.w, min_extent, 1.0),
          std::clamp(b.h, min_extent, 1.0)};
}

std::string format_box(const PixelBox& b) {
  // shortest round-trip representation keeps annotation files lossless
  std::string out;
  char buf[32];
  for (double v : {b.x, b.y, b.w, b.h}) {
    if (!out.empty()) out += ',';
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    out.append(buf, end);
  }
  return out;
}

}  // namespace exitrack::data
