#pragma once

#include <algorithm>
#include <string>

namespace exitrack::data {

// Axis-aligned box in absolute pixels, (x, y) the top-left corner.
struct PixelBox {
  double x = 0, y = 0, w = 0, h = 0;

  double cx() const { return x + 0.5 * w; }
  double cy() const { return y + 0.5 * h; }
  double area() const { return std::max(0.0, w) * std::max(0.0, h); }
  bool operator==(const PixelBox&) const = default;
};

// Box in normalized coordinates of some reference region (a search crop,
// usually). Valid boxes have w, h in (0, 1] and cx, cy in [0, 1].
struct BoundingBox {
  double cx = 0.5, cy = 0.5, w = 1, h = 1;

  double x0() const { return cx - 0.5 * w; }
  double y0() const { return cy - 0.5 * h; }
  double x1() const { return cx + 0.5 * w; }
  double y1() const { return cy + 0.5 * h; }
  bool valid() const { return w > 0 && w <= 1 && h > 0 && h <= 1 && cx >= 0 && cx <= 1 && cy >= 0 && cy <= 1; }
  bool operator==(const BoundingBox&) const = default;

  static BoundingBox from_corners(double x0, double y0, double x1, double y1) {
    return {0.5 * (x0 + x1), 0.5 * (y0 + y1), x1 - x0, y1 - y0};
  }
};

double iou(const PixelBox& a, const PixelBox& b);
double iou(const BoundingBox& a, const BoundingBox& b);

// Forces w, h into [min_extent, 1] and the center into [0, 1].
BoundingBox clamp_box(const BoundingBox& b, double min_extent = 1e-3);

std::string format_box(const PixelBox& b);

}  // namespace exitrack::data
