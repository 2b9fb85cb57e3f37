#include "exitrack/data/crop.hpp"

#include <algorithm>
#include <cmath>

namespace exitrack::data {

CropWindow crop_window(const PixelBox& around, double factor, double shift_x, double shift_y, double scale) {
  const double side = factor * std::sqrt(around.area()) * scale;
  return {around.cx() + shift_x - 0.5 * side, around.cy() + shift_y - 0.5 * side, side};
}

num::Tensor render_crop(const Image& image, const CropWindow& window, std::size_t out_size) {
  const auto fill = image.mean();
  num::Tensor out({3, out_size, out_size});
  auto dst = out.data();
  const double step = window.side / static_cast<double>(out_size);
  const long h = static_cast<long>(image.height), w = static_cast<long>(image.width);
  const std::size_t plane = out_size * out_size;
  for (std::size_t v = 0; v < out_size; ++v) {
    // continuous sample position, shifted so integer values hit pixel centers
    const double sy = window.y0 + (static_cast<double>(v) + 0.5) * step - 0.5;
    const long y0 = static_cast<long>(std::floor(sy));
    const double fy = sy - static_cast<double>(y0);
    for (std::size_t u = 0; u < out_size; ++u) {
      const double sx = window.x0 + (static_cast<double>(u) + 0.5) * step - 0.5;
      const long x0 = static_cast<long>(std::floor(sx));
      const double fx = sx - static_cast<double>(x0);
      for (std::size_t c = 0; c < 3; ++c) {
        auto px = [&](long y, long x) -> double {
          if (y < 0 || y >= h || x < 0 || x >= w) return fill[c];
          return image.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x), c);
        };
        const double top = (1 - fx) * px(y0, x0) + fx * px(y0, x0 + 1);
        const double bottom = (1 - fx) * px(y0 + 1, x0) + fx * px(y0 + 1, x0 + 1);
        dst[c * plane + v * out_size + u] = static_cast<float>((1 - fy) * top + fy * bottom);
      }
    }
  }
  return out;
}

BoundingBox to_crop(const PixelBox& box, const CropWindow& window) {
  return {(box.cx() - window.x0) / window.side, (box.cy() - window.y0) / window.side, box.w / window.side,
          box.h / window.side};
}

PixelBox from_crop(const BoundingBox& box, const CropWindow& window) {
  const double w = box.w * window.side, h = box.h * window.side;
  return {window.x0 + box.cx * window.side - 0.5 * w, window.y0 + box.cy * window.side - 0.5 * h, w, h};
}

SamplePair crop_pair(const Sequence& seq, std::size_t t_template, std::size_t t_search, const CropConfig& config,
                     num::RandomState& rng) {
  if (t_template >= seq.frames.size() || t_search >= seq.frames.size())
    throw ContractError("crop_pair: frame index out of range for sequence of " + std::to_string(seq.frames.size()) +
                        " frames");
  const auto& zf = seq.frames[t_template];
  const auto& xf = seq.frames[t_search];
  SamplePair pair;
  pair.template_crop = render_crop(zf.image, crop_window(zf.gt, config.template_factor), config.template_size);

  const double unit = std::sqrt(xf.gt.area());
  double shift_x = 0, shift_y = 0, scale = 1;
  if (config.center_jitter > 0) {
    shift_x = rng.uniform(-config.center_jitter, config.center_jitter) * unit;
    shift_y = rng.uniform(-config.center_jitter, config.center_jitter) * unit;
  }
  if (config.scale_jitter > 0) scale = std::exp(rng.uniform(-1, 1) * std::log1p(config.scale_jitter));
  pair.search_window = crop_window(xf.gt, config.search_factor, shift_x, shift_y, scale);
  pair.search_crop = render_crop(xf.image, pair.search_window, config.search_size);

  // clip the target to the crop, then re-center on the clipped extent
  const auto raw = to_crop(xf.gt, pair.search_window);
  const double x0 = std::clamp(raw.x0(), 0.0, 1.0), x1 = std::clamp(raw.x1(), 0.0, 1.0);
  const double y0 = std::clamp(raw.y0(), 0.0, 1.0), y1 = std::clamp(raw.y1(), 0.0, 1.0);
  pair.target = clamp_box(BoundingBox::from_corners(x0, y0, x1, y1));
  return pair;
}

}  // namespace exitrack::data
