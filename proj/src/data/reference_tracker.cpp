#include "exitrack/data/reference_tracker.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace exitrack::data {

namespace {

struct Patch {
  long w = 0, h = 0;
  std::vector<double> values;  // zero mean, unit norm
};

Patch extract(const Image& img, long x, long y, long w, long h) {
  Patch p{w, h, {}};
  p.values.reserve(static_cast<std::size_t>(w * h * 3));
  for (long yy = y; yy < y + h; ++yy)
    for (long xx = x; xx < x + w; ++xx)
      for (std::size_t c = 0; c < 3; ++c) p.values.push_back(img.at(static_cast<std::size_t>(yy), static_cast<std::size_t>(xx), c));
  double mean = 0;
  for (double v : p.values) mean += v;
  mean /= static_cast<double>(p.values.size());
  double norm = 0;
  for (double& v : p.values) {
    v -= mean;
    norm += v * v;
  }
  norm = std::sqrt(norm) + 1e-12;
  for (double& v : p.values) v /= norm;
  return p;
}

}  // namespace

std::vector<PixelBox> reference_track(const Sequence& seq) {
  const auto& first = seq.frames.front();
  const long fw = static_cast<long>(first.image.width), fh = static_cast<long>(first.image.height);
  const long w = std::clamp(std::lround(first.gt.w), 1L, fw), h = std::clamp(std::lround(first.gt.h), 1L, fh);
  long px = std::clamp(std::lround(first.gt.x), 0L, fw - w), py = std::clamp(std::lround(first.gt.y), 0L, fh - h);
  const Patch templ = extract(first.image, px, py, w, h);
  const long radius = std::max(w, h);

  std::vector<PixelBox> out;
  for (std::size_t t = 1; t < seq.frames.size(); ++t) {
    const auto& img = seq.frames[t].image;
    double best = -std::numeric_limits<double>::infinity();
    long bx = px, by = py;
    for (long y = std::max(0L, py - radius); y <= std::min(fh - h, py + radius); ++y) {
      for (long x = std::max(0L, px - radius); x <= std::min(fw - w, px + radius); ++x) {
        // the template is zero-mean, so the candidate mean only enters its norm
        double dot = 0, sum = 0, sq = 0;
        std::size_t i = 0;
        for (long yy = y; yy < y + h; ++yy) {
          const float* row = &img.pixels[(static_cast<std::size_t>(yy) * img.width + static_cast<std::size_t>(x)) * 3];
          for (long k = 0; k < w * 3; ++k, ++i) {
            const double v = row[k];
            dot += v * templ.values[i];
            sum += v;
            sq += v * v;
          }
        }
        const double n = static_cast<double>(i);
        const double score = dot / (std::sqrt(std::max(0.0, sq - sum * sum / n)) + 1e-12);
        if (score > best) {
          best = score;
          bx = x;
          by = y;
        }
      }
    }
    px = bx;
    py = by;
    out.push_back({static_cast<double>(px), static_cast<double>(py), static_cast<double>(w), static_cast<double>(h)});
  }
  return out;
}

double reference_mean_iou(const Sequence& seq) {
  const auto boxes = reference_track(seq);
  double total = 0;
  for (std::size_t i = 0; i < boxes.size(); ++i) total += iou(boxes[i], seq.frames[i + 1].gt);
  return total / static_cast<double>(boxes.size());
}

}  // namespace exitrack::data
