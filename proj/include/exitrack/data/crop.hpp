#pragma once

#include <cstddef>

#include "exitrack/data/sequence.hpp"
#include "exitrack/numerics/random.hpp"
#include "exitrack/numerics/tensor.hpp"

namespace exitrack::data {

// Square region of a frame in continuous pixel coordinates (pixel (i, j)
// covers [j, j+1) x [i, i+1)). May extend past the frame border.
struct CropWindow {
  double x0 = 0, y0 = 0, side = 1;
};

struct CropConfig {
  std::size_t template_size = 32;
  std::size_t search_size = 64;
  double template_factor = 2.0;  // crop side = factor * sqrt(object area)
  double search_factor = 4.0;
  double center_jitter = 0.0;    // uniform shift per axis, in units of sqrt(object area)
  double scale_jitter = 0.0;     // log-uniform side scaling in [1/(1+s), 1+s]
};

struct SamplePair {
  num::Tensor template_crop;  // [3, template_size, template_size]
  num::Tensor search_crop;    // [3, search_size, search_size]
  BoundingBox target;         // normalized to the search crop
  CropWindow search_window;
};

CropWindow crop_window(const PixelBox& around, double factor, double shift_x = 0.0, double shift_y = 0.0,
                       double scale = 1.0);

// Bilinear resample of `window` to out_size x out_size, channel-major [3, H, W].
// Samples falling outside the frame take the per-channel frame mean.
num::Tensor render_crop(const Image& image, const CropWindow& window, std::size_t out_size);

BoundingBox to_crop(const PixelBox& box, const CropWindow& window);
PixelBox from_crop(const BoundingBox& box, const CropWindow& window);

// Template crop from frame t_template centered on its gt; search crop from
// frame t_search centered on its gt plus jitter. The target box is clipped
// to [0, 1] of the search crop.
SamplePair crop_pair(const Sequence& seq, std::size_t t_template, std::size_t t_search, const CropConfig& config,
                     num::RandomState& rng);

}  // namespace exitrack::data
