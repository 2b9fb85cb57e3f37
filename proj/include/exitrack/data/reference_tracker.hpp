#pragma once

#include <vector>

#include "exitrack/data/sequence.hpp"

namespace exitrack::data {

// Fixed baseline used to calibrate the difficulty levels: normalized
// cross-correlation against the first-frame target patch, exhaustive over
// integer offsets within one object size of the previous position. The box
// size never changes. Returns one box per frame after the first.
std::vector<PixelBox> reference_track(const Sequence& seq);

// Mean IoU of reference_track against the ground truth.
double reference_mean_iou(const Sequence& seq);

}  // namespace exitrack::data
