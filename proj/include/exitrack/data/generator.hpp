#pragma once

#include <cstddef>

#include "exitrack/data/sequence.hpp"
#include "exitrack/numerics/random.hpp"

namespace exitrack::data {

struct GeneratorConfig {
  std::size_t length = 40;
  std::size_t frame_size = 128;   // square frames
  double target_min = 12.0;       // side length range of the target, px
  double target_max = 22.0;
  double aspect_max = 1.6;        // max(w/h, h/w) at creation
  std::size_t distractors = 0;
  double similarity = 0.0;        // 0: unrelated look, 1: identical to target
  double occlusion_prob = 0.0;    // long-run fraction of frames with an occluder
  double occlusion_max = 0.6;     // largest covered fraction of the target
  double motion = 1.5;            // mean speed, px/frame
  double noise = 0.02;            // gaussian pixel noise stddev
  std::size_t clutter = 0;        // static background patches
  double deformation = 0.0;       // relative amplitude of size oscillation
  int difficulty = 0;

  // Throws ConfigError when the target cannot fit the frame or a field is
  // out of range.
  void validate() const;
};

constexpr int kDifficultyLevels = 5;

// Committed difficulty table:
//
//   level  distractors  similarity  occlusion  motion  noise  clutter  deform
//   0      0            0.00        0.00       1.5     0.02   0        0.00
//   1      1            0.30        0.00       2.5     0.04   4        0.05
//   2      2            0.60        0.15       3.5     0.06   8        0.10
//   3      3            0.80        0.25       4.5     0.08   12       0.15
//   4      4            0.95        0.35       6.0     0.10   16       0.20
GeneratorConfig difficulty_preset(int level, std::size_t length = 40);

// Deterministic in (config, rng state). Attributes are tagged from what was
// actually rendered: distractor, occlusion, fast-motion, deformation, clutter.
Sequence generate_sequence(const GeneratorConfig& config, num::RandomState& rng);

}  // namespace exitrack::data
