#include "exitrack/data/generator.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "exitrack/numerics/errors.hpp"

namespace exitrack::data {

using Color = std::array<float, 3>;

void GeneratorConfig::validate() const {
  if (length < 2) throw ConfigError("sequence length must be at least 2");
  if (frame_size < 16) throw ConfigError("frame_size must be at least 16");
  if (target_min <= 1.0 || target_max < target_min) throw ConfigError("target size range must satisfy 1 < min <= max");
  const double largest = target_max * std::sqrt(aspect_max) * (1.0 + deformation);
  if (largest + 2.0 > static_cast<double>(frame_size))
    throw ConfigError("target of up to " + std::to_string(largest) + " px does not fit a " + std::to_string(frame_size) +
                      " px frame");
  if (aspect_max < 1.0) throw ConfigError("aspect_max must be >= 1");
  if (similarity < 0 || similarity > 1) throw ConfigError("similarity must lie in [0,1]");
  if (occlusion_prob < 0 || occlusion_prob >= 1) throw ConfigError("occlusion_prob must lie in [0,1)");
  if (occlusion_max < 0 || occlusion_max > 1) throw ConfigError("occlusion_max must lie in [0,1]");
  if (motion < 0 || noise < 0 || deformation < 0 || deformation >= 0.5)
    throw ConfigError("motion, noise must be >= 0 and deformation in [0,0.5)");
  if (difficulty < 0 || difficulty >= kDifficultyLevels) throw ConfigError("difficulty must lie in [0,4]");
}

GeneratorConfig difficulty_preset(int level, std::size_t length) {
  if (level < 0 || level >= kDifficultyLevels) throw ConfigError("difficulty level must lie in [0,4], got " + std::to_string(level));
  static constexpr std::size_t kDistractors[] = {0, 1, 2, 3, 4};
  static constexpr double kSimilarity[] = {0.0, 0.3, 0.6, 0.8, 0.95};
  static constexpr double kOcclusion[] = {0.0, 0.0, 0.15, 0.25, 0.35};
  static constexpr double kMotion[] = {1.5, 2.5, 3.5, 4.5, 6.0};
  static constexpr double kNoise[] = {0.02, 0.04, 0.06, 0.08, 0.10};
  static constexpr std::size_t kClutter[] = {0, 4, 8, 12, 16};
  static constexpr double kDeform[] = {0.0, 0.05, 0.10, 0.15, 0.20};
  GeneratorConfig c;
  c.length = length;
  c.difficulty = level;
  c.distractors = kDistractors[level];
  c.similarity = kSimilarity[level];
  c.occlusion_prob = kOcclusion[level];
  c.motion = kMotion[level];
  c.noise = kNoise[level];
  c.clutter = kClutter[level];
  c.deformation = kDeform[level];
  return c;
}

namespace {

struct Appearance {
  Color body;
  Color mark;
  bool ellipse = true;
  bool vertical_stripe = false;
};

Color random_color(num::RandomState& rng) {
  // saturated colors so the target stands out from the muted background
  Color c;
  const std::size_t strong = rng.index(3);
  for (std::size_t i = 0; i < 3; ++i)
    c[i] = static_cast<float>(i == strong ? rng.uniform(0.75, 1.0) : rng.uniform(0.0, 0.45));
  return c;
}

Color mix(const Color& a, const Color& b, double t) {
  Color c;
  for (int i = 0; i < 3; ++i) c[i] = static_cast<float>((1 - t) * a[i] + t * b[i]);
  return c;
}

Appearance random_appearance(num::RandomState& rng) {
  Appearance a;
  a.body = random_color(rng);
  a.mark = random_color(rng);
  a.ellipse = rng.bernoulli(0.5);
  a.vertical_stripe = rng.bernoulli(0.5);
  return a;
}

Appearance blend(const Appearance& own, const Appearance& target, double similarity, num::RandomState& rng) {
  Appearance a;
  a.body = mix(own.body, target.body, similarity);
  a.mark = mix(own.mark, target.mark, similarity);
  a.ellipse = rng.uniform() < similarity ? target.ellipse : own.ellipse;
  a.vertical_stripe = rng.uniform() < similarity ? target.vertical_stripe : own.vertical_stripe;
  return a;
}

// Object footprint with anti-aliased coverage computed on a 2x2 subgrid.
void draw_object(Image& img, const PixelBox& box, const Appearance& look) {
  const long x0 = std::max(0L, static_cast<long>(std::floor(box.x)));
  const long y0 = std::max(0L, static_cast<long>(std::floor(box.y)));
  const long x1 = std::min(static_cast<long>(img.width), static_cast<long>(std::ceil(box.x + box.w)));
  const long y1 = std::min(static_cast<long>(img.height), static_cast<long>(std::ceil(box.y + box.h)));
  for (long y = y0; y < y1; ++y) {
    for (long x = x0; x < x1; ++x) {
      int inside = 0;
      int marked = 0;
      for (int sy = 0; sy < 2; ++sy) {
        for (int sx = 0; sx < 2; ++sx) {
          const double px = x + 0.25 + 0.5 * sx, py = y + 0.25 + 0.5 * sy;
          const double u = (px - box.x) / box.w, v = (py - box.y) / box.h;  // [0,1] inside the box
          bool in = u >= 0 && u < 1 && v >= 0 && v < 1;
          if (in && look.ellipse) in = (u - 0.5) * (u - 0.5) + (v - 0.5) * (v - 0.5) <= 0.25;
          if (!in) continue;
          ++inside;
          const double s = look.vertical_stripe ? u : v;
          if (s > 0.35 && s < 0.65) ++marked;
        }
      }
      if (!inside) continue;
      const double cover = inside / 4.0, mark = marked / static_cast<double>(inside);
      for (int c = 0; c < 3; ++c) {
        const double col = (1 - mark) * look.body[c] + mark * look.mark[c];
        auto& p = img.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x), static_cast<std::size_t>(c));
        p = static_cast<float>((1 - cover) * p + cover * col);
      }
    }
  }
}

void fill_rect(Image& img, const PixelBox& box, const Color& color) {
  const long x0 = std::max(0L, std::lround(box.x)), y0 = std::max(0L, std::lround(box.y));
  const long x1 = std::min(static_cast<long>(img.width), std::lround(box.x + box.w));
  const long y1 = std::min(static_cast<long>(img.height), std::lround(box.y + box.h));
  for (long y = y0; y < y1; ++y)
    for (long x = x0; x < x1; ++x)
      for (int c = 0; c < 3; ++c) img.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x), static_cast<std::size_t>(c)) = color[c];
}

// Smoothly wandering point that bounces off the frame border.
struct Mover {
  double cx, cy, vx, vy, speed;
  double base_w, base_h, phase_w, phase_h, omega;

  PixelBox box(std::size_t t, double deformation) const {
    const double w = base_w * (1 + deformation * std::sin(phase_w + omega * static_cast<double>(t)));
    const double h = base_h * (1 + deformation * std::sin(phase_h + omega * static_cast<double>(t)));
    return {cx - 0.5 * w, cy - 0.5 * h, w, h};
  }

  void step(num::RandomState& rng, double frame, double half_extent_x, double half_extent_y) {
    vx += 0.35 * speed * rng.normal();
    vy += 0.35 * speed * rng.normal();
    const double norm = std::hypot(vx, vy);
    if (norm > 1e-9) {
      vx *= speed / norm;
      vy *= speed / norm;
    }
    cx += vx;
    cy += vy;
    const double lo_x = half_extent_x + 1, hi_x = frame - half_extent_x - 1;
    const double lo_y = half_extent_y + 1, hi_y = frame - half_extent_y - 1;
    if (cx < lo_x) { cx = 2 * lo_x - cx; vx = std::abs(vx); }
    if (cx > hi_x) { cx = 2 * hi_x - cx; vx = -std::abs(vx); }
    if (cy < lo_y) { cy = 2 * lo_y - cy; vy = std::abs(vy); }
    if (cy > hi_y) { cy = 2 * hi_y - cy; vy = -std::abs(vy); }
    cx = std::clamp(cx, lo_x, hi_x);
    cy = std::clamp(cy, lo_y, hi_y);
  }
};

Mover make_mover(num::RandomState& rng, const GeneratorConfig& cfg, double side, double aspect) {
  Mover m{};
  const double frame = static_cast<double>(cfg.frame_size);
  m.base_w = side * std::sqrt(aspect);
  m.base_h = side / std::sqrt(aspect);
  const double mx = 0.5 * m.base_w * (1 + cfg.deformation) + 1, my = 0.5 * m.base_h * (1 + cfg.deformation) + 1;
  m.cx = rng.uniform(mx, frame - mx);
  m.cy = rng.uniform(my, frame - my);
  const double angle = rng.uniform(0, 2 * std::numbers::pi);
  m.speed = cfg.motion * rng.uniform(0.7, 1.3);
  m.vx = m.speed * std::cos(angle);
  m.vy = m.speed * std::sin(angle);
  m.phase_w = rng.uniform(0, 2 * std::numbers::pi);
  m.phase_h = rng.uniform(0, 2 * std::numbers::pi);
  m.omega = rng.uniform(0.15, 0.4);
  return m;
}

}  // namespace

Sequence generate_sequence(const GeneratorConfig& cfg, num::RandomState& rng) {
  cfg.validate();
  const double frame = static_cast<double>(cfg.frame_size);
  Sequence seq;
  seq.difficulty = cfg.difficulty;

  // background: muted linear gradient plus static clutter patches
  const Color bg0{static_cast<float>(rng.uniform(0.25, 0.55)), static_cast<float>(rng.uniform(0.25, 0.55)),
                  static_cast<float>(rng.uniform(0.25, 0.55))};
  const Color bg1{static_cast<float>(rng.uniform(0.25, 0.55)), static_cast<float>(rng.uniform(0.25, 0.55)),
                  static_cast<float>(rng.uniform(0.25, 0.55))};
  const double gx = rng.uniform(-1, 1), gy = rng.uniform(-1, 1);
  Image background(cfg.frame_size, cfg.frame_size);
  for (std::size_t y = 0; y < cfg.frame_size; ++y) {
    for (std::size_t x = 0; x < cfg.frame_size; ++x) {
      const double t = std::clamp(0.5 + 0.5 * (gx * (x / frame - 0.5) + gy * (y / frame - 0.5)) * 2, 0.0, 1.0);
      for (int c = 0; c < 3; ++c) background.at(y, x, static_cast<std::size_t>(c)) = static_cast<float>((1 - t) * bg0[c] + t * bg1[c]);
    }
  }
  for (std::size_t i = 0; i < cfg.clutter; ++i) {
    const double w = rng.uniform(4, 14), h = rng.uniform(4, 14);
    Color col;
    for (auto& v : col) v = static_cast<float>(rng.uniform(0.15, 0.7));
    fill_rect(background, {rng.uniform(0, frame - w), rng.uniform(0, frame - h), w, h}, col);
  }

  const Appearance target_look = random_appearance(rng);
  const double target_side = rng.uniform(cfg.target_min, cfg.target_max);
  const double target_aspect = std::exp(rng.uniform(-1, 1) * std::log(cfg.aspect_max) * 0.5);
  Mover target = make_mover(rng, cfg, target_side, target_aspect);

  std::vector<Mover> distractors;
  std::vector<Appearance> distractor_looks;
  for (std::size_t i = 0; i < cfg.distractors; ++i) {
    const double side = target_side * rng.uniform(1 - 0.3 * (1 - cfg.similarity), 1 + 0.3 * (1 - cfg.similarity));
    const double aspect = std::exp(rng.uniform(-1, 1) * std::log(cfg.aspect_max) * 0.5);
    distractors.push_back(make_mover(rng, cfg, side, aspect));
    distractor_looks.push_back(blend(random_appearance(rng), target_look, cfg.similarity, rng));
  }

  // occlusion episodes of 3-6 frames; start probability chosen so the
  // long-run occluded fraction matches occlusion_prob
  const double mean_duration = 4.5;
  const double start_prob =
      cfg.occlusion_prob > 0 ? cfg.occlusion_prob / (mean_duration * (1 - cfg.occlusion_prob)) : 0.0;
  std::size_t occluded_left = 0;
  double occ_fraction = 0;
  int occ_side = 0;
  Color occ_color{};
  bool any_occlusion = false;

  for (std::size_t t = 0; t < cfg.length; ++t) {
    if (t > 0) {
      target.step(rng, frame, 0.5 * target.base_w * (1 + cfg.deformation), 0.5 * target.base_h * (1 + cfg.deformation));
      for (auto& d : distractors) d.step(rng, frame, 0.5 * d.base_w * (1 + cfg.deformation), 0.5 * d.base_h * (1 + cfg.deformation));
    }
    Image img = background;
    for (std::size_t i = 0; i < distractors.size(); ++i) draw_object(img, distractors[i].box(t, cfg.deformation), distractor_looks[i]);
    const PixelBox gt = target.box(t, cfg.deformation);
    draw_object(img, gt, target_look);

    // the first frame stays clean: it defines the template
    if (t > 0 && occluded_left == 0 && rng.bernoulli(start_prob)) {
      occluded_left = 3 + rng.index(4);
      occ_fraction = rng.uniform(0.3, std::max(0.3, cfg.occlusion_max));
      occ_side = static_cast<int>(rng.index(4));
      for (auto& v : occ_color) v = static_cast<float>(rng.uniform(0.2, 0.6));
    }
    if (occluded_left > 0) {
      PixelBox occ = gt;
      switch (occ_side) {
        case 0: occ.w = gt.w * occ_fraction; break;
        case 1: occ.x = gt.x + gt.w * (1 - occ_fraction); occ.w = gt.w * occ_fraction; break;
        case 2: occ.h = gt.h * occ_fraction; break;
        default: occ.y = gt.y + gt.h * (1 - occ_fraction); occ.h = gt.h * occ_fraction; break;
      }
      // occluders overhang the target so they read as separate objects
      occ.x -= 2; occ.y -= 2; occ.w += 4; occ.h += 4;
      fill_rect(img, occ, occ_color);
      --occluded_left;
      any_occlusion = true;
    }
    if (cfg.noise > 0)
      for (auto& v : img.pixels) v += static_cast<float>(cfg.noise * rng.normal());
    quantize(img);
    seq.frames.push_back({std::move(img), gt});
  }

  if (!distractors.empty()) seq.attributes.insert("distractor");
  if (any_occlusion) seq.attributes.insert("occlusion");
  if (cfg.motion >= 4.0) seq.attributes.insert("fast-motion");
  if (cfg.deformation > 0) seq.attributes.insert("deformation");
  if (cfg.clutter >= 8) seq.attributes.insert("clutter");
  return seq;
}

}  // namespace exitrack::data
