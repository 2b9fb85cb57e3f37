#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "exitrack/data/box.hpp"

namespace exitrack::data {

// RGB raster, interleaved row-major (y, x, channel), values in [0, 1].
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(std::size_t h, std::size_t w, float fill = 0.0f) : height(h), width(w), pixels(h * w * 3, fill) {}

  float& at(std::size_t y, std::size_t x, std::size_t c) { return pixels[(y * width + x) * 3 + c]; }
  float at(std::size_t y, std::size_t x, std::size_t c) const { return pixels[(y * width + x) * 3 + c]; }
  // per-channel mean
  std::array<float, 3> mean() const;
  bool operator==(const Image&) const = default;
};

// Rounds every value to the nearest multiple of 1/255 so 8-bit rasters
// round-trip exactly.
void quantize(Image& image);

struct Frame {
  Image image;
  PixelBox gt;
};

struct Sequence {
  std::string name;
  std::vector<Frame> frames;
  int difficulty = 0;
  std::set<std::string> attributes;
};

// Binary PPM (P6, maxval 255).
void write_ppm(const Image& image, const std::filesystem::path& path);
Image read_ppm(const std::filesystem::path& path);

// Layout: <dir>/img/00000001.ppm ..., <dir>/groundtruth.txt with one
// "x,y,w,h" line per frame, <dir>/meta.txt with key=value lines.
void write_sequence(const Sequence& seq, const std::filesystem::path& dir);
Sequence read_sequence(const std::filesystem::path& dir);

std::vector<PixelBox> read_groundtruth(const std::filesystem::path& file);
PixelBox parse_annotation(const std::string& line, std::size_t line_number);

// Every sequence directory directly below `root`, sorted by name.
std::vector<Sequence> read_split(const std::filesystem::path& root);

}  // namespace exitrack::data
