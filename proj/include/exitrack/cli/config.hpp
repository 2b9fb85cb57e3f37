#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "exitrack/exits/model.hpp"
#include "exitrack/objectives/trainer.hpp"

namespace exitrack::cli {

struct DataConfig {
  int levels = 5;
  std::size_t train_per_level = 12;
  std::size_t val_per_level = 4;
  std::size_t test_per_level = 8;
  std::size_t length = 40;
  std::size_t frame_size = 128;
  double template_factor = 2.0;
  double search_factor = 4.0;
};

struct InferConfig {
  std::string policy = "adaptive";
  std::vector<double> thresholds{0.5, 0.5};
  std::size_t grid_points = 21;
  double refine_step = 0.05;
  double precision_threshold = 0.0;  // pixels; 0 scales the customary 20 px to the frame size
};

// Everything a command needs, read from an INI file with sections [data],
// [backbone], [exits], [train] and [infer]. Unknown sections or keys are errors.
struct RunConfig {
  DataConfig data;
  exits::ModelConfig model;
  objectives::TrainConfig train;
  InferConfig infer;
  std::uint64_t seed = 1;

  static RunConfig parse(const std::string& ini_text, const std::string& origin = "<config>");
  static RunConfig load(const std::filesystem::path& path);
  std::string to_ini() const;
  void validate() const;
};

// Sequence seeds for gen-data: one independent stream per (split, level, index).
std::uint64_t sequence_seed(std::uint64_t seed, int split, int level, std::size_t index);

}  // namespace exitrack::cli
