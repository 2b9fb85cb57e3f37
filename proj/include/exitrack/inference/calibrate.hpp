#pragma once

#include <string>
#include <vector>

#include "exitrack/inference/tracker.hpp"

namespace exitrack::inference {

struct CalibrationRow {
  std::vector<double> thresholds;
  double latency_ms = 0;      // median per frame
  double mean_flops = 0;
  double mean_iou = 0;
  std::vector<double> exit_fractions;
  std::string label;          // "fast", "medi", "base", a  join of them, or empty
};

struct CalibrationConfig {
  std::size_t grid_points = 21;   // shared scalar tau in {0, 1/(n-1), ..., 1}
  double refine_step = 0.05;      // per-slot +/- step around the chosen scalar
  std::size_t jobs = 1;
};

// Sweeps the scalar grid, then refines each slot around the best-trade-off
// scalar. Rows are sorted by cost: mean FLOPs, which orders latency without
// wall-clock noise. Throws ContractError for an empty validation set.
std::vector<CalibrationRow> calibrate(const Model& model, const std::vector<data::Sequence>& validation,
                                      const TrackOptions& options, const CalibrationConfig& config = {});

// Operating point with the largest IoU gain over the straight line between
// the cheapest and the most expensive rows (by FLOPs); ties go to fewer FLOPs.
std::size_t knee_point(const std::vector<CalibrationRow>& rows);

// Names the fastest row "fast", the knee "medi" and the most accurate "base".
// A row holding several roles gets them joined with '+', e.g. "fast+medi".
void label_operating_points(std::vector<CalibrationRow>& rows);

std::string calibration_csv(const std::vector<CalibrationRow>& rows, bool with_latency = true);

}  // namespace exitrack::inference
