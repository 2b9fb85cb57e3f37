#pragma once

#include <map>
#include <string>
#include <vector>

#include "exitrack/inference/tracker.hpp"

namespace exitrack::evaluation {

using inference::TrackResult;

struct SuccessCurve {
  double auc = 0;                 // continuous area, equals 100 * mean IoU
  double sampled_auc = 0;         // mean of the 21-point curve
  std::vector<double> thresholds; // 0, 0.05, ..., 1
  std::vector<double> success;    // percent of frames with IoU > threshold
};

// Throws ContractError for an empty list or IoUs outside [0, 1].
SuccessCurve success_auc(const std::vector<double>& ious);

// Percent of frames whose center error is within `threshold` pixels.
double precision_at(const std::vector<double>& center_errors, double threshold);

// The customary 20-pixel threshold, scaled from a 640-pixel-wide frame.
double precision_threshold(double frame_width);

struct MetricReport {
  std::size_t frames = 0;
  double auc = 0;
  double sampled_auc = 0;
  double precision = 0;
  double mean_iou = 0;
  double mean_flops = 0;
  double latency_ms = 0;
  std::vector<double> exit_fractions;
  std::map<int, double> difficulty_iou;
};

MetricReport metric_report(const std::vector<TrackResult>& results, std::size_t exits, double precision_threshold);
std::string metric_report_csv(const std::vector<std::pair<std::string, MetricReport>>& reports,
                              bool with_latency = true);

struct ExitDepthRow {
  std::size_t exit = 0;
  std::size_t frames = 0;
  double mean_iou = 0;
};

struct AttributeDepthRow {
  std::string attribute;
  std::size_t frames = 0;
  double mean_exit = 0;
};

struct ExitDepthReport {
  std::vector<ExitDepthRow> exits;             // only exits that were realized
  std::vector<AttributeDepthRow> attributes;   // "none" collects untagged sequences
};

ExitDepthReport exit_depth_report(const std::vector<TrackResult>& results);
std::string exit_depth_csv(const ExitDepthReport& report);

struct DifficultyReport {
  std::vector<std::string> models;
  std::vector<int> levels;                          // levels with frames for every model
  std::vector<std::vector<double>> mean_iou;        // [model][level]
  std::vector<std::vector<std::size_t>> frames;     // [model][level]
  std::vector<std::string> warnings;

  // mean_iou[m][l] - mean_iou[0][l]
  double gain(std::size_t model, std::size_t level) const { return mean_iou[model][level] - mean_iou[0][level]; }
};

// One run per exit model (for instance fixed:1..K), in the order given.
DifficultyReport difficulty_report(const std::vector<std::pair<std::string, std::vector<TrackResult>>>& runs,
                                   int levels = 5);
std::string difficulty_csv(const DifficultyReport& report);

// One tracked sequence: frame, x, y, w, h, exit, score[, ms].
std::string track_csv(const TrackResult& result, bool with_latency = true);

// Per-frame rows: sequence, frame, x, y, w, h, exit, score, iou, flops[, ms].
std::string frames_csv(const std::vector<TrackResult>& results, bool with_latency = true);

}  // namespace exitrack::evaluation
