#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "exitrack/data/crop.hpp"
#include "exitrack/exits/model.hpp"
#include "exitrack/inference/policy.hpp"

namespace exitrack::inference {

using Model = exits::ExitModel<float>;

struct FrameRecord {
  std::size_t frame = 0;            // index in the sequence, >= 1
  data::PixelBox box;               // frame coordinates
  std::size_t exit_index = 0;       // realized exit, 1-based
  double score = 0;                 // s_k at the realized exit
  std::vector<double> scores;       // every score evaluated on this frame, in exit order
  double latency_ms = 0;
  std::uint64_t flops = 0;
  double iou = 0;                   // against the annotation
  double center_error = 0;          // pixels
  bool flagged = false;             // degenerate prediction, search reset to the last valid box
};

struct TrackResult {
  std::string sequence;
  int difficulty = 0;
  std::set<std::string> attributes;
  std::vector<FrameRecord> frames;  // one per frame after the first
};

struct TrackOptions {
  data::CropConfig crop;  // jitter fields are ignored
  std::uint64_t seed = 1; // drives random policies only
};

// Tracks one sequence from its first-frame annotation. `stream` selects an
// independent random stream so that results do not depend on scheduling.
TrackResult track_sequence(const data::Sequence& seq, const Model& model, const ExitPolicy& policy,
                           const TrackOptions& options, std::uint64_t stream = 0);

// Tracks every sequence, optionally on `jobs` threads. Output order matches
// the input order and results are identical for any job count (wall-clock
// columns aside).
std::vector<TrackResult> track_all(const std::vector<data::Sequence>& sequences, const Model& model,
                                   const ExitPolicy& policy, const TrackOptions& options, std::size_t jobs = 1);

// Median per-frame latency in processing order, skipping the first `warmup` frames.
double median_latency(const std::vector<TrackResult>& results, std::size_t warmup = 20);

double mean_flops(const std::vector<TrackResult>& results);
double mean_iou(const std::vector<TrackResult>& results);

// Fraction of frames realized at each exit (K entries).
std::vector<double> exit_fractions(const std::vector<TrackResult>& results, std::size_t exits);

// The random policy with the adaptive run's empirical exit distribution.
ExitPolicy match_cost_random_policy(const std::vector<TrackResult>& adaptive, std::size_t exits);

}  // namespace exitrack::inference
