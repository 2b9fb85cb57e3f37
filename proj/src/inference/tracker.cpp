#include "exitrack/inference/tracker.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "exitrack/numerics/errors.hpp"

namespace exitrack::inference {

namespace {

// Box clipped to the frame; zero extents when it lies outside.
data::PixelBox clip_to_frame(const data::PixelBox& b, double width, double height) {
  const double x0 = std::clamp(b.x, 0.0, width), y0 = std::clamp(b.y, 0.0, height);
  const double x1 = std::clamp(b.x + b.w, 0.0, width), y1 = std::clamp(b.y + b.h, 0.0, height);
  return {x0, y0, std::max(0.0, x1 - x0), std::max(0.0, y1 - y0)};
}

bool degenerate(const data::PixelBox& b) {
  return !std::isfinite(b.x) || !std::isfinite(b.y) || !std::isfinite(b.w) || !std::isfinite(b.h) ||
         b.w * b.h < 1.0;
}

}  // namespace

TrackResult track_sequence(const data::Sequence& seq, const Model& model, const ExitPolicy& policy,
                           const TrackOptions& options, std::uint64_t stream) {
  if (seq.frames.empty()) throw ContractError("track_sequence: sequence '" + seq.name + "' has no frames");
  const std::size_t exits = model.exits();
  policy.validate(exits);
  const auto& bb = model.config().backbone;
  num::NoGradGuard no_grad;
  auto rng = num::RandomState(options.seed).split(stream);

  TrackResult result;
  result.sequence = seq.name;
  result.difficulty = seq.difficulty;
  result.attributes = seq.attributes;

  const auto& first = seq.frames.front();
  if (degenerate(first.gt)) throw ContractError("track_sequence: first-frame box of '" + seq.name + "' is empty");
  const auto template_crop =
      data::render_crop(first.image, data::crop_window(first.gt, options.crop.template_factor), bb.template_size);

  data::PixelBox last_valid = first.gt;
  for (std::size_t t = 1; t < seq.frames.size(); ++t) {
    const auto& frame = seq.frames[t];
    FrameRecord rec;
    rec.frame = t;
    const auto start = std::chrono::steady_clock::now();

    const auto window = data::crop_window(last_valid, options.crop.search_factor);
    const auto search = data::render_crop(frame.image, window, bb.search_size);
    auto state = model.start(template_crop, search);
    const std::size_t planned = planned_exit(policy, exits, rng);
    exits::Decision<float> prev;
    exits::ExitOutcome<float> out;
    for (std::size_t k = 1; k <= exits; ++k) {
      auto decision = model.decide(state, k, k > 1 ? &prev : nullptr);
      const double score = decision.score.item();
      rec.scores.push_back(score);
      const bool stop = planned ? k == planned : select_exit(k, exits, score, policy.thresholds);
      if (stop) {
        out = model.finish(decision);
        break;
      }
      prev = std::move(decision);
    }
    const auto predicted = clip_to_frame(data::from_crop(out.box, window), static_cast<double>(frame.image.width),
                                         static_cast<double>(frame.image.height));
    if (degenerate(predicted)) {
      rec.flagged = true;
      rec.box = last_valid;
    } else {
      rec.box = predicted;
      last_valid = predicted;
    }
    const auto stop = std::chrono::steady_clock::now();

    rec.exit_index = out.exit_index;
    rec.score = out.score;
    rec.flops = out.flops_so_far;
    rec.latency_ms = std::chrono::duration<double, std::milli>(stop - start).count();
    rec.iou = data::iou(rec.box, frame.gt);
    rec.center_error = std::hypot(rec.box.cx() - frame.gt.cx(), rec.box.cy() - frame.gt.cy());
    result.frames.push_back(std::move(rec));
  }
  return result;
}

std::vector<TrackResult> track_all(const std::vector<data::Sequence>& sequences, const Model& model,
                                   const ExitPolicy& policy, const TrackOptions& options, std::size_t jobs) {
  std::vector<TrackResult> results(sequences.size());
  jobs = std::max<std::size_t>(1, std::min(jobs, sequences.size()));
  if (jobs == 1) {
    for (std::size_t i = 0; i < sequences.size(); ++i) results[i] = track_sequence(sequences[i], model, policy, options, i);
    return results;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> workers;
  for (std::size_t j = 0; j < jobs; ++j)
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < sequences.size(); i = next++) {
        try {
          results[i] = track_sequence(sequences[i], model, policy, options, i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  for (auto& w : workers) w.join();
  if (failure) std::rethrow_exception(failure);
  return results;
}

double median_latency(const std::vector<TrackResult>& results, std::size_t warmup) {
  std::vector<double> values;
  std::size_t seen = 0;
  for (const auto& r : results)
    for (const auto& f : r.frames)
      if (seen++ >= warmup) values.push_back(f.latency_ms);
  if (values.empty()) return 0.0;
  const auto mid = values.begin() + static_cast<std::ptrdiff_t>(values.size() / 2);
  std::nth_element(values.begin(), mid, values.end());
  if (values.size() % 2) return *mid;
  return 0.5 * (*mid + *std::max_element(values.begin(), mid));
}

double mean_flops(const std::vector<TrackResult>& results) {
  double total = 0;
  std::size_t n = 0;
  for (const auto& r : results)
    for (const auto& f : r.frames) {
      total += static_cast<double>(f.flops);
      ++n;
    }
  return n ? total / static_cast<double>(n) : 0.0;
}

double mean_iou(const std::vector<TrackResult>& results) {
  double total = 0;
  std::size_t n = 0;
  for (const auto& r : results)
    for (const auto& f : r.frames) {
      total += f.iou;
      ++n;
    }
  return n ? total / static_cast<double>(n) : 0.0;
}

std::vector<double> exit_fractions(const std::vector<TrackResult>& results, std::size_t exits) {
  std::vector<double> counts(exits, 0.0);
  double n = 0;
  for (const auto& r : results)
    for (const auto& f : r.frames) {
      if (f.exit_index < 1 || f.exit_index > exits) throw ContractError("frame exit index outside 1..K");
      counts[f.exit_index - 1] += 1.0;
      n += 1.0;
    }
  if (n == 0) throw ContractError("exit_fractions: no frames");
  for (auto& c : counts) c /= n;
  return counts;
}

ExitPolicy match_cost_random_policy(const std::vector<TrackResult>& adaptive, std::size_t exits) {
  return ExitPolicy::random(exit_fractions(adaptive, exits));
}

}  // namespace exitrack::inference
