#include "exitrack/inference/calibrate.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "exitrack/numerics/errors.hpp"
#include "exitrack/numerics/text.hpp"

namespace exitrack::inference {

namespace {

CalibrationRow evaluate(const Model& model, const std::vector<data::Sequence>& validation, const TrackOptions& options,
                        std::vector<double> thresholds, std::size_t jobs) {
  const auto results = track_all(validation, model, ExitPolicy::adaptive(thresholds), options, jobs);
  CalibrationRow row;
  row.thresholds = std::move(thresholds);
  row.latency_ms = median_latency(results);
  row.mean_flops = mean_flops(results);
  row.mean_iou = mean_iou(results);
  row.exit_fractions = exit_fractions(results, model.exits());
  return row;
}

double snap(double v) { return std::round(v * 1e9) / 1e9; }

}  // namespace

std::size_t knee_point(const std::vector<CalibrationRow>& rows) {
  if (rows.empty()) throw ContractError("knee_point: no rows");
  auto cheap = rows.begin(), dear = rows.begin();
  for (auto it = rows.begin(); it != rows.end(); ++it) {
    if (it->mean_flops < cheap->mean_flops) cheap = it;
    if (it->mean_flops > dear->mean_flops) dear = it;
  }
  const double span = dear->mean_flops - cheap->mean_flops;
  std::size_t best = 0;
  double best_gain = -1e300;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double frac = span > 0 ? (rows[i].mean_flops - cheap->mean_flops) / span : 0.0;
    const double line = cheap->mean_iou + frac * (dear->mean_iou - cheap->mean_iou);
    const double gain = rows[i].mean_iou - line;
    if (gain > best_gain + 1e-12 || (std::abs(gain - best_gain) <= 1e-12 && rows[i].mean_flops < rows[best].mean_flops)) {
      best_gain = gain;
      best = i;
    }
  }
  return best;
}

void label_operating_points(std::vector<CalibrationRow>& rows) {
  if (rows.empty()) return;
  for (auto& r : rows) r.label.clear();
  std::size_t fast = 0, base = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].mean_flops < rows[fast].mean_flops) fast = i;
    if (rows[i].mean_iou > rows[base].mean_iou) base = i;
  }
  auto add = [&](std::size_t i, const char* name) { rows[i].label += (rows[i].label.empty() ? "" : "+") + std::string(name); };
  add(fast, "fast");
  add(knee_point(rows), "medi");
  add(base, "base");
}

std::vector<CalibrationRow> calibrate(const Model& model, const std::vector<data::Sequence>& validation,
                                      const TrackOptions& options, const CalibrationConfig& config) {
  if (validation.empty()) throw ContractError("calibrate: empty validation set");
  if (config.grid_points < 2) throw ConfigError("calibrate: the threshold grid needs at least 2 points");
  const std::size_t slots = model.exits() - 1;
  std::vector<CalibrationRow> rows;
  for (std::size_t i = 0; i < config.grid_points; ++i) {
    const double tau = snap(static_cast<double>(i) / static_cast<double>(config.grid_points - 1));
    rows.push_back(evaluate(model, validation, options, std::vector<double>(slots, tau), config.jobs));
  }
  const auto chosen = rows[knee_point(rows)].thresholds;
  for (std::size_t s = 0; s < slots; ++s)
    for (double delta : {-config.refine_step, config.refine_step}) {
      auto tau = chosen;
      tau[s] = snap(std::clamp(tau[s] + delta, 0.0, 1.0));
      if (tau == chosen) continue;
      rows.push_back(evaluate(model, validation, options, tau, config.jobs));
    }
  // Ordered by the deterministic latency model (FLOPs) so that the table is
  // reproducible; measured wall-clock jitters between runs.
  std::stable_sort(rows.begin(), rows.end(), [](const CalibrationRow& a, const CalibrationRow& b) {
    if (a.mean_flops != b.mean_flops) return a.mean_flops < b.mean_flops;
    return a.thresholds < b.thresholds;
  });
  label_operating_points(rows);
  return rows;
}

std::string calibration_csv(const std::vector<CalibrationRow>& rows, bool with_latency) {
  std::ostringstream os;
  const std::size_t exits = rows.empty() ? 0 : rows.front().exit_fractions.size();
  for (std::size_t k = 1; k < exits; ++k) os << "tau" << k << ',';
  if (with_latency) os << "latency_ms,";
  os << "mean_flops,mean_iou";
  for (std::size_t k = 1; k <= exits; ++k) os << ",exit" << k << "_fraction";
  os << ",label\n";
  for (const auto& r : rows) {
    for (double t : r.thresholds) os << num::format_number(t) << ',';
    if (with_latency) os << num::format_number(r.latency_ms) << ',';
    os << num::format_number(r.mean_flops) << ',' << num::format_number(r.mean_iou);
    for (double f : r.exit_fractions) os << ',' << num::format_number(f);
    os << ',' << r.label << '\n';
  }
  return os.str();
}

}  // namespace exitrack::inference
