#include "exitrack/evaluation/metrics.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <sstream>

#include "exitrack/numerics/errors.hpp"
#include "exitrack/numerics/text.hpp"

namespace exitrack::evaluation {

SuccessCurve success_auc(const std::vector<double>& ious) {
  if (ious.empty()) throw ContractError("success_auc: no frames");
  for (double v : ious)
    if (!(v >= 0.0 && v <= 1.0)) throw ContractError("success_auc: IoU " + num::format_number(v) + " outside [0,1]");
  SuccessCurve c;
  const double n = static_cast<double>(ious.size());
  // success(t) = P(iou > t) integrates over [0,1] to the mean IoU
  c.auc = 100.0 * std::accumulate(ious.begin(), ious.end(), 0.0) / n;
  for (int i = 0; i <= 20; ++i) {
    const double t = i / 20.0;
    const auto above = std::count_if(ious.begin(), ious.end(), [t](double v) { return v > t; });
    c.thresholds.push_back(t);
    c.success.push_back(100.0 * static_cast<double>(above) / n);
  }
  c.sampled_auc = std::accumulate(c.success.begin(), c.success.end(), 0.0) / static_cast<double>(c.success.size());
  return c;
}

double precision_at(const std::vector<double>& center_errors, double threshold) {
  if (center_errors.empty()) throw ContractError("precision_at: no frames");
  const auto within =
      std::count_if(center_errors.begin(), center_errors.end(), [threshold](double e) { return e <= threshold; });
  return 100.0 * static_cast<double>(within) / static_cast<double>(center_errors.size());
}

double precision_threshold(double frame_width) { return 20.0 * frame_width / 640.0; }

MetricReport metric_report(const std::vector<TrackResult>& results, std::size_t exits, double threshold) {
  std::vector<double> ious, errors;
  std::map<int, std::pair<double, std::size_t>> by_level;
  for (const auto& r : results)
    for (const auto& f : r.frames) {
      ious.push_back(f.iou);
      errors.push_back(f.center_error);
      auto& acc = by_level[r.difficulty];
      acc.first += f.iou;
      ++acc.second;
    }
  MetricReport m;
  m.frames = ious.size();
  const auto curve = success_auc(ious);
  m.auc = curve.auc;
  m.sampled_auc = curve.sampled_auc;
  m.precision = precision_at(errors, threshold);
  m.mean_iou = inference::mean_iou(results);
  m.mean_flops = inference::mean_flops(results);
  m.latency_ms = inference::median_latency(results);
  m.exit_fractions = inference::exit_fractions(results, exits);
  for (const auto& [level, acc] : by_level) m.difficulty_iou[level] = acc.first / static_cast<double>(acc.second);
  return m;
}

std::string metric_report_csv(const std::vector<std::pair<std::string, MetricReport>>& reports, bool with_latency) {
  std::ostringstream os;
  const std::size_t exits = reports.empty() ? 0 : reports.front().second.exit_fractions.size();
  os << "run,frames,auc,auc21,precision,mean_iou,mean_flops";
  if (with_latency) os << ",latency_ms,fps";
  for (std::size_t k = 1; k <= exits; ++k) os << ",exit" << k << "_fraction";
  os << '\n';
  for (const auto& [name, m] : reports) {
    os << name << ',' << m.frames << ',' << num::format_number(m.auc) << ',' << num::format_number(m.sampled_auc) << ','
       << num::format_number(m.precision) << ',' << num::format_number(m.mean_iou) << ','
       << num::format_number(m.mean_flops);
    if (with_latency)
      os << ',' << num::format_number(m.latency_ms) << ','
         << num::format_number(m.latency_ms > 0 ? 1000.0 / m.latency_ms : 0.0);
    for (double f : m.exit_fractions) os << ',' << num::format_number(f);
    os << '\n';
  }
  return os.str();
}

ExitDepthReport exit_depth_report(const std::vector<TrackResult>& results) {
  std::map<std::size_t, std::pair<double, std::size_t>> by_exit;
  std::map<std::string, std::pair<double, std::size_t>> by_attribute;
  for (const auto& r : results)
    for (const auto& f : r.frames) {
      auto& e = by_exit[f.exit_index];
      e.first += f.iou;
      ++e.second;
      if (r.attributes.empty()) {
        auto& a = by_attribute["none"];
        a.first += static_cast<double>(f.exit_index);
        ++a.second;
      }
      for (const auto& name : r.attributes) {
        auto& a = by_attribute[name];
        a.first += static_cast<double>(f.exit_index);
        ++a.second;
      }
    }
  ExitDepthReport report;
  for (const auto& [k, acc] : by_exit) report.exits.push_back({k, acc.second, acc.first / static_cast<double>(acc.second)});
  for (const auto& [name, acc] : by_attribute)
    report.attributes.push_back({name, acc.second, acc.first / static_cast<double>(acc.second)});
  return report;
}

std::string exit_depth_csv(const ExitDepthReport& report) {
  std::ostringstream os;
  os << "group,key,frames,value\n";
  for (const auto& r : report.exits)
    os << "exit_mean_iou," << r.exit << ',' << r.frames << ',' << num::format_number(r.mean_iou) << '\n';
  for (const auto& a : report.attributes)
    os << "attribute_mean_exit," << a.attribute << ',' << a.frames << ',' << num::format_number(a.mean_exit) << '\n';
  return os.str();
}

DifficultyReport difficulty_report(const std::vector<std::pair<std::string, std::vector<TrackResult>>>& runs,
                                   int levels) {
  DifficultyReport report;
  if (runs.empty()) throw ContractError("difficulty_report: no runs");
  const std::size_t m = runs.size();
  std::vector<std::vector<double>> sums(m, std::vector<double>(static_cast<std::size_t>(levels), 0.0));
  std::vector<std::vector<std::size_t>> counts(m, std::vector<std::size_t>(static_cast<std::size_t>(levels), 0));
  for (std::size_t i = 0; i < m; ++i) {
    report.models.push_back(runs[i].first);
    for (const auto& r : runs[i].second) {
      if (r.difficulty < 0 || r.difficulty >= levels)
        throw ContractError("difficulty_report: level " + std::to_string(r.difficulty) + " out of range");
      for (const auto& f : r.frames) {
        sums[i][static_cast<std::size_t>(r.difficulty)] += f.iou;
        ++counts[i][static_cast<std::size_t>(r.difficulty)];
      }
    }
  }
  report.mean_iou.resize(m);
  report.frames.resize(m);
  for (int l = 0; l < levels; ++l) {
    const auto li = static_cast<std::size_t>(l);
    bool complete = true;
    for (std::size_t i = 0; i < m; ++i) complete = complete && counts[i][li] > 0;
    if (!complete) {
      report.warnings.push_back("difficulty level " + std::to_string(l) + " has no frames; row omitted");
      continue;
    }
    report.levels.push_back(l);
    for (std::size_t i = 0; i < m; ++i) {
      report.mean_iou[i].push_back(sums[i][li] / static_cast<double>(counts[i][li]));
      report.frames[i].push_back(counts[i][li]);
    }
  }
  return report;
}

std::string difficulty_csv(const DifficultyReport& report) {
  std::ostringstream os;
  os << "level";
  for (const auto& name : report.models) os << ',' << name;
  for (std::size_t i = 1; i < report.models.size(); ++i) os << ",gain_" << report.models[i];
  os << ",frames\n";
  for (std::size_t l = 0; l < report.levels.size(); ++l) {
    os << report.levels[l];
    for (std::size_t i = 0; i < report.models.size(); ++i) os << ',' << num::format_number(report.mean_iou[i][l]);
    for (std::size_t i = 1; i < report.models.size(); ++i) os << ',' << num::format_number(report.gain(i, l));
    os << ',' << report.frames[0][l] << '\n';
  }
  return os.str();
}

std::string track_csv(const TrackResult& result, bool with_latency) {
  std::ostringstream os;
  os << "frame,x,y,w,h,exit,score";
  if (with_latency) os << ",ms";
  os << '\n';
  for (const auto& f : result.frames) {
    os << f.frame << ',' << data::format_box(f.box) << ',' << f.exit_index << ',' << num::format_number(f.score);
    if (with_latency) os << ',' << num::format_number(f.latency_ms);
    os << '\n';
  }
  return os.str();
}

std::string frames_csv(const std::vector<TrackResult>& results, bool with_latency) {
  std::ostringstream os;
  os << "sequence,frame,x,y,w,h,exit,score,iou,flops,flagged";
  if (with_latency) os << ",ms";
  os << '\n';
  for (const auto& r : results)
    for (const auto& f : r.frames) {
      os << r.sequence << ',' << f.frame << ',' << data::format_box(f.box) << ',' << f.exit_index << ','
         << num::format_number(f.score) << ',' << num::format_number(f.iou) << ',' << f.flops << ','
         << (f.flagged ? 1 : 0);
      if (with_latency) os << ',' << num::format_number(f.latency_ms);
      os << '\n';
    }
  return os.str();
}

}  // namespace exitrack::evaluation
