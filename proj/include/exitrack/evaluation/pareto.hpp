#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace exitrack::evaluation {

struct TradeoffPoint {
  double speed = 0;      // frames per second, higher is better
  double precision = 0;  // metric in [0, 100], higher is better
  std::string label;

  void validate() const;
};

// p dominates q when it is no worse on both axes and strictly better on one.
bool dominates(const TradeoffPoint& p, const TradeoffPoint& q);

// Non-dominated points, stable-sorted by descending speed. Exact duplicates
// do not dominate each other, so both are kept.
std::vector<TradeoffPoint> pareto_front(const std::vector<TradeoffPoint>& points);

// CSV with header label,speed,precision.
std::vector<TradeoffPoint> read_points_csv(const std::filesystem::path& path);
std::string points_csv(const std::vector<TradeoffPoint>& points);

// Speed-precision scatter with the front drawn as a step line.
std::string scatter_svg(const std::vector<TradeoffPoint>& points, const std::vector<TradeoffPoint>& front);

}  // namespace exitrack::evaluation
