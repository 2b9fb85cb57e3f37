#include "exitrack/evaluation/pareto.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "exitrack/numerics/errors.hpp"
#include "exitrack/numerics/text.hpp"

namespace exitrack::evaluation {

void TradeoffPoint::validate() const {
  if (!std::isfinite(speed) || !std::isfinite(precision))
    throw ContractError("trade-off point '" + label + "' has a non-finite coordinate");
  if (speed <= 0) throw ContractError("trade-off point '" + label + "' needs a positive speed");
}

bool dominates(const TradeoffPoint& p, const TradeoffPoint& q) {
  return p.speed >= q.speed && p.precision >= q.precision && (p.speed > q.speed || p.precision > q.precision);
}

std::vector<TradeoffPoint> pareto_front(const std::vector<TradeoffPoint>& points) {
  for (const auto& p : points) p.validate();
  std::vector<std::size_t> order(points.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return points[a].speed > points[b].speed; });
  // Sweep groups of equal speed from fastest to slowest. A point is dominated
  // by a strictly faster point with at least its precision, or by a point of
  // equal speed with strictly higher precision.
  std::vector<TradeoffPoint> front;
  double best_faster = -INFINITY;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    double group_best = -INFINITY;
    while (j < order.size() && points[order[j]].speed == points[order[i]].speed)
      group_best = std::max(group_best, points[order[j++]].precision);
    for (std::size_t g = i; g < j; ++g) {
      const auto& p = points[order[g]];
      if (best_faster >= p.precision || group_best > p.precision) continue;
      front.push_back(p);
    }
    best_faster = std::max(best_faster, group_best);
    i = j;
  }
  return front;
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

std::vector<TradeoffPoint> read_points_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open points file " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ParseError("points file " + path.string() + " is empty", 1);
  const auto header = split_csv(line);
  auto column = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ParseError("points file " + path.string() + " lacks a '" + name + "' column", 1);
    return static_cast<std::size_t>(it - header.begin());
  };
  const auto c_speed = column("speed"), c_precision = column("precision");
  const auto label_it = std::find(header.begin(), header.end(), "label");
  std::vector<TradeoffPoint> points;
  std::size_t number = 1;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size())
      throw ParseError("points file " + path.string() + ": expected " + std::to_string(header.size()) + " cells", number);
    TradeoffPoint p;
    try {
      p.speed = num::parse_numbers(cells[c_speed], "speed").at(0);
      p.precision = num::parse_numbers(cells[c_precision], "precision").at(0);
    } catch (const ConfigError& e) {
      throw ParseError(std::string("points file ") + path.string() + ": " + e.what(), number);
    }
    if (label_it != header.end()) p.label = cells[static_cast<std::size_t>(label_it - header.begin())];
    points.push_back(std::move(p));
  }
  return points;
}

std::string points_csv(const std::vector<TradeoffPoint>& points) {
  std::ostringstream os;
  os << "label,speed,precision\n";
  for (const auto& p : points) os << p.label << ',' << num::format_number(p.speed) << ',' << num::format_number(p.precision) << '\n';
  return os.str();
}

std::string scatter_svg(const std::vector<TradeoffPoint>& points, const std::vector<TradeoffPoint>& front) {
  const double width = 480, height = 360, margin = 48;
  double s0 = INFINITY, s1 = -INFINITY, p0 = INFINITY, p1 = -INFINITY;
  for (const auto& p : points) {
    s0 = std::min(s0, p.speed);
    s1 = std::max(s1, p.speed);
    p0 = std::min(p0, p.precision);
    p1 = std::max(p1, p.precision);
  }
  if (points.empty()) s0 = p0 = 0, s1 = p1 = 1;
  if (s1 - s0 < 1e-9) s0 -= 1, s1 += 1;
  if (p1 - p0 < 1e-9) p0 -= 1, p1 += 1;
  auto x = [&](double s) { return margin + (s - s0) / (s1 - s0) * (width - 2 * margin); };
  auto y = [&](double p) { return height - margin - (p - p0) / (p1 - p0) * (height - 2 * margin); };
  std::ostringstream os;
  os.precision(6);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<line x1=\"" << margin << "\" y1=\"" << height - margin << "\" x2=\"" << width - margin << "\" y2=\""
     << height - margin << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << margin << "\" y1=\"" << margin << "\" x2=\"" << margin << "\" y2=\"" << height - margin
     << "\" stroke=\"black\"/>\n";
  os << "<text x=\"" << width / 2 << "\" y=\"" << height - 12 << "\" text-anchor=\"middle\">speed (fps)</text>\n";
  os << "<text x=\"14\" y=\"" << height / 2 << "\" transform=\"rotate(-90 14 " << height / 2
     << ")\" text-anchor=\"middle\">precision</text>\n";
  if (front.size() > 1) {
    os << "<polyline fill=\"none\" stroke=\"#c0392b\" points=\"";
    for (std::size_t i = 0; i < front.size(); ++i) {
      if (i) os << x(front[i].speed) << ',' << y(front[i - 1].precision) << ' ';
      os << x(front[i].speed) << ',' << y(front[i].precision) << ' ';
    }
    os << "\"/>\n";
  }
  for (const auto& p : points)
    os << "<circle cx=\"" << x(p.speed) << "\" cy=\"" << y(p.precision) << "\" r=\"3\" fill=\"#2c3e50\"><title>"
       << p.label << "</title></circle>\n";
  for (const auto& p : front)
    os << "<circle cx=\"" << x(p.speed) << "\" cy=\"" << y(p.precision)
       << "\" r=\"5\" fill=\"none\" stroke=\"#c0392b\"/>\n";
  os << "</svg>\n";
  return os.str();
}

}  // namespace exitrack::evaluation
