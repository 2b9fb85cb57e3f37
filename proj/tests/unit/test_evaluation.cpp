#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "exitrack/evaluation/metrics.hpp"
#include "exitrack/evaluation/pareto.hpp"

using namespace exitrack;
using namespace exitrack::evaluation;

namespace {

// Brute-force dominance oracle, kept independent of the library sweep.
std::vector<TradeoffPoint> brute_front(const std::vector<TradeoffPoint>& pts) {
  std::vector<std::pair<std::size_t, TradeoffPoint>> keep;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    bool dominated = false;
    for (std::size_t j = 0; j < pts.size() && !dominated; ++j) {
      const auto &p = pts[j], &q = pts[i];
      dominated = p.speed >= q.speed && p.precision >= q.precision && (p.speed > q.speed || p.precision > q.precision);
    }
    if (!dominated) keep.push_back({i, pts[i]});
  }
  std::stable_sort(keep.begin(), keep.end(), [](const auto& a, const auto& b) { return a.second.speed > b.second.speed; });
  std::vector<TradeoffPoint> out;
  for (const auto& k : keep) out.push_back(k.second);
  return out;
}

bool same(const std::vector<TradeoffPoint>& a, const std::vector<TradeoffPoint>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].speed != b[i].speed || a[i].precision != b[i].precision || a[i].label != b[i].label) return false;
  return true;
}

TrackResult result_with(std::vector<std::pair<std::size_t, double>> exit_iou, int level = 0,
                        std::set<std::string> attributes = {}) {
  TrackResult r;
  r.difficulty = level;
  r.attributes = std::move(attributes);
  std::size_t t = 1;
  for (auto [k, iou] : exit_iou) {
    inference::FrameRecord f;
    f.frame = t++;
    f.exit_index = k;
    f.iou = iou;
    r.frames.push_back(f);
  }
  return r;
}

}  // namespace

TEST_SUITE("evaluation") {

TEST_CASE("success auc") {
  CHECK(success_auc({1.0, 0.0}).auc == doctest::Approx(50.0));
  CHECK(success_auc({1.0, 1.0, 1.0}).auc == doctest::Approx(100.0));
  CHECK(success_auc({1.0, 0.0}).success.size() == 21);
  CHECK_THROWS_AS(success_auc({}), ContractError);
  CHECK_THROWS_AS(success_auc({1.2}), ContractError);
  num::RandomState rng(50);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> ious(1 + rng.index(300));
    double total = 0;
    for (auto& v : ious) total += (v = rng.uniform());
    const auto c = success_auc(ious);
    CHECK(std::abs(c.auc - 100.0 * total / static_cast<double>(ious.size())) <= 1e-9);
    CHECK(std::abs(c.sampled_auc - c.auc) <= 2.5);
  }
}

TEST_CASE("center precision") {
  CHECK(precision_at({0, 0, 0}, 4) == 100.0);
  CHECK(precision_at({9, 10, 11}, 4) == 0.0);
  CHECK(precision_at({1, 2, 9, 10}, 4) == 50.0);
  CHECK(precision_threshold(128) == doctest::Approx(4.0));
}

TEST_CASE("pareto front examples") {
  const TradeoffPoint a{256, 64.9, "a"}, b{196, 66.5, "b"}, c{90, 69.2, "c"}, d{63, 64.9, "d"};
  CHECK(same(pareto_front({a}), {a}));
  CHECK(same(pareto_front({d, c, b, a}), {a, b, c}));
  CHECK(same(pareto_front({a, a}), {a, a}));
  CHECK(dominates(a, d));
  CHECK_FALSE(dominates(a, a));
  CHECK_THROWS_AS(pareto_front({TradeoffPoint{0, 1, "x"}}), ContractError);
}

TEST_CASE("pareto front matches the brute-force oracle and is idempotent") {
  num::RandomState rng(51);
  for (int set = 0; set < 100; ++set) {
    const std::size_t n = 1 + rng.index(200);
    std::vector<TradeoffPoint> pts;
    for (std::size_t i = 0; i < n; ++i) {
      // a coarse lattice makes ties common
      pts.push_back({1.0 + static_cast<double>(rng.index(20)), static_cast<double>(rng.index(20)) * 5.0,
                     std::to_string(i)});
    }
    const auto front = pareto_front(pts);
    CHECK(same(front, brute_front(pts)));
    CHECK(same(pareto_front(front), front));
  }
}

TEST_CASE("points csv round trip and svg") {
  const auto dir = std::filesystem::temp_directory_path() / "exitrack_test_points";
  std::filesystem::create_directories(dir);
  const std::vector<TradeoffPoint> pts{{256, 64.9, "fast"}, {90, 69.2, "base"}};
  {
    std::ofstream out(dir / "points.csv");
    out << points_csv(pts);
  }
  CHECK(same(read_points_csv(dir / "points.csv"), pts));
  {
    std::ofstream out(dir / "bad.csv");
    out << "label,speed,precision\nx,1,2\ny,abc,3\n";
  }
  try {
    read_points_csv(dir / "bad.csv");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
  CHECK_THROWS_AS(read_points_csv(dir / "missing.csv"), IoError);
  const auto svg = scatter_svg(pts, pareto_front(pts));
  CHECK(svg.find("<svg") == 0);
  CHECK(svg.find("<circle") != std::string::npos);
}

TEST_CASE("exit depth report") {
  const auto single = exit_depth_report({result_with({{1, 0.5}, {1, 0.7}})});
  REQUIRE(single.exits.size() == 1);
  CHECK(single.exits[0].mean_iou == doctest::Approx(0.6));
  const std::vector<TrackResult> runs{result_with({{1, 0.8}, {2, 0.6}, {3, 0.2}}, 0, {"occlusion"}),
                                      result_with({{1, 0.9}, {3, 0.4}, {3, 0.3}}, 1)};
  const auto report = exit_depth_report(runs);
  std::size_t total = 0;
  for (const auto& r : report.exits) total += r.frames;
  CHECK(total == 6);
  CHECK(report.exits[2].mean_iou == doctest::Approx(0.3));
  REQUIRE(report.attributes.size() == 2);
  CHECK(report.attributes[0].attribute == "none");
  CHECK(report.attributes[1].mean_exit == doctest::Approx(2.0));
}

TEST_CASE("difficulty report") {
  const std::vector<TrackResult> e1{result_with({{1, 0.8}, {1, 0.6}}, 0), result_with({{1, 0.3}}, 4)};
  const std::vector<TrackResult> e3{result_with({{3, 0.82}, {3, 0.62}}, 0), result_with({{3, 0.5}}, 4)};
  const auto report = difficulty_report({{"E1", e1}, {"E3", e3}});
  CHECK(report.levels == std::vector<int>{0, 4});
  CHECK(report.warnings.size() == 3);
  CHECK(report.gain(1, 0) == doctest::Approx(0.02));
  CHECK(report.gain(1, 1) == doctest::Approx(0.2));
  CHECK(report.frames[0][0] + report.frames[0][1] == 3);
  CHECK(difficulty_csv(report).rfind("level,E1,E3,gain_E3,frames\n0,", 0) == 0);
}

TEST_CASE("metric report") {
  auto r = result_with({{1, 1.0}, {2, 0.0}});
  r.frames[1].center_error = 50;
  const auto m = metric_report({r}, 3, 4.0);
  CHECK(m.auc == doctest::Approx(50.0));
  CHECK(m.precision == doctest::Approx(50.0));
  CHECK(m.exit_fractions == std::vector<double>{0.5, 0.5, 0.0});
  CHECK(metric_report_csv({{"fixed:1", m}}, false).find("fixed:1,2,50,") != std::string::npos);
}

}  // TEST_SUITE
