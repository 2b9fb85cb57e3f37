#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "exitrack/data/generator.hpp"
#include "exitrack/inference/calibrate.hpp"

using namespace exitrack;
using namespace exitrack::inference;

namespace {

std::vector<data::Sequence> sequences(std::size_t n, std::size_t length, std::uint64_t base = 900) {
  std::vector<data::Sequence> out;
  for (std::size_t i = 0; i < n; ++i) {
    num::RandomState rng(num::RandomState::splitmix64(base + i));
    auto seq = data::generate_sequence(data::difficulty_preset(static_cast<int>(i % 5), length), rng);
    seq.name = "seq" + std::to_string(i);
    out.push_back(std::move(seq));
  }
  return out;
}

const Model& shared_model() {
  static const Model model(exits::ModelConfig{}, 21);
  return model;
}

std::vector<data::PixelBox> boxes(const TrackResult& r) {
  std::vector<data::PixelBox> out;
  for (const auto& f : r.frames) out.push_back(f.box);
  return out;
}

}  // namespace

TEST_SUITE("inference") {

TEST_CASE("select_exit examples") {
  const std::vector<double> tau{0.5, 0.5};
  CHECK(earliest_exit({0.7, 0.0, 0.0}, tau) == 1);
  CHECK(earliest_exit({0.3, 0.6, 0.0}, tau) == 2);
  CHECK(earliest_exit({0.3, 0.4, 0.1}, tau) == 3);
  // ties continue
  CHECK(earliest_exit({0.5, 0.5, 0.0}, tau) == 3);
  CHECK(select_exit(3, 3, 0.0, tau));
  CHECK_FALSE(select_exit(1, 3, 0.5, tau));
}

TEST_CASE("raising a threshold never makes a frame exit earlier") {
  num::RandomState rng(40);
  for (int i = 0; i < 5000; ++i) {
    std::vector<double> s{rng.uniform(), rng.uniform(), rng.uniform()};
    std::vector<double> tau{rng.uniform(), rng.uniform()};
    const auto k = earliest_exit(s, tau);
    auto raised = tau;
    raised[rng.index(2)] += rng.uniform(0, 0.5);
    CHECK(earliest_exit(s, raised) >= k);
  }
}

TEST_CASE("policy parsing") {
  CHECK(parse_policy("fixed:2", 3).exit == 2);
  CHECK(parse_policy("adaptive", 3).thresholds == std::vector<double>{0.5, 0.5});
  CHECK(parse_policy("adaptive:0.5,0.6", 3).thresholds == std::vector<double>{0.5, 0.6});
  CHECK(parse_policy("random:0.5,0.3,0.2", 3).distribution.size() == 3);
  CHECK(parse_policy("adaptive:0.25,0.75", 3).describe() == "adaptive:0.25,0.75");
  CHECK_THROWS_AS(parse_policy("fixed:4", 3), ConfigError);
  CHECK_THROWS_AS(parse_policy("fixed:1.5", 3), ConfigError);
  CHECK_THROWS_AS(parse_policy("adaptive:0.5", 3), ConfigError);
  CHECK_THROWS_AS(parse_policy("random:0.5,0.6,0.2", 3), ConfigError);
  CHECK_THROWS_AS(parse_policy("greedy", 3), ConfigError);
}

TEST_CASE("threshold extremes reproduce the static policies") {
  const auto seqs = sequences(3, 12);
  const auto& model = shared_model();
  TrackOptions opt;
  for (const auto& seq : seqs) {
    const auto full = track_sequence(seq, model, ExitPolicy::fixed(3), opt);
    const auto first = track_sequence(seq, model, ExitPolicy::fixed(1), opt);
    CHECK(full.frames.size() == seq.frames.size() - 1);
    CHECK(boxes(track_sequence(seq, model, ExitPolicy::adaptive({1.01, 1.01}), opt)) == boxes(full));
    CHECK(boxes(track_sequence(seq, model, ExitPolicy::adaptive({-0.01, -0.01}), opt)) == boxes(first));
    for (const auto& f : full.frames) {
      CHECK(f.exit_index == 3);
      CHECK(f.scores.size() == 3);
    }
    for (const auto& f : first.frames) CHECK(f.exit_index == 1);
  }
}

TEST_CASE("adaptive tracking obeys the earliest-exit rule and is deterministic") {
  const auto seqs = sequences(4, 15);
  const auto& model = shared_model();
  TrackOptions opt;
  // place the thresholds inside the score range of this model
  std::vector<double> all;
  for (const auto& f : track_sequence(seqs[0], model, ExitPolicy::fixed(3), opt).frames)
    all.insert(all.end(), f.scores.begin(), f.scores.end() - 1);
  std::sort(all.begin(), all.end());
  const double median = all[all.size() / 2];
  const std::vector<double> tau{median, median};
  std::size_t exits_seen[4] = {0, 0, 0, 0};
  for (const auto& seq : seqs) {
    const auto a = track_sequence(seq, model, ExitPolicy::adaptive(tau), opt);
    const auto b = track_sequence(seq, model, ExitPolicy::adaptive(tau), opt);
    CHECK(boxes(a) == boxes(b));
    for (const auto& f : a.frames) {
      REQUIRE(f.scores.size() == f.exit_index);
      for (std::size_t k = 1; k < f.exit_index; ++k) CHECK(f.scores[k - 1] <= tau[k - 1]);
      if (f.exit_index < 3) CHECK(f.scores.back() > tau[f.exit_index - 1]);
      CHECK(f.score == f.scores.back());
      ++exits_seen[f.exit_index];
    }
  }
  CHECK(exits_seen[1] > 0);
  CHECK(exits_seen[2] + exits_seen[3] > 0);
}

TEST_CASE("a resumed forward to the final exit equals the static pass") {
  num::RandomState rng(41);
  const auto& model = shared_model();
  num::NoGradGuard guard;
  for (int i = 0; i < 4; ++i) {
    std::vector<float> zv(3 * 32 * 32), xv(3 * 64 * 64);
    for (auto& v : zv) v = static_cast<float>(rng.uniform());
    for (auto& v : xv) v = static_cast<float>(rng.uniform());
    const num::Tensor z({3, 32, 32}, zv), x({3, 64, 64}, xv);
    auto s1 = model.start(z, x);
    const auto d1 = model.decide(s1, 1, nullptr);
    const auto d2 = model.decide(s1, 2, &d1);
    const auto resumed = model.finish(model.decide(s1, 3, &d2));
    auto s2 = model.start(z, x);
    CHECK(resumed.box == model.run_all(s2).back().box);
    auto s3 = model.start(z, x);
    CHECK(resumed.flops_so_far == model.run_all(s3).back().flops_so_far);
  }
}

TEST_CASE("degenerate predictions are flagged and the search falls back") {
  // A box head whose output is never a usable box.
  Model model(exits::ModelConfig{}, 3);
  for (auto& branch : model.branches)
    for (auto& v : branch.head.tl_tower.back().bias.data()) v = std::nanf("");
  const auto seqs = sequences(1, 6);
  const auto r = track_sequence(seqs[0], model, ExitPolicy::fixed(3), TrackOptions{});
  for (const auto& f : r.frames) {
    CHECK(f.flagged);
    CHECK(f.box == seqs[0].frames[0].gt);
  }
}

TEST_CASE("random policies and cost matching") {
  const auto& model = shared_model();
  const auto seqs = sequences(26, 40);
  TrackOptions opt;
  std::vector<double> all;
  for (const auto& f : track_sequence(seqs[0], model, ExitPolicy::fixed(3), opt).frames)
    all.insert(all.end(), f.scores.begin(), f.scores.end() - 1);
  std::sort(all.begin(), all.end());
  const std::vector<double> tau{all[all.size() / 3], all[2 * all.size() / 3]};
  const auto adaptive = track_all(seqs, model, ExitPolicy::adaptive(tau), opt);
  std::size_t frames = 0;
  for (const auto& r : adaptive) frames += r.frames.size();
  REQUIRE(frames >= 1000);
  const auto matched = match_cost_random_policy(adaptive, 3);
  CHECK(matched.distribution == exit_fractions(adaptive, 3));
  const auto random = track_all(seqs, model, matched, opt);
  const double fa = mean_flops(adaptive), fr = mean_flops(random);
  MESSAGE("adaptive flops " << fa << " random flops " << fr << " mix " << matched.describe());
  CHECK(std::abs(fr - fa) <= 0.02 * fa);
  // job count does not change results
  const auto parallel = track_all(seqs, model, matched, opt, 3);
  for (std::size_t i = 0; i < seqs.size(); ++i) CHECK(boxes(parallel[i]) == boxes(random[i]));

  // degenerate adaptive: all frames at the final exit
  const auto all_final = track_all({seqs[0], seqs[1]}, model, ExitPolicy::adaptive({2.0, 2.0}), opt);
  const auto degenerate = match_cost_random_policy(all_final, 3);
  CHECK(degenerate.distribution == std::vector<double>{0.0, 0.0, 1.0});
  CHECK(boxes(track_sequence(seqs[0], model, degenerate, opt)) ==
        boxes(track_sequence(seqs[0], model, ExitPolicy::fixed(3), opt)));
}

TEST_CASE("median latency skips warm-up frames") {
  TrackResult r;
  for (int i = 0; i < 25; ++i) {
    FrameRecord f;
    f.latency_ms = i < 20 ? 100.0 : static_cast<double>(i);
    r.frames.push_back(f);
  }
  CHECK(median_latency({r}) == 22.0);
  CHECK(median_latency({r}, 21) == doctest::Approx(22.5));
}

TEST_CASE("calibration table") {
  const auto& model = shared_model();
  const auto val = sequences(2, 8, 1700);
  TrackOptions opt;
  CHECK_THROWS_AS(calibrate(model, {}, opt), ContractError);
  const auto rows = calibrate(model, val, opt);
  CHECK(rows.size() >= 21);
  CHECK(rows.size() <= 25);
  for (std::size_t i = 1; i < rows.size(); ++i) CHECK(rows[i - 1].mean_flops <= rows[i].mean_flops);
  const auto first = track_all(val, model, ExitPolicy::fixed(1), opt);
  const auto last = track_all(val, model, ExitPolicy::fixed(3), opt);
  auto find = [&](double tau) {
    return std::find_if(rows.begin(), rows.end(),
                        [&](const CalibrationRow& r) { return r.thresholds == std::vector<double>{tau, tau}; });
  };
  REQUIRE(find(0.0) != rows.end());
  REQUIRE(find(1.0) != rows.end());
  CHECK(find(0.0)->mean_iou == mean_iou(first));
  CHECK(find(0.0)->mean_flops == mean_flops(first));
  CHECK(find(1.0)->mean_iou == mean_iou(last));
  CHECK(find(1.0)->exit_fractions == std::vector<double>{0.0, 0.0, 1.0});
  // the cheapest row is always named; it may also be the most accurate one
  CHECK(!rows.front().label.empty());
  const auto csv = calibration_csv(rows);
  CHECK(csv.rfind("tau1,tau2,latency_ms,mean_flops,mean_iou,exit1_fraction", 0) == 0);
}

TEST_CASE("knee point") {
  std::vector<CalibrationRow> rows(4);
  const double flops[] = {1, 2, 3, 4}, ious[] = {0.5, 0.62, 0.66, 0.7};
  for (int i = 0; i < 4; ++i) {
    rows[static_cast<std::size_t>(i)].mean_flops = flops[i];
    rows[static_cast<std::size_t>(i)].mean_iou = ious[i];
  }
  // line from (1, .5) to (4, .7): gains 0, .0533, .0267, 0
  CHECK(knee_point(rows) == 1);
  label_operating_points(rows);
  CHECK(rows[0].label == "fast");
  CHECK(rows[1].label == "medi");
  CHECK(rows[3].label == "base");

  // a flat sweep puts every role on the cheapest row
  for (auto& r : rows) r.mean_iou = 0.4;
  label_operating_points(rows);
  CHECK(rows[0].label == "fast+medi+base");
  CHECK(rows[1].label.empty());
}

}  // TEST_SUITE
