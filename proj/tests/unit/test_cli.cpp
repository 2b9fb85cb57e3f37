#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "exitrack/cli/commands.hpp"
#include "exitrack/numerics/errors.hpp"

using namespace exitrack;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("exitrack_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run(std::vector<std::string> args, std::string* out_text = nullptr, std::string* err_text = nullptr) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  if (out_text) *out_text = out.str();
  if (err_text) *err_text = err.str();
  return code;
}

const char* kTinyData = "[data]\nlevels = 2\ntrain_per_level = 1\nval_per_level = 1\ntest_per_level = 1\nlength = 6\n";

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("config round trip and defaults") {
  const cli::RunConfig defaults;
  const auto again = cli::RunConfig::parse(defaults.to_ini());
  CHECK(again.to_ini() == defaults.to_ini());
  const auto c = cli::RunConfig::parse("[train]\nseed = 9\nlambda_l1 = 2.5\n[exits]\nreuse = none\n");
  CHECK(c.seed == 9);
  CHECK(c.train.weights.l1 == 2.5);
  CHECK(c.model.reuse == exits::ReuseMode::none);
}

TEST_CASE("config errors are explicit") {
  CHECK_THROWS_AS(cli::RunConfig::parse("[train]\nlearning_rate = 1\n"), ConfigError);
  CHECK_THROWS_AS(cli::RunConfig::parse("[optimizer]\nlr = 1\n"), ConfigError);
  CHECK_THROWS_AS(cli::RunConfig::parse("[data]\nlevels = 0\n"), ConfigError);
  CHECK_THROWS_AS(cli::RunConfig::parse("[data]\nlevels = 6\n"), ConfigError);
  CHECK_THROWS_AS(cli::RunConfig::parse("[data]\nlength = many\n"), ConfigError);
  CHECK_THROWS_AS(cli::RunConfig::parse("[infer]\nthresholds = 0.5\n"), ConfigError);
  CHECK_THROWS_AS(cli::RunConfig::parse("[data\nlevels = 2\n"), ParseError);
  try {
    cli::RunConfig::parse("[train]\nlearning_rate = 1\n");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("learning_rate") != std::string::npos);
  }
}

TEST_CASE("help lists the global flags and subcommands") {
  std::string out;
  CHECK(run({"--help"}, &out) == 0);
  for (const char* flag : {"--config", "--seed", "--out", "--jobs", "gen-data", "train", "calibrate", "track", "eval",
                           "pareto"})
    CHECK_MESSAGE(out.find(flag) != std::string::npos, flag);
  std::string err;
  CHECK(run({"frobnicate"}, nullptr, &err) != 0);
  CHECK(run({}, nullptr, &err) != 0);
}

TEST_CASE("unknown config key fails the command with a message") {
  const auto dir = scratch("badkey");
  std::ofstream(dir / "bad.ini") << "[train]\nlearning_rate = 1\n";
  std::string err;
  CHECK(run({"--config", (dir / "bad.ini").string(), "--out", (dir / "d").string(), "gen-data"}, nullptr, &err) == 2);
  CHECK(err.find("learning_rate") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "d"));
}

TEST_CASE("gen-data is byte-identical for one seed and differs across seeds") {
  const auto dir = scratch("gen");
  std::ofstream(dir / "tiny.ini") << kTinyData;
  const auto cfg = (dir / "tiny.ini").string();
  REQUIRE(run({"--config", cfg, "--seed", "4", "--out", (dir / "a").string(), "gen-data"}) == 0);
  REQUIRE(run({"--config", cfg, "--seed", "4", "--out", (dir / "b").string(), "gen-data"}) == 0);
  REQUIRE(run({"--config", cfg, "--seed", "5", "--out", (dir / "c").string(), "gen-data"}) == 0);
  std::size_t files = 0;
  bool any_difference = false;
  for (const auto& entry : fs::recursive_directory_iterator(dir / "a")) {
    if (!entry.is_regular_file() || entry.path().filename() == "manifest.json") continue;
    const auto rel = fs::relative(entry.path(), dir / "a");
    CHECK(slurp(entry.path()) == slurp(dir / "b" / rel));
    if (fs::exists(dir / "c" / rel) && slurp(entry.path()) != slurp(dir / "c" / rel)) any_difference = true;
    ++files;
  }
  CHECK(files > 0);
  CHECK(any_difference);
  CHECK(fs::exists(dir / "a" / "test" / "L1-0000"));
  CHECK_FALSE(fs::exists(dir / "a" / "test" / "L2-0000"));

  const auto manifest = nlohmann::json::parse(slurp(dir / "a" / "manifest.json"));
  CHECK(manifest["command"] == "gen-data");
  CHECK(manifest["seed"] == 4);
  CHECK(manifest.contains("started"));
  CHECK(manifest.contains("finished"));
  CHECK(manifest["outputs"].size() == 3);

  std::string err;
  CHECK(run({"--config", cfg, "--out", (dir / "a").string(), "gen-data"}, nullptr, &err) != 0);
  CHECK(err.find("--force") != std::string::npos);
  CHECK(run({"--config", cfg, "--out", (dir / "a").string(), "gen-data", "--force"}) == 0);
}

TEST_CASE("missing inputs are reported") {
  const auto dir = scratch("missing");
  std::string err;
  CHECK(run({"--out", dir.string(), "pareto", "--in", (dir / "nope.csv").string()}, nullptr, &err) != 0);
  CHECK(err.find("nope.csv") != std::string::npos);
  CHECK(run({"--out", dir.string(), "train", "--data", (dir / "nodata").string()}, nullptr, &err) != 0);
  CHECK(err.find("nodata") != std::string::npos);
}

TEST_CASE("pareto command writes the front") {
  const auto dir = scratch("pareto");
  std::ofstream(dir / "pts.csv") << "label,speed,precision\nfast,256,64.9\nmid,196,66.5\nbase,90,69.2\nslow,63,64.9\n";
  REQUIRE(run({"--out", (dir / "o").string(), "pareto", "--in", (dir / "pts.csv").string()}) == 0);
  const auto front = slurp(dir / "o" / "front.csv");
  CHECK(front.find("fast") != std::string::npos);
  CHECK(front.find("slow") == std::string::npos);
  CHECK(fs::exists(dir / "o" / "front.svg"));
  CHECK(fs::exists(dir / "o" / "manifest.json"));
}

}  // TEST_SUITE
