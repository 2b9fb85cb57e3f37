#include "exitrack/cli/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "exitrack/data/generator.hpp"
#include "exitrack/numerics/errors.hpp"
#include "exitrack/numerics/random.hpp"
#include "exitrack/numerics/text.hpp"

namespace exitrack::cli {

namespace {

using Setter = std::function<void(RunConfig&, const std::string&)>;
using Getter = std::function<std::string(const RunConfig&)>;

struct Key {
  Setter set;
  Getter get;
};

template <class T>
T parse_integer(const std::string& text, const std::string& what) {
  T v{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size())
    throw ConfigError(what + ": '" + text + "' is not a non-negative integer");
  return v;
}

double parse_real(const std::string& text, const std::string& what) {
  const auto v = num::parse_numbers(text, what);
  if (v.size() != 1) throw ConfigError(what + ": expected one number, got '" + text + "'");
  return v[0];
}

std::vector<std::size_t> parse_sizes(const std::string& text, const std::string& what) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    while (!item.empty() && item.front() == ' ') item.erase(item.begin());
    while (!item.empty() && item.back() == ' ') item.pop_back();
    out.push_back(parse_integer<std::size_t>(item, what));
  }
  return out;
}

std::string join(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

#define EXITRACK_SIZE(field)                                                                           \
  Key {                                                                                                \
    [](RunConfig& c, const std::string& v) { c.field = parse_integer<std::size_t>(v, #field); },      \
        [](const RunConfig& c) { return std::to_string(c.field); }                                    \
  }
#define EXITRACK_REAL(field)                                                                \
  Key {                                                                                     \
    [](RunConfig& c, const std::string& v) { c.field = parse_real(v, #field); },           \
        [](const RunConfig& c) { return num::format_number(c.field); }                     \
  }

// Section -> key -> accessor. Order here is the order of to_ini().
const std::vector<std::pair<std::string, std::vector<std::pair<std::string, Key>>>>& schema() {
  static const std::vector<std::pair<std::string, std::vector<std::pair<std::string, Key>>>> table{
      {"data",
       {{"levels", Key{[](RunConfig& c, const std::string& v) { c.data.levels = parse_integer<int>(v, "levels"); },
                       [](const RunConfig& c) { return std::to_string(c.data.levels); }}},
        {"train_per_level", EXITRACK_SIZE(data.train_per_level)},
        {"val_per_level", EXITRACK_SIZE(data.val_per_level)},
        {"test_per_level", EXITRACK_SIZE(data.test_per_level)},
        {"length", EXITRACK_SIZE(data.length)},
        {"frame_size", EXITRACK_SIZE(data.frame_size)},
        {"template_factor", EXITRACK_REAL(data.template_factor)},
        {"search_factor", EXITRACK_REAL(data.search_factor)}}},
      {"backbone",
       {{"depth", EXITRACK_SIZE(model.backbone.depth)},
        {"dim", EXITRACK_SIZE(model.backbone.dim)},
        {"heads", EXITRACK_SIZE(model.backbone.heads)},
        {"mlp_ratio", EXITRACK_SIZE(model.backbone.mlp_ratio)},
        {"patch", EXITRACK_SIZE(model.backbone.patch)},
        {"template_size", EXITRACK_SIZE(model.backbone.template_size)},
        {"search_size", EXITRACK_SIZE(model.backbone.search_size)},
        {"exit_layers",
         Key{[](RunConfig& c, const std::string& v) { c.model.backbone.exit_layers = parse_sizes(v, "exit_layers"); },
             [](const RunConfig& c) { return join(c.model.backbone.exit_layers); }}}}},
      {"exits",
       {{"adapter_depths",
         Key{[](RunConfig& c, const std::string& v) { c.model.adapter_depths = parse_sizes(v, "adapter_depths"); },
             [](const RunConfig& c) { return join(c.model.adapter_depths); }}},
        {"reuse", Key{[](RunConfig& c, const std::string& v) { c.model.reuse = exits::parse_reuse(v); },
                      [](const RunConfig& c) { return exits::to_string(c.model.reuse); }}}}},
      {"train",
       {{"seed", Key{[](RunConfig& c, const std::string& v) { c.seed = parse_integer<std::uint64_t>(v, "seed"); },
                     [](const RunConfig& c) { return std::to_string(c.seed); }}},
        {"epochs_stage1", EXITRACK_SIZE(train.epochs_stage1)},
        {"epochs_stage2", EXITRACK_SIZE(train.epochs_stage2)},
        {"samples_per_epoch", EXITRACK_SIZE(train.samples_per_epoch)},
        {"batch_size", EXITRACK_SIZE(train.batch_size)},
        {"lr_heads", EXITRACK_REAL(train.lr_heads)},
        {"lr_backbone", EXITRACK_REAL(train.lr_backbone)},
        {"weight_decay", EXITRACK_REAL(train.weight_decay)},
        {"decay_at", EXITRACK_REAL(train.decay_at)},
        {"warmup_steps", EXITRACK_SIZE(train.warmup_steps)},
        {"clip_norm", EXITRACK_REAL(train.clip_norm)},
        {"one_by_one_fraction", EXITRACK_REAL(train.one_by_one_fraction)},
        {"strategy", Key{[](RunConfig& c, const std::string& v) { c.train.strategy = objectives::parse_strategy(v); },
                         [](const RunConfig& c) { return objectives::to_string(c.train.strategy); }}},
        {"distill", Key{[](RunConfig& c, const std::string& v) { c.train.distill = distill::parse_distill(v); },
                        [](const RunConfig& c) { return distill::to_string(c.train.distill); }}},
        {"lambda_l1", EXITRACK_REAL(train.weights.l1)},
        {"lambda_giou", EXITRACK_REAL(train.weights.giou)},
        {"lambda_score", EXITRACK_REAL(train.weights.score)},
        {"lambda_imitation", EXITRACK_REAL(train.weights.imitation)},
        {"max_gap", EXITRACK_SIZE(train.max_gap)},
        {"val_samples", EXITRACK_SIZE(train.val_samples)},
        {"center_jitter", EXITRACK_REAL(train.crop.center_jitter)},
        {"scale_jitter", EXITRACK_REAL(train.crop.scale_jitter)}}},
      {"infer",
       {{"policy", Key{[](RunConfig& c, const std::string& v) { c.infer.policy = v; },
                       [](const RunConfig& c) { return c.infer.policy; }}},
        {"thresholds", Key{[](RunConfig& c, const std::string& v) { c.infer.thresholds = num::parse_numbers(v, "thresholds"); },
                           [](const RunConfig& c) { return num::format_list(c.infer.thresholds); }}},
        {"grid_points", EXITRACK_SIZE(infer.grid_points)},
        {"refine_step", EXITRACK_REAL(infer.refine_step)},
        {"precision_threshold", EXITRACK_REAL(infer.precision_threshold)}}},
  };
  return table;
}

#undef EXITRACK_SIZE
#undef EXITRACK_REAL

const Key* find_key(const std::string& section, const std::string& key) {
  for (const auto& [name, keys] : schema())
    if (name == section)
      for (const auto& [k, accessor] : keys)
        if (k == key) return &accessor;
  return nullptr;
}

bool known_section(const std::string& section) {
  for (const auto& entry : schema())
    if (entry.first == section) return true;
  return false;
}

}  // namespace

RunConfig RunConfig::parse(const std::string& ini_text, const std::string& origin) {
  boost::property_tree::ptree tree;
  std::istringstream in(ini_text);
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ParseError(origin + ": " + e.message(), e.line());
  }
  RunConfig config;
  for (const auto& [section, body] : tree) {
    if (!known_section(section)) {
      if (body.empty()) throw ConfigError(origin + ": key '" + section + "' outside any section");
      throw ConfigError(origin + ": unknown section [" + section + "]");
    }
    for (const auto& [key, value] : body) {
      const auto* accessor = find_key(section, key);
      if (!accessor) throw ConfigError(origin + ": unknown key '" + key + "' in [" + section + "]");
      try {
        accessor->set(config, value.data());
      } catch (const ConfigError& e) {
        throw ConfigError(origin + ": [" + section + "] " + key + ": " + e.what());
      }
    }
  }
  config.validate();
  return config;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

std::string RunConfig::to_ini() const {
  std::ostringstream os;
  bool first = true;
  for (const auto& [section, keys] : schema()) {
    if (!first) os << '\n';
    first = false;
    os << '[' << section << "]\n";
    for (const auto& [key, accessor] : keys) os << key << " = " << accessor.get(*this) << '\n';
  }
  return os.str();
}

void RunConfig::validate() const {
  if (data.levels < 1 || data.levels > data::kDifficultyLevels)
    throw ConfigError("[data] levels must be in 1.." + std::to_string(data::kDifficultyLevels) + ", got " +
                      std::to_string(data.levels));
  if (data.length < 2) throw ConfigError("[data] length must be at least 2 frames");
  if (!(data.template_factor > 0) || !(data.search_factor > 0)) throw ConfigError("[data] crop factors must be > 0");
  if (data.train_per_level + data.val_per_level + data.test_per_level == 0)
    throw ConfigError("[data] no sequences requested");
  model.validate();
  train.validate();
  if (infer.grid_points < 2) throw ConfigError("[infer] grid_points must be at least 2");
  if (!(infer.refine_step >= 0)) throw ConfigError("[infer] refine_step must be >= 0");
  if (!(infer.precision_threshold >= 0)) throw ConfigError("[infer] precision_threshold must be >= 0");
  if (infer.thresholds.size() + 1 != model.backbone.exits())
    throw ConfigError("[infer] thresholds needs " + std::to_string(model.backbone.exits() - 1) + " entries");
}

std::uint64_t sequence_seed(std::uint64_t seed, int split, int level, std::size_t index) {
  const auto stream = (static_cast<std::uint64_t>(split) << 48) ^ (static_cast<std::uint64_t>(level) << 32) ^ index;
  return num::RandomState::splitmix64(num::RandomState::splitmix64(seed) ^ stream);
}

}  // namespace exitrack::cli
