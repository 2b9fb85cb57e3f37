#include "exitrack/inference/policy.hpp"

#include <cmath>
#include <numeric>

#include "exitrack/numerics/errors.hpp"
#include "exitrack/numerics/text.hpp"

namespace exitrack::inference {

ExitPolicy ExitPolicy::adaptive(std::vector<double> thresholds) {
  ExitPolicy p;
  p.kind = PolicyKind::adaptive;
  p.thresholds = std::move(thresholds);
  return p;
}

ExitPolicy ExitPolicy::fixed(std::size_t k) {
  ExitPolicy p;
  p.kind = PolicyKind::fixed;
  p.exit = k;
  return p;
}

ExitPolicy ExitPolicy::random(std::vector<double> distribution) {
  ExitPolicy p;
  p.kind = PolicyKind::random;
  p.distribution = std::move(distribution);
  return p;
}

void ExitPolicy::validate(std::size_t exits) const {
  switch (kind) {
    case PolicyKind::adaptive:
      if (thresholds.size() + 1 != exits)
        throw ConfigError("adaptive policy needs " + std::to_string(exits - 1) + " thresholds, got " +
                          std::to_string(thresholds.size()));
      // values outside [0, 1] are allowed: they pin the policy to the first or final exit
      for (double t : thresholds)
        if (!std::isfinite(t)) throw ConfigError("adaptive policy threshold must be finite");
      break;
    case PolicyKind::fixed:
      if (exit < 1 || exit > exits)
        throw ConfigError("fixed policy exit " + std::to_string(exit) + " outside 1.." + std::to_string(exits));
      break;
    case PolicyKind::random: {
      if (distribution.size() != exits)
        throw ConfigError("random policy needs " + std::to_string(exits) + " probabilities, got " +
                          std::to_string(distribution.size()));
      for (double p : distribution)
        if (!(p >= 0.0)) throw ConfigError("random policy probabilities must be >= 0");
      const double total = std::accumulate(distribution.begin(), distribution.end(), 0.0);
      if (std::abs(total - 1.0) > 1e-6) throw ConfigError("random policy probabilities must sum to 1");
      break;
    }
  }
}

std::string ExitPolicy::describe() const {
  switch (kind) {
    case PolicyKind::adaptive:
      return "adaptive:" + num::format_list(thresholds);
    case PolicyKind::fixed:
      return "fixed:" + std::to_string(exit);
    case PolicyKind::random:
      return "random:" + num::format_list(distribution);
  }
  return {};
}

ExitPolicy parse_policy(const std::string& text, std::size_t exits) {
  const auto colon = text.find(':');
  const auto kind = text.substr(0, colon);
  const auto args = colon == std::string::npos ? std::string() : text.substr(colon + 1);
  ExitPolicy p;
  if (kind == "adaptive") {
    p = ExitPolicy::adaptive(args.empty() ? std::vector<double>(exits - 1, 0.5) : num::parse_numbers(args, "policy"));
  } else if (kind == "fixed") {
    const auto v = num::parse_numbers(args, "policy");
    if (v.size() != 1 || v[0] != std::floor(v[0]) || v[0] < 1)
      throw ConfigError("fixed policy expects one exit index, got '" + args + "'");
    p = ExitPolicy::fixed(static_cast<std::size_t>(v[0]));
  } else if (kind == "random") {
    if (args.empty()) throw ConfigError("random policy expects K probabilities");
    p = ExitPolicy::random(num::parse_numbers(args, "policy"));
  } else {
    throw ConfigError("unknown policy '" + text + "' (expected fixed:k, adaptive[:t,...] or random:p,...)");
  }
  p.validate(exits);
  return p;
}

bool select_exit(std::size_t k, std::size_t exits, double score, const std::vector<double>& thresholds) {
  if (k >= exits) return true;
  return score > thresholds.at(k - 1);
}

std::size_t earliest_exit(const std::vector<double>& scores, const std::vector<double>& thresholds) {
  const std::size_t exits = thresholds.size() + 1;
  for (std::size_t k = 1; k <= exits; ++k)
    if (select_exit(k, exits, scores.at(k - 1), thresholds)) return k;
  return exits;
}

std::size_t planned_exit(const ExitPolicy& policy, std::size_t exits, num::RandomState& rng) {
  switch (policy.kind) {
    case PolicyKind::adaptive:
      return 0;
    case PolicyKind::fixed:
      return policy.exit;
    case PolicyKind::random: {
      const double u = rng.uniform();
      double acc = 0;
      for (std::size_t k = 0; k < exits; ++k) {
        acc += policy.distribution[k];
        if (u < acc) return k + 1;
      }
      // rounding left a sliver above the cumulative sum: take the last exit with mass
      for (std::size_t k = exits; k > 0; --k)
        if (policy.distribution[k - 1] > 0) return k;
      return exits;
    }
  }
  return exits;
}

}  // namespace exitrack::inference
