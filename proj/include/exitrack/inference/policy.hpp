#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "exitrack/numerics/random.hpp"

namespace exitrack::inference {

enum class PolicyKind { adaptive, fixed, random };

// How a frame chooses its exit. Adaptive exits at the earliest k whose score
// strictly exceeds tau_k (the final exit always accepts); fixed always runs to
// exit k; random draws k from `distribution` once per frame.
struct ExitPolicy {
  PolicyKind kind = PolicyKind::adaptive;
  std::vector<double> thresholds;    // K-1 entries, adaptive only
  std::size_t exit = 0;              // 1-based, fixed only
  std::vector<double> distribution;  // K entries summing to 1, random only

  static ExitPolicy adaptive(std::vector<double> thresholds);
  static ExitPolicy fixed(std::size_t k);
  static ExitPolicy random(std::vector<double> distribution);

  // Throws ConfigError when the policy does not fit a model with `exits` exits.
  void validate(std::size_t exits) const;
  // Round-trips through parse_policy.
  std::string describe() const;
};

// "fixed:k", "adaptive:t1,t2,...", "adaptive" (thresholds 0.5), "random:p1,...,pK".
ExitPolicy parse_policy(const std::string& text, std::size_t exits);

// True when exit k (1-based) of K should terminate given its score.
bool select_exit(std::size_t k, std::size_t exits, double score, const std::vector<double>& thresholds);

// Realized exit for a full score vector under the adaptive rule.
std::size_t earliest_exit(const std::vector<double>& scores, const std::vector<double>& thresholds);

// Planned exit for one frame; adaptive policies return 0 (decided online).
std::size_t planned_exit(const ExitPolicy& policy, std::size_t exits, num::RandomState& rng);

}  // namespace exitrack::inference
