#include "exitrack/backbone/config.hpp"

#include <string>

#include "exitrack/numerics/errors.hpp"

namespace exitrack::backbone {

void BackboneConfig::validate() const {
  if (depth == 0 || dim == 0 || heads == 0 || mlp_ratio == 0 || patch == 0)
    throw ConfigError("backbone depth, dim, heads, mlp_ratio and patch must be positive");
  if (dim % heads != 0)
    throw ConfigError("backbone dim " + std::to_string(dim) + " is not divisible by " + std::to_string(heads) + " heads");
  if (template_size % patch != 0 || search_size % patch != 0)
    throw ConfigError("template and search sizes must be multiples of the patch size " + std::to_string(patch));
  if (exit_layers.empty()) throw ConfigError("at least one exit layer is required");
  for (std::size_t i = 0; i < exit_layers.size(); ++i) {
    if (exit_layers[i] < 1 || exit_layers[i] > depth)
      throw ConfigError("exit layer " + std::to_string(exit_layers[i]) + " outside [1, " + std::to_string(depth) + "]");
    if (i > 0 && exit_layers[i] <= exit_layers[i - 1]) throw ConfigError("exit layers must be strictly increasing");
  }
  if (exit_layers.back() != depth) throw ConfigError("the last exit layer must equal the backbone depth");
}

namespace flops {

std::uint64_t block(std::size_t tokens, std::size_t dim, std::size_t mlp_ratio) {
  const std::uint64_t t = tokens, d = dim, r = mlp_ratio;
  return t * d * d * (4 + 2 * r) + 2 * t * t * d;
}

std::uint64_t patch_embed(const BackboneConfig& c) {
  const std::uint64_t in = 3 * c.patch * c.patch;
  return static_cast<std::uint64_t>(c.template_tokens() + c.search_tokens()) * in * c.dim;
}

std::uint64_t backbone_until(const BackboneConfig& c, std::size_t layer) {
  return patch_embed(c) + layer * block(c.tokens(), c.dim, c.mlp_ratio);
}

}  // namespace flops

}  // namespace exitrack::backbone
