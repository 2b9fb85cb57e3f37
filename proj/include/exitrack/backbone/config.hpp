#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace exitrack::backbone {

struct BackboneConfig {
  std::size_t depth = 6;
  std::size_t dim = 64;
  std::size_t heads = 4;
  std::size_t mlp_ratio = 4;
  std::size_t patch = 8;
  std::size_t template_size = 32;
  std::size_t search_size = 64;
  std::vector<std::size_t> exit_layers{2, 4, 6};

  // Throws ConfigError on inconsistent fields.
  void validate() const;

  std::size_t template_tokens() const { return (template_size / patch) * (template_size / patch); }
  std::size_t search_tokens() const { return (search_size / patch) * (search_size / patch); }
  std::size_t search_grid() const { return search_size / patch; }
  std::size_t tokens() const { return 1 + template_tokens() + search_tokens(); }
  std::size_t exits() const { return exit_layers.size(); }
};

// Multiply-add counts. Only matrix products are counted; elementwise work,
// normalisation and softmax are treated as free.
namespace flops {

// One pre-norm encoder block over `tokens` tokens:
//   qkv + output projection  4 T D^2
//   scores and weighted sum  2 T^2 D
//   MLP                      2 r T D^2
std::uint64_t block(std::size_t tokens, std::size_t dim, std::size_t mlp_ratio);
std::uint64_t patch_embed(const BackboneConfig& c);
// Patch embedding plus layers [1, layer].
std::uint64_t backbone_until(const BackboneConfig& c, std::size_t layer);

}  // namespace flops

}  // namespace exitrack::backbone
