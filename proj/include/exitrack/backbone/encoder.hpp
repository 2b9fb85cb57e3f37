#pragma once

#include <cstddef>
#include <map>
#include <vector>

#include "exitrack/backbone/config.hpp"
#include "exitrack/numerics/layers.hpp"

namespace exitrack::backbone {

using num::BasicTensor;
using num::ParameterList;

// Pre-norm transformer block: x + Attn(LN(x)), then x + MLP(LN(x)).
template <class T>
class TransformerBlock {
 public:
  TransformerBlock() = default;
  TransformerBlock(std::size_t dim, std::size_t heads, std::size_t mlp_ratio, num::RandomState& rng);

  // When `attention` is given, the per-head probability matrices are
  // appended to it.
  BasicTensor<T> operator()(const BasicTensor<T>& x, std::vector<BasicTensor<T>>* attention = nullptr) const;

  void collect(ParameterList<T>& out, const std::string& prefix) const;

  num::LayerNorm<T> norm1;
  num::Linear<T> qkv;
  num::Linear<T> proj;
  num::LayerNorm<T> norm2;
  num::Linear<T> fc1;
  num::Linear<T> fc2;
  std::size_t heads = 1;
};

// [IoU | template | search] token matrix. The only way to build one is
// assemble_input, which fixes the order.
template <class T>
class TokenSequence {
 public:
  TokenSequence() = default;

  const BasicTensor<T>& tokens() const { return tokens_; }
  std::size_t template_tokens() const { return n_template_; }
  std::size_t search_tokens() const { return n_search_; }
  std::size_t length() const { return 1 + n_template_ + n_search_; }

  // Same layout, new values (after some encoder layers).
  TokenSequence with_tokens(BasicTensor<T> tokens) const;

  template <class U>
  friend TokenSequence<U> assemble_input(const BasicTensor<U>&, const BasicTensor<U>&, const BasicTensor<U>&,
                                         const BasicTensor<U>&, const BasicTensor<U>&, const BasicTensor<U>&);

 private:
  BasicTensor<T> tokens_;
  std::size_t n_template_ = 0;
  std::size_t n_search_ = 0;
};

// Concatenates iou_token[1,D] + iou_pos[1,D], z_tokens[Nz,D] + z_pos and
// x_tokens[Nx,D] + x_pos.
template <class T>
TokenSequence<T> assemble_input(const BasicTensor<T>& z_tokens, const BasicTensor<T>& x_tokens,
                                const BasicTensor<T>& iou_token, const BasicTensor<T>& iou_pos,
                                const BasicTensor<T>& z_pos, const BasicTensor<T>& x_pos);

// Slices of a [1+Nz+Nx, D] hidden state.
template <class T>
BasicTensor<T> iou_slot(const BasicTensor<T>& hidden);
template <class T>
BasicTensor<T> search_slice(const BasicTensor<T>& hidden, std::size_t n_template, std::size_t n_search);

// Resumable forward state: the hidden tokens after `layer` blocks plus the
// hidden states captured at every exit layer reached so far.
template <class T>
struct BackboneState {
  TokenSequence<T> sequence;
  std::size_t layer = 0;
  std::map<std::size_t, BasicTensor<T>> taps;
};

template <class T>
class Encoder {
 public:
  Encoder() = default;
  Encoder(const BackboneConfig& config, num::RandomState& rng);

  const BackboneConfig& config() const { return config_; }

  // image[C,H,W] -> [(H/P)(W/P), D]; pixels are centred to [-2, 2] first.
  BasicTensor<T> patch_embed(const BasicTensor<T>& image) const;
  TokenSequence<T> embed(const BasicTensor<T>& template_image, const BasicTensor<T>& search_image) const;

  // Applies blocks (from, to] to a hidden state.
  TokenSequence<T> encode_until(const TokenSequence<T>& seq, std::size_t from, std::size_t to,
                                std::vector<BasicTensor<T>>* attention = nullptr) const;

  BackboneState<T> start(const BasicTensor<T>& template_image, const BasicTensor<T>& search_image) const;
  // Advances the state to `layer`, recording taps at exit layers passed.
  void advance(BackboneState<T>& state, std::size_t layer) const;
  // Hidden state at exit layer `layer`; ContractError if it is not an exit
  // layer or has not been reached.
  const BasicTensor<T>& tap(const BackboneState<T>& state, std::size_t layer) const;

  void collect(ParameterList<T>& out, const std::string& prefix) const;

  num::Linear<T> patch_proj;
  BasicTensor<T> iou_token;
  BasicTensor<T> iou_pos;
  BasicTensor<T> template_pos;
  BasicTensor<T> search_pos;
  std::vector<TransformerBlock<T>> blocks;

 private:
  BackboneConfig config_;
};

}  // namespace exitrack::backbone
