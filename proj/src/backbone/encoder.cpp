#include "exitrack/backbone/encoder.hpp"

#include <algorithm>
#include <cmath>

namespace exitrack::backbone {

template <class T>
TransformerBlock<T>::TransformerBlock(std::size_t dim, std::size_t n_heads, std::size_t mlp_ratio,
                                      num::RandomState& rng)
    : norm1(dim),
      qkv(dim, 3 * dim, rng),
      proj(dim, dim, rng),
      norm2(dim),
      fc1(dim, dim * mlp_ratio, rng),
      fc2(dim * mlp_ratio, dim, rng),
      heads(n_heads) {}

template <class T>
BasicTensor<T> TransformerBlock<T>::operator()(const BasicTensor<T>& x,
                                               std::vector<BasicTensor<T>>* attention) const {
  const std::size_t dim = x.dim(1), head_dim = dim / heads;
  const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(head_dim)));
  const auto packed = qkv(norm1(x));
  std::vector<BasicTensor<T>> outputs;
  outputs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const auto q = num::slice(packed, 1, h * head_dim, (h + 1) * head_dim);
    const auto k = num::slice(packed, 1, dim + h * head_dim, dim + (h + 1) * head_dim);
    const auto v = num::slice(packed, 1, 2 * dim + h * head_dim, 2 * dim + (h + 1) * head_dim);
    const auto probs = num::softmax(num::scale(num::matmul_nt(q, k), scale), 1);
    if (attention) attention->push_back(probs);
    outputs.push_back(num::matmul(probs, v));
  }
  const auto mixed = heads == 1 ? outputs.front() : num::concat(outputs, 1);
  const auto h1 = num::add(x, proj(mixed));
  return num::add(h1, fc2(num::gelu(fc1(norm2(h1)))));
}

template <class T>
void TransformerBlock<T>::collect(ParameterList<T>& out, const std::string& prefix) const {
  norm1.collect(out, prefix + ".norm1");
  qkv.collect(out, prefix + ".attn.qkv");
  proj.collect(out, prefix + ".attn.proj");
  norm2.collect(out, prefix + ".norm2");
  fc1.collect(out, prefix + ".mlp.fc1");
  fc2.collect(out, prefix + ".mlp.fc2");
}

template <class T>
TokenSequence<T> TokenSequence<T>::with_tokens(BasicTensor<T> tokens) const {
  if (tokens.rank() != 2 || tokens.dim(0) != length())
    throw DimensionError("token sequence of length " + std::to_string(length()) + " cannot hold " +
                         num::to_string(tokens.shape()));
  TokenSequence out = *this;
  out.tokens_ = std::move(tokens);
  return out;
}

template <class T>
TokenSequence<T> assemble_input(const BasicTensor<T>& z_tokens, const BasicTensor<T>& x_tokens,
                                const BasicTensor<T>& iou_token, const BasicTensor<T>& iou_pos,
                                const BasicTensor<T>& z_pos, const BasicTensor<T>& x_pos) {
  const std::size_t d = iou_token.dim(iou_token.rank() - 1);
  for (const auto* t : {&z_tokens, &x_tokens, &iou_token, &iou_pos, &z_pos, &x_pos})
    if (t->rank() != 2 || t->dim(1) != d)
      throw DimensionError("assemble_input: all inputs must be [n, " + std::to_string(d) + "], got " +
                           num::to_string(t->shape()));
  if (iou_token.dim(0) != 1 || iou_pos.dim(0) != 1) throw DimensionError("assemble_input: IoU token must be [1, D]");
  if (z_pos.shape() != z_tokens.shape() || x_pos.shape() != x_tokens.shape())
    throw DimensionError("assemble_input: position embeddings " + num::to_string(z_pos.shape()) + "/" +
                         num::to_string(x_pos.shape()) + " do not match tokens " + num::to_string(z_tokens.shape()) +
                         "/" + num::to_string(x_tokens.shape()));
  TokenSequence<T> seq;
  seq.tokens_ = num::concat<T>({num::add(iou_token, iou_pos), num::add(z_tokens, z_pos), num::add(x_tokens, x_pos)}, 0);
  seq.n_template_ = z_tokens.dim(0);
  seq.n_search_ = x_tokens.dim(0);
  return seq;
}

template <class T>
BasicTensor<T> iou_slot(const BasicTensor<T>& hidden) {
  return num::slice(hidden, 0, 0, 1);
}

template <class T>
BasicTensor<T> search_slice(const BasicTensor<T>& hidden, std::size_t n_template, std::size_t n_search) {
  return num::slice(hidden, 0, 1 + n_template, 1 + n_template + n_search);
}

template <class T>
Encoder<T>::Encoder(const BackboneConfig& config, num::RandomState& rng) : config_(config) {
  config_.validate();
  const std::size_t d = config_.dim;
  patch_proj = num::Linear<T>(3 * config_.patch * config_.patch, d, rng);
  iou_token = num::init::truncated_normal<T>({1, d}, 0.02, rng);
  iou_pos = num::init::truncated_normal<T>({1, d}, 0.02, rng);
  template_pos = num::init::truncated_normal<T>({config_.template_tokens(), d}, 0.02, rng);
  search_pos = num::init::truncated_normal<T>({config_.search_tokens(), d}, 0.02, rng);
  for (std::size_t i = 0; i < config_.depth; ++i) blocks.emplace_back(d, config_.heads, config_.mlp_ratio, rng);
}

template <class T>
BasicTensor<T> Encoder<T>::patch_embed(const BasicTensor<T>& image) const {
  if (image.rank() != 3 || image.dim(0) != 3)
    throw DimensionError("patch_embed expects [3, H, W], got " + num::to_string(image.shape()));
  const auto centred = num::scale(num::add_scalar(image, T(-0.5)), T(4));
  return patch_proj(num::patchify(centred, config_.patch));
}

template <class T>
TokenSequence<T> Encoder<T>::embed(const BasicTensor<T>& template_image, const BasicTensor<T>& search_image) const {
  if (template_image.dim(1) != config_.template_size || search_image.dim(1) != config_.search_size)
    throw DimensionError("embed: expected template " + std::to_string(config_.template_size) + "px and search " +
                         std::to_string(config_.search_size) + "px crops, got " +
                         num::to_string(template_image.shape()) + " and " + num::to_string(search_image.shape()));
  return assemble_input(patch_embed(template_image), patch_embed(search_image), iou_token, iou_pos, template_pos,
                        search_pos);
}

template <class T>
TokenSequence<T> Encoder<T>::encode_until(const TokenSequence<T>& seq, std::size_t from, std::size_t to,
                                          std::vector<BasicTensor<T>>* attention) const {
  if (from >= to || to > config_.depth)
    throw ContractError("encode_until: need 0 <= from < to <= " + std::to_string(config_.depth) + ", got (" +
                        std::to_string(from) + ", " + std::to_string(to) + "]");
  auto h = seq.tokens();
  for (std::size_t l = from; l < to; ++l) h = blocks[l](h, attention);
  return seq.with_tokens(h);
}

template <class T>
BackboneState<T> Encoder<T>::start(const BasicTensor<T>& template_image, const BasicTensor<T>& search_image) const {
  return {embed(template_image, search_image), 0, {}};
}

template <class T>
void Encoder<T>::advance(BackboneState<T>& state, std::size_t layer) const {
  if (layer < state.layer) throw ContractError("advance: cannot move backwards");
  while (state.layer < layer) {
    state.sequence = encode_until(state.sequence, state.layer, state.layer + 1);
    ++state.layer;
    if (std::find(config_.exit_layers.begin(), config_.exit_layers.end(), state.layer) != config_.exit_layers.end())
      state.taps[state.layer] = state.sequence.tokens();
  }
}

template <class T>
const BasicTensor<T>& Encoder<T>::tap(const BackboneState<T>& state, std::size_t layer) const {
  if (std::find(config_.exit_layers.begin(), config_.exit_layers.end(), layer) == config_.exit_layers.end())
    throw ContractError("tap: layer " + std::to_string(layer) + " is not an exit layer");
  auto it = state.taps.find(layer);
  if (it == state.taps.end()) throw ContractError("tap: layer " + std::to_string(layer) + " not reached yet");
  return it->second;
}

template <class T>
void Encoder<T>::collect(ParameterList<T>& out, const std::string& prefix) const {
  patch_proj.collect(out, prefix + ".patch_embed");
  out.push_back({prefix + ".iou_token", iou_token});
  out.push_back({prefix + ".pos.iou", iou_pos});
  out.push_back({prefix + ".pos.template", template_pos});
  out.push_back({prefix + ".pos.search", search_pos});
  for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i].collect(out, prefix + ".blocks." + std::to_string(i));
}

#define EXITRACK_INSTANTIATE_BACKBONE(T)                                                                      \
  template class TransformerBlock<T>;                                                                         \
  template class TokenSequence<T>;                                                                            \
  template class Encoder<T>;                                                                                  \
  template TokenSequence<T> assemble_input(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&, \
                                           const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&); \
  template BasicTensor<T> iou_slot(const BasicTensor<T>&);                                                    \
  template BasicTensor<T> search_slice(const BasicTensor<T>&, std::size_t, std::size_t);

EXITRACK_INSTANTIATE_BACKBONE(float)
EXITRACK_INSTANTIATE_BACKBONE(double)

#undef EXITRACK_INSTANTIATE_BACKBONE

}  // namespace exitrack::backbone
