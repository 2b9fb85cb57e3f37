#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "exitrack/backbone/encoder.hpp"
#include "exitrack/data/box.hpp"

namespace exitrack::exits {

using backbone::BackboneConfig;
using backbone::BackboneState;
using num::BasicTensor;
using num::ParameterList;

// How exit k combines its tap h_k with the previous exit's adapter output.
enum class ReuseMode { none, residual, input_sum, concat, gated_sum };

ReuseMode parse_reuse(const std::string& text);
std::string to_string(ReuseMode mode);

struct ModelConfig {
  BackboneConfig backbone;
  std::vector<std::size_t> adapter_depths{2, 1, 0};
  ReuseMode reuse = ReuseMode::input_sum;

  void validate() const;
};

// Gate for ReuseMode::gated_sum: g(h) = sigmoid(h W + b), per token and channel.
template <class T>
BasicTensor<T> comp(const BasicTensor<T>& h_k, const BasicTensor<T>& h_prev, ReuseMode mode,
                    const num::Linear<T>* gate = nullptr);

struct CornerHeadShape {
  std::size_t grid = 8;
  std::size_t dim = 64;
};

template <class T>
struct CornerOutput {
  BasicTensor<T> corners;  // [1,4] x0, y0, x1, y1 in search-crop units
  BasicTensor<T> box;      // [1,4] cx, cy, w, h, not clamped
  BasicTensor<T> tl_map;   // [G*G] probabilities, raster order
  BasicTensor<T> br_map;
};

// Two conv towers (3x3 D->D/2, 3x3 D/2->D/4, 1x1 D/4->1, ReLU between)
// over the search grid, spatial softmax, then soft-argmax over cell
// centres ((j+0.5)/G, (i+0.5)/G).
template <class T>
class CornerHead {
 public:
  CornerHead() = default;
  CornerHead(CornerHeadShape shape, num::RandomState& rng);

  CornerOutput<T> operator()(const BasicTensor<T>& search_tokens) const;
  // Soft-argmax and box conversion given logits [G*G] for both corners.
  CornerOutput<T> from_logits(const BasicTensor<T>& tl_logits, const BasicTensor<T>& br_logits) const;
  std::uint64_t flops() const;
  void collect(ParameterList<T>& out, const std::string& prefix) const;

  std::vector<num::Conv2d<T>> tl_tower;
  std::vector<num::Conv2d<T>> br_tower;

 private:
  CornerHeadShape shape_;
  BasicTensor<T> cell_centres_;  // [G*G, 2]
  BasicTensor<T> to_box_;        // [4, 4] corners -> (cx, cy, w, h)
};

template <class T>
struct Decision {
  std::size_t exit_index = 0;       // 1-based
  BasicTensor<T> adapter_out;       // h_k^R, cached for the next exit
  BasicTensor<T> score;             // [1] in [0, 1]
  std::uint64_t decisioner_flops = 0;  // every decisioner evaluated so far
  std::uint64_t flops_so_far = 0;      // backbone + decisioner_flops
};

// Per-exit outcome. Tensors stay on the tape during training.
template <class T>
struct ExitOutcome {
  std::size_t exit_index = 0;
  data::BoundingBox box;            // clamped to the valid box range
  double score = 0;
  BasicTensor<T> adapter_features;  // h_k^R
  BasicTensor<T> search_features;   // search-token slice of h_k^R
  BasicTensor<T> score_tensor;
  CornerOutput<T> corners;
  std::uint64_t flops_so_far = 0;   // includes this exit's box head
};

// Decisioner pi_k and box head phi_k of one exit.
template <class T>
class ExitBranch {
 public:
  ExitBranch() = default;
  ExitBranch(std::size_t index, std::size_t adapter_depth, const BackboneConfig& backbone, ReuseMode reuse,
             num::RandomState& rng);

  // (adapter_out, s_k) from the composed input. `h_prev` may be undefined.
  std::pair<BasicTensor<T>, BasicTensor<T>> decide(const BasicTensor<T>& h_k, const BasicTensor<T>& h_prev) const;
  BasicTensor<T> score(const BasicTensor<T>& adapter_out) const;
  CornerOutput<T> predict_box(const BasicTensor<T>& adapter_out) const;

  std::uint64_t decision_flops(bool with_prev) const;
  std::uint64_t box_flops() const;
  void collect(ParameterList<T>& out, const std::string& prefix) const;

  std::size_t index = 0;  // 1-based
  ReuseMode reuse = ReuseMode::input_sum;
  std::vector<backbone::TransformerBlock<T>> adapter;
  num::Linear<T> gate;
  num::LayerNorm<T> norm;
  num::Linear<T> score1, score2, score3;
  num::Linear<T> proj;
  CornerHead<T> head;

 private:
  std::size_t tokens_ = 0;
  std::size_t n_template_ = 0;
  std::size_t n_search_ = 0;
  std::size_t dim_ = 0;
  std::size_t mlp_ratio_ = 4;
};

template <class T>
class ExitModel {
 public:
  ExitModel() = default;
  ExitModel(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  std::size_t exits() const { return branches.size(); }

  BackboneState<T> start(const BasicTensor<T>& template_image, const BasicTensor<T>& search_image) const {
    return encoder.start(template_image, search_image);
  }

  // Advances the backbone to exit k (1-based) and runs its decisioner.
  // `prev` is the decision of exit k-1, or null.
  Decision<T> decide(BackboneState<T>& state, std::size_t k, const Decision<T>* prev) const;
  ExitOutcome<T> finish(const Decision<T>& decision) const;
  ExitOutcome<T> run_exit(BackboneState<T>& state, std::size_t k, const Decision<T>* prev) const {
    return finish(decide(state, k, prev));
  }

  // Every exit in order with recycling (training and analysis).
  std::vector<ExitOutcome<T>> run_all(BackboneState<T>& state) const;

  ParameterList<T> backbone_parameters() const;
  ParameterList<T> branch_parameters(std::size_t k) const;
  ParameterList<T> parameters() const;

  backbone::Encoder<T> encoder;
  std::vector<ExitBranch<T>> branches;

 private:
  ModelConfig config_;
};

}  // namespace exitrack::exits
