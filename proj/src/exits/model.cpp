#include "exitrack/exits/model.hpp"

#include <cmath>

namespace exitrack::exits {

ReuseMode parse_reuse(const std::string& text) {
  if (text == "none") return ReuseMode::none;
  if (text == "residual") return ReuseMode::residual;
  if (text == "input_sum") return ReuseMode::input_sum;
  if (text == "concat") return ReuseMode::concat;
  if (text == "gated_sum") return ReuseMode::gated_sum;
  throw ConfigError("unknown reuse mode '" + text + "' (expected none|residual|input_sum|concat|gated_sum)");
}

std::string to_string(ReuseMode mode) {
  switch (mode) {
    case ReuseMode::none: return "none";
    case ReuseMode::residual: return "residual";
    case ReuseMode::input_sum: return "input_sum";
    case ReuseMode::concat: return "concat";
    case ReuseMode::gated_sum: return "gated_sum";
  }
  return "?";
}

void ModelConfig::validate() const {
  backbone.validate();
  if (adapter_depths.size() != backbone.exit_layers.size())
    throw ConfigError("need one adapter depth per exit: " + std::to_string(adapter_depths.size()) + " depths for " +
                      std::to_string(backbone.exit_layers.size()) + " exits");
  if (reuse == ReuseMode::concat)
    for (std::size_t k = 1; k < adapter_depths.size(); ++k)
      if (adapter_depths[k] == 0)
        throw ConfigError("concat reuse needs an adapter at every recycling exit; exit " + std::to_string(k + 1) +
                          " has depth 0");
}

template <class T>
BasicTensor<T> comp(const BasicTensor<T>& h_k, const BasicTensor<T>& h_prev, ReuseMode mode, const num::Linear<T>* gate) {
  if (!h_prev.defined() || mode == ReuseMode::none || mode == ReuseMode::residual) return h_k;
  if (h_prev.shape() != h_k.shape())
    throw DimensionError("comp: h_k " + num::to_string(h_k.shape()) + " vs h_prev " + num::to_string(h_prev.shape()));
  switch (mode) {
    case ReuseMode::input_sum: return num::add(h_k, h_prev);
    case ReuseMode::concat: return num::concat<T>({h_k, h_prev}, 0);
    case ReuseMode::gated_sum:
      if (!gate) throw ContractError("comp: gated_sum needs a gate");
      return num::add(h_k, num::mul(num::sigmoid((*gate)(h_prev)), h_prev));
    default: return h_k;
  }
}

template <class T>
CornerHead<T>::CornerHead(CornerHeadShape shape, num::RandomState& rng) : shape_(shape) {
  const std::size_t d = shape.dim;
  if (d < 4) throw ConfigError("corner head needs dim >= 4");
  for (auto* tower : {&tl_tower, &br_tower}) {
    tower->emplace_back(d, d / 2, 3, rng);
    tower->emplace_back(d / 2, d / 4, 3, rng);
    tower->emplace_back(d / 4, 1, 1, rng);
  }
  const std::size_t g = shape.grid;
  std::vector<T> centres(g * g * 2);
  for (std::size_t i = 0; i < g; ++i)
    for (std::size_t j = 0; j < g; ++j) {
      centres[(i * g + j) * 2] = static_cast<T>((static_cast<double>(j) + 0.5) / static_cast<double>(g));
      centres[(i * g + j) * 2 + 1] = static_cast<T>((static_cast<double>(i) + 0.5) / static_cast<double>(g));
    }
  cell_centres_ = BasicTensor<T>({g * g, 2}, std::move(centres));
  // rows: x0, y0, x1, y1; columns: cx, cy, w, h
  to_box_ = BasicTensor<T>({4, 4}, {T(0.5), T(0), T(-1), T(0),  //
                                    T(0), T(0.5), T(0), T(-1),  //
                                    T(0.5), T(0), T(1), T(0),   //
                                    T(0), T(0.5), T(0), T(1)});
}

template <class T>
CornerOutput<T> CornerHead<T>::from_logits(const BasicTensor<T>& tl_logits, const BasicTensor<T>& br_logits) const {
  const std::size_t cells = shape_.grid * shape_.grid;
  CornerOutput<T> out;
  out.tl_map = num::softmax(num::reshape(tl_logits, {cells}), 0);
  out.br_map = num::softmax(num::reshape(br_logits, {cells}), 0);
  const auto tl = num::matmul(num::reshape(out.tl_map, {1, cells}), cell_centres_);
  const auto br = num::matmul(num::reshape(out.br_map, {1, cells}), cell_centres_);
  out.corners = num::concat<T>({tl, br}, 1);
  out.box = num::matmul(out.corners, to_box_);
  return out;
}

template <class T>
CornerOutput<T> CornerHead<T>::operator()(const BasicTensor<T>& search_tokens) const {
  const std::size_t g = shape_.grid;
  if (search_tokens.rank() != 2 || search_tokens.dim(0) != g * g)
    throw DimensionError("corner head expects [" + std::to_string(g * g) + ", D] search tokens, got " +
                         num::to_string(search_tokens.shape()));
  auto run = [&](const std::vector<num::Conv2d<T>>& tower) {
    auto h = search_tokens;
    for (std::size_t i = 0; i < tower.size(); ++i) {
      h = tower[i](h, g, g);
      if (i + 1 < tower.size()) h = num::relu(h);
    }
    return h;
  };
  return from_logits(run(tl_tower), run(br_tower));
}

template <class T>
std::uint64_t CornerHead<T>::flops() const {
  std::uint64_t per_cell = 0;
  for (const auto& c : tl_tower) per_cell += c.weight.dim(0) * c.weight.dim(1);
  const std::uint64_t cells = shape_.grid * shape_.grid;
  return 2 * cells * per_cell + 2 * cells * 2;
}

template <class T>
void CornerHead<T>::collect(ParameterList<T>& out, const std::string& prefix) const {
  for (std::size_t i = 0; i < tl_tower.size(); ++i) tl_tower[i].collect(out, prefix + ".tl." + std::to_string(i));
  for (std::size_t i = 0; i < br_tower.size(); ++i) br_tower[i].collect(out, prefix + ".br." + std::to_string(i));
}

namespace {

std::size_t search_grid_checked(const BackboneConfig& c) {
  const std::size_t n = c.search_tokens();
  const auto g = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(n))));
  if (g * g != n) throw DimensionError("search token count " + std::to_string(n) + " is not a perfect square");
  return g;
}

}  // namespace

template <class T>
ExitBranch<T>::ExitBranch(std::size_t idx, std::size_t adapter_depth, const BackboneConfig& bb, ReuseMode mode,
                          num::RandomState& rng)
    : index(idx),
      reuse(mode),
      tokens_(bb.tokens()),
      n_template_(bb.template_tokens()),
      n_search_(bb.search_tokens()),
      dim_(bb.dim),
      mlp_ratio_(bb.mlp_ratio) {
  const std::size_t d = bb.dim;
  for (std::size_t i = 0; i < adapter_depth; ++i) adapter.emplace_back(d, bb.heads, bb.mlp_ratio, rng);
  if (mode == ReuseMode::gated_sum && idx > 1) gate = num::Linear<T>(d, d, rng);
  norm = num::LayerNorm<T>(d);
  score1 = num::Linear<T>(d, d, rng);
  score2 = num::Linear<T>(d, d, rng);
  score3 = num::Linear<T>(d, 1, rng);
  proj = num::Linear<T>(d, d, rng);
  head = CornerHead<T>({search_grid_checked(bb), d}, rng);
}

template <class T>
std::pair<BasicTensor<T>, BasicTensor<T>> ExitBranch<T>::decide(const BasicTensor<T>& h_k,
                                                                const BasicTensor<T>& h_prev) const {
  if (reuse == ReuseMode::concat && h_prev.defined() && adapter.empty())
    throw ConfigError("concat reuse at exit " + std::to_string(index) + " needs an adapter to absorb the extra tokens");
  auto h = comp(h_k, h_prev, reuse, gate.weight.defined() ? &gate : nullptr);
  for (const auto& block : adapter) h = block(h);
  if (h.dim(0) != h_k.dim(0)) h = num::slice(h, 0, 0, h_k.dim(0));  // concat: keep the current tokens
  if (reuse == ReuseMode::residual && h_prev.defined()) h = num::add(h, h_prev);
  return {h, score(h)};
}

template <class T>
BasicTensor<T> ExitBranch<T>::score(const BasicTensor<T>& adapter_out) const {
  const auto slot = norm(backbone::iou_slot(adapter_out));
  const auto z = score3(num::relu(score2(num::relu(score1(slot)))));
  return num::sigmoid(num::reshape(z, {1}));
}

template <class T>
CornerOutput<T> ExitBranch<T>::predict_box(const BasicTensor<T>& adapter_out) const {
  const auto search = backbone::search_slice(adapter_out, n_template_, n_search_);
  return head(proj(norm(search)));
}

template <class T>
std::uint64_t ExitBranch<T>::decision_flops(bool with_prev) const {
  const bool doubled = with_prev && reuse == ReuseMode::concat;
  std::uint64_t total = adapter.size() * backbone::flops::block(doubled ? 2 * tokens_ : tokens_, dim_, mlp_ratio_);
  if (with_prev && gate.weight.defined()) total += static_cast<std::uint64_t>(tokens_) * dim_ * dim_;
  total += 2 * static_cast<std::uint64_t>(dim_) * dim_ + dim_;  // score MLP on one token
  return total;
}

template <class T>
std::uint64_t ExitBranch<T>::box_flops() const {
  return static_cast<std::uint64_t>(n_search_) * dim_ * dim_ + head.flops();
}

template <class T>
void ExitBranch<T>::collect(ParameterList<T>& out, const std::string& prefix) const {
  for (std::size_t i = 0; i < adapter.size(); ++i) adapter[i].collect(out, prefix + ".adapter." + std::to_string(i));
  if (gate.weight.defined()) gate.collect(out, prefix + ".gate");
  norm.collect(out, prefix + ".norm");
  score1.collect(out, prefix + ".score.0");
  score2.collect(out, prefix + ".score.1");
  score3.collect(out, prefix + ".score.2");
  proj.collect(out, prefix + ".proj");
  head.collect(out, prefix + ".box");
}

template <class T>
ExitModel<T>::ExitModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  const num::RandomState root(seed);
  auto enc_rng = root.split(1);
  encoder = backbone::Encoder<T>(config_.backbone, enc_rng);
  for (std::size_t k = 0; k < config_.adapter_depths.size(); ++k) {
    auto rng = root.split(100 + k);
    branches.emplace_back(k + 1, config_.adapter_depths[k], config_.backbone, config_.reuse, rng);
  }
}

template <class T>
Decision<T> ExitModel<T>::decide(BackboneState<T>& state, std::size_t k, const Decision<T>* prev) const {
  if (k < 1 || k > branches.size()) throw ContractError("exit index " + std::to_string(k) + " out of range");
  if (prev && prev->exit_index != k - 1) throw ContractError("decide: previous decision must come from exit k-1");
  const std::size_t layer = config_.backbone.exit_layers[k - 1];
  encoder.advance(state, layer);
  const auto& h_k = encoder.tap(state, layer);
  const auto& branch = branches[k - 1];
  BasicTensor<T> h_prev;
  if (prev && config_.reuse != ReuseMode::none) h_prev = prev->adapter_out;
  auto [adapter_out, s] = branch.decide(h_k, h_prev);
  Decision<T> d;
  d.exit_index = k;
  d.adapter_out = adapter_out;
  d.score = s;
  d.decisioner_flops = (prev ? prev->decisioner_flops : 0) + branch.decision_flops(h_prev.defined());
  d.flops_so_far = backbone::flops::backbone_until(config_.backbone, layer) + d.decisioner_flops;
  return d;
}

template <class T>
ExitOutcome<T> ExitModel<T>::finish(const Decision<T>& decision) const {
  const auto& branch = branches[decision.exit_index - 1];
  ExitOutcome<T> out;
  out.exit_index = decision.exit_index;
  out.adapter_features = decision.adapter_out;
  out.search_features = backbone::search_slice(decision.adapter_out, config_.backbone.template_tokens(),
                                               config_.backbone.search_tokens());
  out.score_tensor = decision.score;
  out.score = static_cast<double>(decision.score.item());
  out.corners = branch.predict_box(decision.adapter_out);
  const auto b = out.corners.box.data();
  out.box = data::clamp_box({static_cast<double>(b[0]), static_cast<double>(b[1]), static_cast<double>(b[2]),
                             static_cast<double>(b[3])});
  out.flops_so_far = decision.flops_so_far + branch.box_flops();
  return out;
}

template <class T>
std::vector<ExitOutcome<T>> ExitModel<T>::run_all(BackboneState<T>& state) const {
  std::vector<ExitOutcome<T>> out;
  Decision<T> prev;
  for (std::size_t k = 1; k <= branches.size(); ++k) {
    auto d = decide(state, k, k > 1 ? &prev : nullptr);
    out.push_back(finish(d));
    prev = std::move(d);
  }
  return out;
}

template <class T>
ParameterList<T> ExitModel<T>::backbone_parameters() const {
  ParameterList<T> out;
  encoder.collect(out, "backbone");
  return out;
}

template <class T>
ParameterList<T> ExitModel<T>::branch_parameters(std::size_t k) const {
  ParameterList<T> out;
  branches.at(k - 1).collect(out, "exit" + std::to_string(k));
  return out;
}

template <class T>
ParameterList<T> ExitModel<T>::parameters() const {
  auto out = backbone_parameters();
  for (std::size_t k = 1; k <= branches.size(); ++k) {
    auto p = branch_parameters(k);
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

#define EXITRACK_INSTANTIATE_EXITS(T)                                                                       \
  template BasicTensor<T> comp(const BasicTensor<T>&, const BasicTensor<T>&, ReuseMode, const num::Linear<T>*); \
  template class CornerHead<T>;                                                                            \
  template class ExitBranch<T>;                                                                            \
  template class ExitModel<T>;

EXITRACK_INSTANTIATE_EXITS(float)
EXITRACK_INSTANTIATE_EXITS(double)

#undef EXITRACK_INSTANTIATE_EXITS

}  // namespace exitrack::exits
