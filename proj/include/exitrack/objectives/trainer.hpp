#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "exitrack/data/crop.hpp"
#include "exitrack/distill/imitation.hpp"
#include "exitrack/numerics/checkpoint.hpp"
#include "exitrack/objectives/losses.hpp"

namespace exitrack::objectives {

using Model = exits::ExitModel<float>;
using Imitation = std::vector<distill::ImitationAttention<float>>;

enum class Strategy { joint, fixed_backbone, one_by_one };

Strategy parse_strategy(const std::string& text);
std::string to_string(Strategy s);

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  std::size_t epochs_stage1 = 40;
  std::size_t epochs_stage2 = 40;
  std::size_t samples_per_epoch = 256;
  std::size_t batch_size = 8;
  double lr_heads = 3e-3;
  double lr_backbone = 1e-3;
  double weight_decay = 1e-4;
  double decay_at = 0.8;             // fraction of a stage after which lr *= 0.1
  std::size_t warmup_steps = 20;     // linear lr warm-up at the start of each stage
  double clip_norm = 1.0;
  // epochs per branch for one-by-one, as a fraction of epochs_stage2
  double one_by_one_fraction = 0.4;
  Strategy strategy = Strategy::joint;
  distill::DistillMode distill = distill::DistillMode::on;
  LossWeights weights;
  std::size_t max_gap = 20;          // template/search frame distance
  std::size_t val_samples = 128;
  data::CropConfig crop{.center_jitter = 0.5, .scale_jitter = 0.15};
  std::uint64_t seed = 1;

  void validate() const;
};

struct TrainSample {
  num::Tensor template_crop;
  num::Tensor search_crop;
  data::BoundingBox target;
};

// Random (template, search) pairs from a set of sequences.
TrainSample draw_sample(const std::vector<data::Sequence>& sequences, const TrainConfig& config, num::RandomState& rng);
std::vector<TrainSample> make_validation(const std::vector<data::Sequence>& sequences, const TrainConfig& config,
                                         std::uint64_t seed);

// Mean IoU per exit over samples. With `recycle` false each exit is run
// without the previous exit's features.
std::vector<double> evaluate_samples(const Model& model, const std::vector<TrainSample>& samples, bool recycle = true);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based within the stage
  std::string stage;      // "1", "2", "2.k" for one-by-one phase k
  double loss_total = 0;
  std::vector<std::optional<double>> locate;  // per exit; empty when not trained
  std::vector<std::optional<double>> score;
  std::optional<double> imitation;
  std::vector<std::optional<double>> val_iou;
};

struct TrainLog {
  std::size_t exits = 0;
  std::vector<EpochRecord> rows;

  std::string csv() const;
  void write_csv(const std::filesystem::path& path) const;
};

// Imitation modules for students 1..K-1.
Imitation make_imitation(const Model& model);

// Backbone and final branch only; the final exit sees no recycled input.
void train_stage1(Model& model, const std::vector<data::Sequence>& train, const std::vector<TrainSample>& val,
                  const TrainConfig& config, TrainLog& log);
// All branches according to config.strategy and config.distill.
void train_stage2(Model& model, Imitation& imitation, const std::vector<data::Sequence>& train,
                  const std::vector<TrainSample>& val, const TrainConfig& config, TrainLog& log);

// Checkpoint entries: model parameters, then "distill.k.*" for each student.
num::Checkpoint make_checkpoint(const Model& model, const Imitation* imitation, const std::string& metadata);
// Restores the model (distill entries are ignored). With `prefixes`
// non-empty only parameters whose names start with one of them are read.
void load_model(const num::Checkpoint& ckpt, Model& model, const std::vector<std::string>& prefixes = {});
void load_imitation(const num::Checkpoint& ckpt, Imitation& imitation);
// Restores what stage 1 trains (backbone and final exit) into a model whose
// other branches may use a different reuse mode.
void load_stage1(const num::Checkpoint& ckpt, Model& model);

}  // namespace exitrack::objectives
