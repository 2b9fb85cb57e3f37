#include "exitrack/objectives/trainer.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "exitrack/numerics/optim.hpp"

namespace exitrack::objectives {

Strategy parse_strategy(const std::string& text) {
  if (text == "joint") return Strategy::joint;
  if (text == "fixed-backbone") return Strategy::fixed_backbone;
  if (text == "one-by-one") return Strategy::one_by_one;
  throw ConfigError("unknown training strategy '" + text + "' (expected joint|fixed-backbone|one-by-one)");
}

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::joint: return "joint";
    case Strategy::fixed_backbone: return "fixed-backbone";
    case Strategy::one_by_one: return "one-by-one";
  }
  return "?";
}

void TrainConfig::validate() const {
  if (samples_per_epoch == 0 || batch_size == 0) throw ConfigError("samples_per_epoch and batch_size must be positive");
  if (lr_heads <= 0 || lr_backbone < 0) throw ConfigError("learning rates must be positive");
  if (decay_at <= 0 || decay_at > 1) throw ConfigError("decay_at must lie in (0, 1]");
  if (one_by_one_fraction <= 0) throw ConfigError("one_by_one_fraction must be positive");
  if (max_gap == 0) throw ConfigError("max_gap must be positive");
  weights.validate();
}

TrainSample draw_sample(const std::vector<data::Sequence>& sequences, const TrainConfig& config,
                        num::RandomState& rng) {
  if (sequences.empty()) throw ContractError("training set is empty");
  const auto& seq = sequences[rng.index(sequences.size())];
  const std::size_t n = seq.frames.size();
  const std::size_t tx = rng.index(n);
  const std::size_t lo = tx > config.max_gap ? tx - config.max_gap : 0;
  const std::size_t hi = std::min(n - 1, tx + config.max_gap);
  const std::size_t tz = lo + rng.index(hi - lo + 1);
  auto pair = data::crop_pair(seq, tz, tx, config.crop, rng);
  return {pair.template_crop, pair.search_crop, pair.target};
}

std::vector<TrainSample> make_validation(const std::vector<data::Sequence>& sequences, const TrainConfig& config,
                                         std::uint64_t seed) {
  num::RandomState rng(seed);
  std::vector<TrainSample> out;
  for (std::size_t i = 0; i < config.val_samples; ++i) out.push_back(draw_sample(sequences, config, rng));
  return out;
}

std::vector<double> evaluate_samples(const Model& model, const std::vector<TrainSample>& samples, bool recycle) {
  num::NoGradGuard no_grad;
  const std::size_t k_max = model.exits();
  std::vector<double> total(k_max, 0.0);
  for (const auto& s : samples) {
    auto state = model.start(s.template_crop, s.search_crop);
    exits::Decision<float> prev;
    for (std::size_t k = 1; k <= k_max; ++k) {
      auto d = model.decide(state, k, recycle && k > 1 ? &prev : nullptr);
      total[k - 1] += data::iou(model.finish(d).box, s.target);
      prev = std::move(d);
    }
  }
  for (auto& t : total) t /= static_cast<double>(std::max<std::size_t>(1, samples.size()));
  return total;
}

namespace {

void append_params(std::vector<num::Tensor>& out, const num::ParameterList<float>& list) {
  for (const auto& p : list) out.push_back(p.tensor);
}

void set_trainable(const num::ParameterList<float>& list, bool on) {
  for (const auto& p : list) {
    auto t = p.tensor;
    t.set_requires_grad(on);
    if (!on) t.clear_grad();
  }
}

num::ParameterList<float> imitation_params(const Imitation& imitation) {
  num::ParameterList<float> out;
  for (std::size_t k = 0; k < imitation.size(); ++k) imitation[k].collect(out, "distill." + std::to_string(k + 1));
  return out;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(9);
  os << v;
  return os.str();
}

// Shared optimisation loop. `loss_fn` builds the loss of one sample and
// reports its parts.
struct StageRunner {
  const TrainConfig& config;
  std::vector<num::ParamGroup<float>> groups;
  std::size_t epochs;
  std::string stage;
  std::size_t exits;

  using SampleLoss = std::function<LossBreakdown<float>(const TrainSample&)>;

  void run(const std::vector<data::Sequence>& train, num::RandomState& rng, const SampleLoss& loss_fn,
           const std::function<std::vector<double>()>& validate, const std::vector<std::size_t>& trained_exits,
           bool with_imitation, TrainLog& log) {
    num::AdamW<float> opt(groups, {.weight_decay = config.weight_decay});
    std::vector<num::Tensor> all;
    for (const auto& g : groups) all.insert(all.end(), g.params.begin(), g.params.end());
    std::vector<double> base_lr;
    for (const auto& g : groups) base_lr.push_back(g.lr);
    const std::size_t steps_per_epoch = (config.samples_per_epoch + config.batch_size - 1) / config.batch_size;
    const std::size_t decay_epoch = static_cast<std::size_t>(std::floor(config.decay_at * static_cast<double>(epochs)));
    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
      EpochRecord rec;
      rec.epoch = epoch + 1;
      rec.stage = stage;
      std::vector<double> loc(exits, 0.0), sc(exits, 0.0);
      double imit = 0, total = 0;
      std::size_t seen = 0;
      for (std::size_t s = 0; s < steps_per_epoch; ++s, ++step) {
        const double warm = config.warmup_steps ? std::min(1.0, static_cast<double>(step + 1) / static_cast<double>(config.warmup_steps)) : 1.0;
        const double decay = epoch >= decay_epoch && decay_epoch < epochs ? 0.1 : 1.0;
        for (std::size_t g = 0; g < groups.size(); ++g) opt.set_lr(g, base_lr[g] * warm * decay);
        opt.zero_grad();
        const std::size_t batch = std::min(config.batch_size, config.samples_per_epoch - s * config.batch_size);
        for (std::size_t b = 0; b < batch; ++b) {
          const auto sample = draw_sample(train, config, rng);
          auto parts = loss_fn(sample);
          const double value = static_cast<double>(parts.total.item());
          if (!std::isfinite(value))
            throw TrainingError("non-finite loss in stage " + stage + ", epoch " + std::to_string(epoch + 1) +
                                ", step " + std::to_string(step) + " (locate/score/imitation parts: " +
                                fmt(parts.locate.empty() ? 0 : parts.locate[0]) + "/" +
                                fmt(parts.score.empty() ? 0 : parts.score[0]) + "/" + fmt(parts.imitation) + ")");
          num::backward(num::scale(parts.total, 1.0f / static_cast<float>(batch)));
          total += value;
          for (std::size_t i = 0; i < trained_exits.size(); ++i) {
            loc[trained_exits[i] - 1] += parts.locate[i];
            sc[trained_exits[i] - 1] += parts.score[i];
          }
          imit += parts.imitation;
          ++seen;
        }
        num::clip_grad_norm(all, config.clip_norm);
        opt.step();
      }
      const double n = static_cast<double>(seen);
      rec.loss_total = total / n;
      rec.locate.assign(exits, std::nullopt);
      rec.score.assign(exits, std::nullopt);
      for (auto k : trained_exits) {
        rec.locate[k - 1] = loc[k - 1] / n;
        rec.score[k - 1] = sc[k - 1] / n;
      }
      if (with_imitation) rec.imitation = imit / n;
      for (double v : validate()) rec.val_iou.push_back(v);
      log.rows.push_back(std::move(rec));
    }
  }
};

}  // namespace

Imitation make_imitation(const Model& model) {
  Imitation out;
  for (std::size_t k = 1; k < model.exits(); ++k) out.emplace_back(model.config().backbone.dim);
  return out;
}

void train_stage1(Model& model, const std::vector<data::Sequence>& train, const std::vector<TrainSample>& val,
                  const TrainConfig& config, TrainLog& log) {
  config.validate();
  const std::size_t k_final = model.exits();
  log.exits = k_final;
  const auto backbone = model.backbone_parameters();
  const auto head = model.branch_parameters(k_final);
  set_trainable(model.parameters(), false);
  set_trainable(backbone, true);
  set_trainable(head, true);

  std::vector<num::ParamGroup<float>> groups(2);
  append_params(groups[0].params, backbone);
  groups[0].lr = config.lr_backbone;
  append_params(groups[1].params, head);
  groups[1].lr = config.lr_heads;

  auto rng = num::RandomState(config.seed).split(11);
  StageRunner runner{config, groups, config.epochs_stage1, "1", k_final};
  runner.run(
      train, rng,
      [&](const TrainSample& s) {
        auto state = model.start(s.template_crop, s.search_crop);
        std::vector<exits::ExitOutcome<float>> outs{model.run_exit(state, k_final, nullptr)};
        return joint_loss(outs, s.target, num::Tensor(), config.weights);
      },
      [&] {
        std::vector<double> v(k_final, 0.0);
        const auto all = evaluate_samples(model, val, false);
        v[k_final - 1] = all[k_final - 1];
        return v;
      },
      {k_final}, false, log);
  set_trainable(model.parameters(), true);
}

void train_stage2(Model& model, Imitation& imitation, const std::vector<data::Sequence>& train,
                  const std::vector<TrainSample>& val, const TrainConfig& config, TrainLog& log) {
  config.validate();
  const std::size_t k_final = model.exits();
  log.exits = k_final;
  if (imitation.size() + 1 != k_final) throw ContractError("need one imitation module per student branch");
  const bool distilling = config.distill != distill::DistillMode::off && k_final > 1;
  const bool attention = config.distill == distill::DistillMode::on;

  // phases: (branches trained, epochs, stage label)
  struct Phase {
    std::vector<std::size_t> branches;
    std::size_t epochs;
    std::string label;
  };
  std::vector<Phase> phases;
  std::vector<std::size_t> every;
  for (std::size_t k = 1; k <= k_final; ++k) every.push_back(k);
  if (config.strategy == Strategy::one_by_one) {
    const auto per = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(config.one_by_one_fraction * static_cast<double>(config.epochs_stage2))));
    for (std::size_t k = 1; k <= k_final; ++k) phases.push_back({{k}, per, "2." + std::to_string(k)});
  } else {
    phases.push_back({every, config.epochs_stage2, "2"});
  }
  const bool train_backbone = config.strategy == Strategy::joint;

  auto rng = num::RandomState(config.seed).split(12);
  for (const auto& phase : phases) {
    set_trainable(model.parameters(), false);
    set_trainable(imitation_params(imitation), false);
    std::vector<num::ParamGroup<float>> groups(2);
    groups[0].lr = config.lr_backbone;
    groups[1].lr = config.lr_heads;
    if (train_backbone) {
      set_trainable(model.backbone_parameters(), true);
      append_params(groups[0].params, model.backbone_parameters());
    }
    for (auto k : phase.branches) {
      const auto p = model.branch_parameters(k);
      set_trainable(p, true);
      append_params(groups[1].params, p);
      if (distilling && attention && k < k_final) {
        num::ParameterList<float> ip;
        imitation[k - 1].collect(ip, "distill");
        set_trainable(ip, true);
        append_params(groups[1].params, ip);
      }
    }
    if (groups[0].params.empty()) groups.erase(groups.begin());

    const auto& trained = phase.branches;
    const bool phase_distills = distilling && std::any_of(trained.begin(), trained.end(), [&](std::size_t k) { return k < k_final; });
    StageRunner runner{config, groups, phase.epochs, phase.label, k_final};
    runner.run(
        train, rng,
        [&](const TrainSample& s) {
          auto state = model.start(s.template_crop, s.search_crop);
          auto outs = model.run_all(state);
          num::Tensor imit;
          if (phase_distills) {
            const auto teacher = outs.back().search_features.detach();
            std::vector<num::Tensor> students;
            for (auto k : trained) {
              if (k == k_final) continue;
              const auto& f = outs[k - 1].search_features;
              students.push_back(attention ? imitation[k - 1](teacher, f) : f);
            }
            imit = distill::imitation_loss(students, teacher);
          }
          std::vector<exits::ExitOutcome<float>> supervised;
          for (auto k : trained) supervised.push_back(outs[k - 1]);
          return joint_loss(supervised, s.target, imit, config.weights);
        },
        [&] { return evaluate_samples(model, val, true); }, trained, phase_distills, log);
  }
  set_trainable(model.parameters(), true);
  set_trainable(imitation_params(imitation), true);
}

std::string TrainLog::csv() const {
  std::ostringstream os;
  os << "epoch,stage,loss_total";
  for (std::size_t k = 1; k <= exits; ++k) os << ",loss_locate_e" << k;
  for (std::size_t k = 1; k <= exits; ++k) os << ",loss_score_e" << k;
  os << ",loss_imit";
  for (std::size_t k = 1; k <= exits; ++k) os << ",val_iou_e" << k;
  os << '\n';
  auto opt = [](const std::optional<double>& v) { return v ? fmt(*v) : std::string(); };
  for (const auto& r : rows) {
    os << r.epoch << ',' << r.stage << ',' << fmt(r.loss_total);
    for (const auto& v : r.locate) os << ',' << opt(v);
    for (const auto& v : r.score) os << ',' << opt(v);
    os << ',' << opt(r.imitation);
    for (const auto& v : r.val_iou) os << ',' << opt(v);
    os << '\n';
  }
  return os.str();
}

void TrainLog::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << csv();
}

num::Checkpoint make_checkpoint(const Model& model, const Imitation* imitation, const std::string& metadata) {
  auto params = model.parameters();
  if (imitation) {
    const auto ip = imitation_params(*imitation);
    params.insert(params.end(), ip.begin(), ip.end());
  }
  return num::capture(params, metadata);
}

void load_model(const num::Checkpoint& ckpt, Model& model, const std::vector<std::string>& prefixes) {
  auto params = model.parameters();
  if (!prefixes.empty()) {
    num::ParameterList<float> selected;
    for (const auto& p : params)
      for (const auto& prefix : prefixes)
        if (p.name.rfind(prefix, 0) == 0) {
          selected.push_back(p);
          break;
        }
    params = std::move(selected);
  }
  num::restore(ckpt, params);
}

void load_stage1(const num::Checkpoint& ckpt, Model& model) {
  const std::string final_exit = "exit" + std::to_string(model.exits()) + ".";
  num::ParameterList<float> selected;
  for (const auto& p : model.parameters())
    if (p.name.rfind("backbone.", 0) == 0 || p.name.rfind(final_exit, 0) == 0) selected.push_back(p);
  // the final exit never sees recycled features in stage 1, so its gate may be absent
  num::restore(ckpt, selected, {final_exit + "gate."});
}

void load_imitation(const num::Checkpoint& ckpt, Imitation& imitation) {
  auto params = imitation_params(imitation);
  num::restore(ckpt, params);
}

}  // namespace exitrack::objectives
