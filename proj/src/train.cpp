#include "svtas/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "svtas/error.hpp"
#include "svtas/ops.hpp"

namespace svtas {
namespace {

double ce_normalizer(std::size_t positions, std::size_t classes, CeNormalization norm) {
  return norm == CeNormalization::per_class ? double(positions * classes) : double(positions);
}

void check_loss(const Tensor& loss, const std::string& stream_id, std::size_t clip) {
  if (!std::isfinite(loss.item()))
    throw NumericalError("training: non-finite loss on stream '" + stream_id + "' clip " + std::to_string(clip));
}

// Callers zero every gradient buffer before backward: the memory write path
// only feeds the next clip through a detached bank, so its gradient is a
// structural zero rather than missing.
void apply_update(Model& model, AdamW& opt, const TrainerConfig& cfg) {
  if (cfg.grad_clip > 0.0) clip_grad_norm(model.parameters(), cfg.grad_clip);
  opt.step(model.parameters());
}

ClipRecord record_clip(const Model::ClipStep& step, const FeatureStream& stream, const Clip& clip,
                       const TrainerConfig& cfg, const ClipSpec& spec) {
  ClipRecord rec;
  rec.clip = clip;
  rec.logits.assign(step.action.logits.values().begin(), step.action.logits.values().end());
  rec.probs = step.action.probs;
  rec.prediction = decide(step.action, spec, clip.window_length());
  rec.reward = clip_reward(step.action, stream, clip, spec, cfg.reward);
  return rec;
}

void finish_episode(Episode& ep, std::size_t frames) {
  std::vector<std::vector<int>> blocks;
  std::vector<double> rewards;
  for (const ClipRecord& c : ep.clips) {
    blocks.push_back(c.prediction);
    rewards.push_back(c.reward.reward);
  }
  ep.prediction = concat_episode(blocks, frames);
  ep.episode_return = episode_return(rewards);
}

}  // namespace

Tensor clip_cross_entropy(const ActionLogits& logits, std::span<const int> labels, CeNormalization norm,
                          double prob_floor) {
  return ops::cross_entropy(logits.logits, labels, ce_normalizer(logits.positions, logits.classes, norm), prob_floor);
}

RewardRecord clip_reward(const ActionLogits& logits, const FeatureStream& stream, const Clip& clip,
                         const ClipSpec& spec, const RewardConfig& cfg) {
  const auto probs = upsample_predictions(logits.probs, logits.classes, spec, clip.window_length());
  return svtas::clip_reward(probs, window_labels(stream, clip), logits.classes, cfg);
}

Episode rollout(const Model& model, const FeatureStream& stream, const TrainerConfig& cfg) {
  NoGradGuard no_grad;
  const ClipSpec& spec = model.config().clip;
  Episode ep;
  ep.id = stream.id;
  MemoryBank memory = model.initial_memory();
  for (const Clip& clip : make_clips(stream.frames, spec)) {
    Model::ClipStep step = model.step(stream, clip, memory);
    ClipRecord rec = record_clip(step, stream, clip, cfg, spec);
    rec.cross_entropy =
        clip_cross_entropy(step.action, gather_labels(stream, clip.sampled_rows), cfg.ce_norm, cfg.prob_floor).item();
    ep.clips.push_back(std::move(rec));
    memory = std::move(step.memory);
  }
  finish_episode(ep, stream.frames);
  return ep;
}

Tensor weighted_episode_loss(const Model& model, const FeatureStream& stream, std::span<const double> weights,
                             const TrainerConfig& cfg, Episode* record,
                             const std::vector<MemoryBank>* frozen_memory) {
  const ClipSpec& spec = model.config().clip;
  const auto clips = make_clips(stream.frames, spec);
  if (weights.size() != clips.size())
    throw ShapeError("weighted_episode_loss: " + std::to_string(weights.size()) + " weights for " +
                     std::to_string(clips.size()) + " clips");
  if (frozen_memory && frozen_memory->size() != clips.size())
    throw ShapeError("weighted_episode_loss: frozen memory for " + std::to_string(frozen_memory->size()) +
                     " clips, stream has " + std::to_string(clips.size()));
  const double q = double(clips.size());
  MemoryBank memory = model.initial_memory();
  Tensor total;
  for (std::size_t j = 0; j < clips.size(); ++j) {
    Model::ClipStep step = model.step(stream, clips[j], frozen_memory ? (*frozen_memory)[j] : memory);
    const Tensor ce =
        clip_cross_entropy(step.action, gather_labels(stream, clips[j].sampled_rows), cfg.ce_norm, cfg.prob_floor);
    const Tensor term = ops::scale(ce, weights[j] / q);
    total = total.defined() ? ops::add(total, term) : term;
    if (record) {
      ClipRecord rec = record_clip(step, stream, clips[j], cfg, spec);
      rec.cross_entropy = ce.item();
      record->clips.push_back(std::move(rec));
    }
    memory = std::move(step.memory);
  }
  if (record) {
    record->id = stream.id;
    finish_episode(*record, stream.frames);
    record->loss = total.item();
  }
  return total;
}

std::vector<MemoryBank> episode_memories(const Model& model, const FeatureStream& stream) {
  NoGradGuard no_grad;
  std::vector<MemoryBank> out;
  MemoryBank memory = model.initial_memory();
  for (const Clip& clip : make_clips(stream.frames, model.config().clip)) {
    out.push_back(memory);
    memory = model.step(stream, clip, memory).memory;
  }
  return out;
}

Episode supervised_episode(Model& model, AdamW& opt, const FeatureStream& stream, const TrainerConfig& cfg) {
  const ClipSpec& spec = model.config().clip;
  Episode ep;
  ep.id = stream.id;
  MemoryBank memory = model.initial_memory();
  double loss_sum = 0.0;
  for (const Clip& clip : make_clips(stream.frames, spec)) {
    Model::ClipStep step = model.step(stream, clip, memory);
    const Tensor ce =
        clip_cross_entropy(step.action, gather_labels(stream, clip.sampled_rows), cfg.ce_norm, cfg.prob_floor);
    check_loss(ce, stream.id, clip.index);
    ClipRecord rec = record_clip(step, stream, clip, cfg, spec);
    rec.cross_entropy = ce.item();
    loss_sum += rec.cross_entropy;
    zero_grads(model.parameters());
    backward(ce);
    apply_update(model, opt, cfg);
    ep.clips.push_back(std::move(rec));
    memory = std::move(step.memory);
  }
  finish_episode(ep, stream.frames);
  ep.loss = loss_sum / double(ep.clips.size());
  return ep;
}

Episode mc_train_episode(Model& model, AdamW& opt, const FeatureStream& stream, const TrainerConfig& cfg) {
  const Episode first = rollout(model, stream, cfg);
  std::vector<double> rewards;
  for (const ClipRecord& c : first.clips) rewards.push_back(c.reward.reward);

  Episode ep;
  const Tensor loss = weighted_episode_loss(model, stream, rewards, cfg, &ep);
  check_loss(loss, stream.id, 0);
  // Q = 0 everywhere gives a zero estimator: no update at all.
  if (std::all_of(rewards.begin(), rewards.end(), [](double r) { return r == 0.0; })) return ep;
  zero_grads(model.parameters());
  backward(loss);
  apply_update(model, opt, cfg);
  return ep;
}

Episode td_train_step(Model& model, AdamW& opt, const FeatureStream& stream, const TrainerConfig& cfg) {
  const ClipSpec& spec = model.config().clip;
  Episode ep;
  ep.id = stream.id;
  MemoryBank memory = model.initial_memory();
  double loss_sum = 0.0;
  for (const Clip& clip : make_clips(stream.frames, spec)) {
    Model::ClipStep step = model.step(stream, clip, memory);
    ClipRecord rec = record_clip(step, stream, clip, cfg, spec);
    const Tensor ce =
        clip_cross_entropy(step.action, gather_labels(stream, clip.sampled_rows), cfg.ce_norm, cfg.prob_floor);
    rec.cross_entropy = ce.item();
    const double r = rec.reward.reward;
    const Tensor loss = ops::scale(ce, r);
    check_loss(loss, stream.id, clip.index);
    loss_sum += loss.item();
    if (r != 0.0) {
      zero_grads(model.parameters());
      backward(loss);
      apply_update(model, opt, cfg);
    }
    ep.clips.push_back(std::move(rec));
    memory = std::move(step.memory);
  }
  finish_episode(ep, stream.frames);
  ep.loss = loss_sum / double(ep.clips.size());
  return ep;
}

Episode train_episode(Model& model, AdamW& opt, const FeatureStream& stream, const TrainerConfig& cfg) {
  switch (cfg.mode) {
    case TrainMode::supervised: return supervised_episode(model, opt, stream, cfg);
    case TrainMode::mc: return mc_train_episode(model, opt, stream, cfg);
    case TrainMode::td: return td_train_step(model, opt, stream, cfg);
  }
  throw ConfigError("unknown train mode");
}

std::size_t Dataset::width() const {
  if (!train.empty()) return train.front().width;
  if (!test.empty()) return test.front().width;
  throw DataError("dataset: no streams");
}

std::vector<EpisodeLabels> episode_labels(const std::vector<Episode>& episodes,
                                          const std::vector<FeatureStream>& streams) {
  std::vector<EpisodeLabels> out;
  for (std::size_t i = 0; i < episodes.size(); ++i) out.push_back({episodes[i].id, episodes[i].prediction, streams[i].labels});
  return out;
}

MetricsReport evaluate_model(const Model& model, const std::vector<FeatureStream>& streams, const TrainerConfig& cfg) {
  std::vector<Episode> eps;
  eps.reserve(streams.size());
  for (const FeatureStream& s : streams) eps.push_back(rollout(model, s, cfg));
  return evaluate_dataset(episode_labels(eps, streams));
}

std::string metrics_csv_header() { return "epoch,split,acc,edit,f1_10,f1_25,f1_50"; }

std::string metrics_csv_row(const MetricsRow& row) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%zu,%s,%.4f,%.4f,%.4f,%.4f,%.4f", row.epoch, row.split.c_str(), row.report.acc,
                row.report.edit, row.report.f1[0], row.report.f1[1], row.report.f1[2]);
  return buf;
}

TrainingResult run_training(Model& model, const Dataset& data, const TrainerConfig& cfg,
                            const TrainingOptions& options) {
  if (data.train.empty()) throw DataError("run_training: empty training split");
  if (cfg.epochs == 0) throw ConfigError("run_training: epochs must be >= 1");
  AdamW opt(cfg.optim);
  Rng rng(cfg.seed ^ 0x5ee7a5u);
  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  std::ofstream csv;
  if (!options.output_dir.empty()) {
    std::filesystem::create_directories(options.output_dir);
    csv.open(options.output_dir / "metrics.csv");
    if (!csv) throw DataError("cannot write " + (options.output_dir / "metrics.csv").string());
    csv << metrics_csv_header() << '\n';
  }
  const auto emit = [&](TrainingResult& res, MetricsRow row) {
    if (csv.is_open()) csv << metrics_csv_row(row) << '\n' << std::flush;
    if (options.on_row) options.on_row(row);
    res.log.push_back(std::move(row));
  };

  TrainingResult result;
  bool have_best = false;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[std::size_t(rng.uniform_int(0, std::int64_t(i) - 1))]);
    std::vector<EpisodeLabels> seen;
    for (std::size_t idx : order) {
      const Episode ep = train_episode(model, opt, data.train[idx], cfg);
      seen.push_back({ep.id, ep.prediction, data.train[idx].labels});
    }
    emit(result, {epoch, "train", evaluate_dataset(seen)});
    if (data.test.empty()) continue;
    const MetricsReport test = evaluate_model(model, data.test, cfg);
    emit(result, {epoch, "test", test});
    result.final_test = test;
    if (!have_best || test.f1[2] > result.best_test.f1[2]) {
      have_best = true;
      result.best_epoch = epoch;
      result.best_test = test;
      result.best_values = flat_values(model.parameters());
      if (!options.output_dir.empty()) save_checkpoint(options.output_dir / "best.ckpt", model.parameters());
    }
  }
  if (!options.output_dir.empty()) save_checkpoint(options.output_dir / "last.ckpt", model.parameters());
  return result;
}

}  // namespace svtas
