#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "svtas/config.hpp"
#include "svtas/metrics.hpp"
#include "svtas/model.hpp"
#include "svtas/optim.hpp"
#include "svtas/reward.hpp"

namespace svtas {

struct ClipRecord {
  Clip clip;
  std::vector<double> logits;  // k x C forward values
  std::vector<double> probs;   // k x C
  std::vector<int> prediction; // window_length labels
  RewardRecord reward;
  double cross_entropy = 0.0;
};

struct Episode {
  std::string id;
  std::vector<ClipRecord> clips;
  std::vector<int> prediction;  // length T
  double episode_return = 0.0;
  double loss = 0.0;            // objective value that was differentiated (0 for pure rollouts)
};

// CE over the k sampled positions against the labels at those rows,
// normalized by k*C (per_class) or k (mean), probabilities floored at prob_floor.
Tensor clip_cross_entropy(const ActionLogits& logits, std::span<const int> labels, CeNormalization norm,
                          double prob_floor = 1e-12);

// Reward of one clip: dice of the per-position probabilities expanded to the
// clip's raw-frame window against the window labels.
RewardRecord clip_reward(const ActionLogits& logits, const FeatureStream& stream, const Clip& clip,
                         const ClipSpec& spec, const RewardConfig& cfg);

// Streams the whole video clip by clip without recording gradients.
Episode rollout(const Model& model, const FeatureStream& stream, const TrainerConfig& cfg);

// (1/q) * sum_j weights[j] * CE_j over a fresh rollout that records the graph.
// `record`, when given, receives the forward values of this pass. With
// `frozen_memory`, clip j reads frozen_memory[j] instead of the carried bank
// (the memory is a constant in both cases; this pins its value).
Tensor weighted_episode_loss(const Model& model, const FeatureStream& stream, std::span<const double> weights,
                             const TrainerConfig& cfg, Episode* record = nullptr,
                             const std::vector<MemoryBank>* frozen_memory = nullptr);

// The bank each clip reads during a no-grad rollout (entry j feeds clip j).
std::vector<MemoryBank> episode_memories(const Model& model, const FeatureStream& stream);

// One clip-level update per clip with loss CE_j.
Episode supervised_episode(Model& model, AdamW& opt, const FeatureStream& stream, const TrainerConfig& cfg);

// Monte-Carlo REINFORCE: pass 1 collects r_j without a graph, pass 2
// differentiates (1/q) sum r_j CE_j; one update per video.
Episode mc_train_episode(Model& model, AdamW& opt, const FeatureStream& stream, const TrainerConfig& cfg);

// TD actor-critic with the reward as the TD error: per clip, loss r_j CE_j
// and an immediate update; the memory carries on to the next clip.
Episode td_train_step(Model& model, AdamW& opt, const FeatureStream& stream, const TrainerConfig& cfg);

Episode train_episode(Model& model, AdamW& opt, const FeatureStream& stream, const TrainerConfig& cfg);

struct Dataset {
  std::vector<FeatureStream> train;
  std::vector<FeatureStream> test;
  std::vector<std::string> class_names;
  std::size_t classes() const { return class_names.size(); }
  std::size_t width() const;
};

struct MetricsRow {
  std::size_t epoch = 0;
  std::string split;
  MetricsReport report;
};

std::vector<EpisodeLabels> episode_labels(const std::vector<Episode>& episodes,
                                          const std::vector<FeatureStream>& streams);
MetricsReport evaluate_model(const Model& model, const std::vector<FeatureStream>& streams,
                             const TrainerConfig& cfg);

std::string metrics_csv_header();
std::string metrics_csv_row(const MetricsRow& row);

struct TrainingResult {
  std::vector<MetricsRow> log;
  std::size_t best_epoch = 0;
  MetricsReport best_test;
  MetricsReport final_test;
  std::vector<double> best_values;  // flattened parameters of the best epoch (name order)
};

struct TrainingOptions {
  // When non-empty: metrics.csv, last.ckpt and best.ckpt go here.
  std::filesystem::path output_dir;
  std::function<void(const MetricsRow&)> on_row;
};

// Seeded shuffle per epoch, one train pass in cfg.mode, then test-split
// evaluation; keeps the parameters with the best test F1@0.5.
TrainingResult run_training(Model& model, const Dataset& data, const TrainerConfig& cfg,
                            const TrainingOptions& options = {});

}  // namespace svtas
