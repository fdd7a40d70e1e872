#include "svtas/reward.hpp"

#include <cmath>
#include <string>

#include "svtas/error.hpp"

namespace svtas {

void RewardConfig::validate() const {
  if (!(beta1 > 1.0)) throw ConfigError("reward: beta1 must exceed 1");
  if (!(eps > 0.0)) throw ConfigError("reward: eps must be positive");
  if (class_start != 0 && class_start != 1) throw ConfigError("reward: class_start must be 0 or 1");
}

RewardRecord soft_dice(std::span<const double> probs, std::span<const int> labels, std::size_t classes,
                       int class_start, double eps) {
  const std::size_t n = labels.size();
  if (n == 0) throw DataError("soft_dice: empty window");
  if (probs.size() != n * classes)
    throw ShapeError("soft_dice: " + std::to_string(probs.size()) + " probabilities for " + std::to_string(n) +
                     " frames of " + std::to_string(classes) + " classes");
  std::vector<double> inter(classes, 0.0), total(classes, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || std::size_t(labels[i]) >= classes)
      throw DataError("soft_dice: label " + std::to_string(labels[i]) + " outside [0," + std::to_string(classes) + ")");
    const std::size_t y = std::size_t(labels[i]);
    for (std::size_t c = 0; c < classes; ++c) total[c] += probs[i * classes + c];
    inter[y] += probs[i * classes + y];
    total[y] += 1.0;
  }
  RewardRecord rec;
  rec.dice.resize(classes);
  double acc = 0.0;
  for (std::size_t c = 0; c < classes; ++c) {
    rec.dice[c] = 2.0 * inter[c] / (total[c] + eps);
    if (int(c) >= class_start) acc += rec.dice[c];
  }
  rec.mean_dice = acc / double(classes);
  return rec;
}

double reward_from_dice(double mean_dice, const RewardConfig& cfg) { return std::pow(cfg.beta1, mean_dice) + cfg.beta2; }

RewardRecord clip_reward(std::span<const double> probs, std::span<const int> labels, std::size_t classes,
                         const RewardConfig& cfg) {
  RewardRecord rec = soft_dice(probs, labels, classes, cfg.class_start, cfg.eps);
  rec.reward = reward_from_dice(rec.mean_dice, cfg);
  return rec;
}

double episode_return(std::span<const double> rewards) {
  if (rewards.empty()) throw DataError("episode_return: empty episode");
  double s = 0.0;
  for (double r : rewards) s += r;
  return s;
}

}  // namespace svtas
