#pragma once

#include <span>
#include <vector>

namespace svtas {

struct RewardConfig {
  double beta1 = 4.0;   // base, > 1 for a reward increasing in dice
  double beta2 = -1.0;  // offset
  double eps = 1e-8;    // denominator guard
  int class_start = 0;  // first class in the dice sum (0 or 1); the divisor is always C

  void validate() const;
};

struct RewardRecord {
  std::vector<double> dice;  // per class, each in [0, 1]
  double mean_dice = 0.0;
  double reward = 0.0;
};

// Soft dice per class: 2 sum_i y_ic p_ic / (sum_i (y_ic + p_ic) + eps), and
// their sum over classes [class_start, C) divided by C. probs is [n, C].
RewardRecord soft_dice(std::span<const double> probs, std::span<const int> labels, std::size_t classes,
                       int class_start = 0, double eps = 1e-8);

// beta1 ^ mean_dice + beta2
double reward_from_dice(double mean_dice, const RewardConfig& cfg);

RewardRecord clip_reward(std::span<const double> probs, std::span<const int> labels, std::size_t classes,
                         const RewardConfig& cfg);

// Undiscounted sum; throws on an empty episode.
double episode_return(std::span<const double> rewards);

}  // namespace svtas
