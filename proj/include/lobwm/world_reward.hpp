#pragma once

#include <span>
#include <string>
#include <vector>

#include "lobwm/lob_data.hpp"
#include "lobwm/nn.hpp"
#include "lobwm/world_transition.hpp"

// Position dynamics, the exact replay reward, reward squashing for dream
// training, and the learned mid-price-change regressor.

namespace lobwm {

struct Position {
  long long value = 0;
  long long max = 1000;
};

// Clamped inventory update: buys saturate at +max, sells at -max.
Position step_position(Position po, long long signed_quantity);

// Mark-to-market PnL over one state step: (avg mid of w1 - avg mid of w0)
// times the position held over the interval. Raw windows only.
double replay_reward(const LobWindow& w0, const LobWindow& w1, const Position& po);

struct RewardBounds {
  double lo = -1.0;  // min-max bounds measured on the training split
  double hi = 1.0;
  double squash_lo = -6.0;  // min-max target range fed into the sigmoid
  double squash_hi = 6.0;
};

// sigmoid(minmax(r)); strictly monotone, bounded in (0,1). Used only inside
// dream rollouts -- replay evaluation stays in raw PnL units.
double squash_reward(double r, const RewardBounds& b);

// Bounds from the training split's per-transition mid changes, scaled by the
// position capacity in both directions.
RewardBounds compute_reward_bounds(std::span<const double> delta_mids, double po_max,
                                   double squash_lo = -6.0, double squash_hi = 6.0);

struct RewardModelConfig {
  std::size_t latent_dim = 16;
  std::size_t lstm_units = 128;
  std::size_t dense_units = 40;
  nn::TrainConfig train;

  void validate() const;
};

// LSTM(128) over the (z_t, z_{t+1}) pair, dense(40), scalar head; predicts
// the mid change, multiplied by the position outside the network.
class RewardModel {
public:
  explicit RewardModel(const RewardModelConfig& cfg);

  const RewardModelConfig& config() const { return cfg_; }

  double predict_delta(std::span<const double> z_t, std::span<const double> z_next);
  double predict_reward(std::span<const double> z_t, std::span<const double> z_next,
                        const Position& po) {
    return predict_delta(z_t, z_next) * static_cast<double>(po.value);
  }

  nn::FitResult train(const std::vector<nn::Sample>& train_set,
                      const std::vector<nn::Sample>& val_set);

  nn::Network& net() { return net_; }
  void save(const std::string& path, const RewardBounds& bounds) const;

private:
  RewardModelConfig cfg_;
  nn::Network net_;
};

struct LoadedRewardModel {
  RewardModel model;
  RewardBounds bounds;
};
LoadedRewardModel load_reward_model(const std::string& path);

// (z_t, z_next) pair -> delta_mid regression rows.
std::vector<nn::Sample> build_reward_samples(std::span<const LatentTransition> rows);

}  // namespace lobwm
