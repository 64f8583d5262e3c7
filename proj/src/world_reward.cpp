#include "lobwm/world_reward.hpp"

#include <algorithm>
#include <cmath>

#include "lobwm/common.hpp"

namespace lobwm {

Position step_position(Position po, long long signed_quantity) {
  if (po.max <= 0) throw ValidationError("position: capacity must be positive");
  Position out = po;
  const long long q = std::llabs(signed_quantity);
  if (signed_quantity > 0) out.value = std::min(po.value + q, po.max);
  else if (signed_quantity < 0) out.value = std::max(po.value - q, -po.max);
  return out;
}

double replay_reward(const LobWindow& w0, const LobWindow& w1, const Position& po) {
  return (avg_mid(w1) - avg_mid(w0)) * static_cast<double>(po.value);
}

double squash_reward(double r, const RewardBounds& b) {
  if (!(b.hi > b.lo)) throw ValidationError("reward bounds: hi must exceed lo");
  const double unit = (r - b.lo) / (b.hi - b.lo);
  const double x = b.squash_lo + unit * (b.squash_hi - b.squash_lo);
  return 1.0 / (1.0 + std::exp(-x));
}

RewardBounds compute_reward_bounds(std::span<const double> delta_mids, double po_max,
                                   double squash_lo, double squash_hi) {
  if (delta_mids.empty()) throw ValidationError("reward bounds: no training rewards");
  if (!(po_max > 0.0)) throw ValidationError("reward bounds: po_max must be positive");
  RewardBounds b;
  b.squash_lo = squash_lo;
  b.squash_hi = squash_hi;
  double lo = 0.0, hi = 0.0;
  for (double d : delta_mids) {
    lo = std::min({lo, d * po_max, -d * po_max});
    hi = std::max({hi, d * po_max, -d * po_max});
  }
  if (hi == lo) hi = lo + 1.0;  // degenerate flat training split
  b.lo = lo;
  b.hi = hi;
  return b;
}

void RewardModelConfig::validate() const {
  if (latent_dim == 0 || lstm_units == 0 || dense_units == 0)
    throw ConfigError("reward model: dims must be positive");
  train.validate();
}

RewardModel::RewardModel(const RewardModelConfig& cfg)
    : cfg_(cfg),
      net_(nn::json::array({
          nn::lstm(cfg.latent_dim, cfg.lstm_units, true),
          nn::dense(cfg.lstm_units, cfg.dense_units),
          nn::tanh_act(),
          nn::dense(cfg.dense_units, 1),
      })) {
  cfg_.validate();
  net_.init_params(cfg_.train.seed);
}

double RewardModel::predict_delta(std::span<const double> z_t, std::span<const double> z_next) {
  if (z_t.size() != cfg_.latent_dim || z_next.size() != cfg_.latent_dim)
    throw ValidationError("reward model: latent size mismatch");
  Tensor input = Tensor::zeros({2, cfg_.latent_dim});
  for (std::size_t d = 0; d < cfg_.latent_dim; ++d) {
    input.at(0, d) = z_t[d];
    input.at(1, d) = z_next[d];
  }
  return net_.forward(input).v.at(0);
}

nn::FitResult RewardModel::train(const std::vector<nn::Sample>& train_set,
                                 const std::vector<nn::Sample>& val_set) {
  nn::MseLoss loss;
  return nn::fit(net_, train_set, val_set, loss, cfg_.train);
}

void RewardModel::save(const std::string& path, const RewardBounds& bounds) const {
  nn::json meta;
  meta["model"] = "reward";
  meta["latent_dim"] = cfg_.latent_dim;
  meta["lstm_units"] = cfg_.lstm_units;
  meta["dense_units"] = cfg_.dense_units;
  meta["bounds"] = {{"lo", bounds.lo},
                    {"hi", bounds.hi},
                    {"squash_lo", bounds.squash_lo},
                    {"squash_hi", bounds.squash_hi}};
  nn::save_network(net_, path, meta);
}

LoadedRewardModel load_reward_model(const std::string& path) {
  auto loaded = nn::load_network(path);
  RewardModelConfig cfg;
  cfg.latent_dim = loaded.meta.at("latent_dim").get<std::size_t>();
  cfg.lstm_units = loaded.meta.at("lstm_units").get<std::size_t>();
  cfg.dense_units = loaded.meta.at("dense_units").get<std::size_t>();
  RewardModel model(cfg);
  model.net() = std::move(loaded.net);
  RewardBounds b;
  const auto& jb = loaded.meta.at("bounds");
  b.lo = jb.at("lo").get<double>();
  b.hi = jb.at("hi").get<double>();
  b.squash_lo = jb.at("squash_lo").get<double>();
  b.squash_hi = jb.at("squash_hi").get<double>();
  return {std::move(model), b};
}

std::vector<nn::Sample> build_reward_samples(std::span<const LatentTransition> rows) {
  std::vector<nn::Sample> samples;
  samples.reserve(rows.size());
  for (const auto& r : rows) {
    const std::size_t m = r.z_state.size();
    Tensor input = Tensor::zeros({2, m});
    for (std::size_t d = 0; d < m; ++d) {
      input.at(0, d) = r.z_state[d];
      input.at(1, d) = r.z_next[d];
    }
    samples.push_back({std::move(input), Tensor({1}, {r.delta_mid})});
  }
  return samples;
}

}  // namespace lobwm
