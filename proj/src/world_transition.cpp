#include "lobwm/world_transition.hpp"

#include <algorithm>
#include <cmath>

#include "lobwm/common.hpp"

namespace lobwm {

ContextEmbedding ContextEmbedding::make(std::size_t dim, std::uint64_t seed) {
  ContextEmbedding e;
  e.dim = dim;
  e.weights.resize(dim * kPrintFeatures);
  Rng rng(seed);
  const double a = 1.0 / std::sqrt(static_cast<double>(kPrintFeatures));
  for (double& w : e.weights) w = rng.uniform(-a, a);
  return e;
}

std::vector<double> ContextEmbedding::embed(const TradeContext& ctx,
                                            std::int64_t window_first_tick,
                                            std::size_t window_ticks) const {
  std::vector<double> out(dim, 0.0);
  const std::size_t real = ctx.real_count();
  if (real == 0) return out;
  const double span = window_ticks > 1 ? static_cast<double>(window_ticks - 1) : 1.0;
  double feat[kPrintFeatures];
  for (std::size_t i = 0; i < ctx.slots.size(); ++i) {
    if (!ctx.mask[i]) continue;
    const TradePrint& t = ctx.slots[i];
    const double dir = static_cast<double>(t.direction);
    const double qn = normalize_quantity(t.quantity).value;
    const double pos =
        std::clamp(static_cast<double>(t.tick - window_first_tick) / span, 0.0, 1.0);
    feat[0] = dir;
    feat[1] = qn;
    feat[2] = pos;
    feat[3] = dir * qn;
    for (std::size_t r = 0; r < dim; ++r) {
      double acc = 0.0;
      for (std::size_t c = 0; c < kPrintFeatures; ++c) acc += weights[r * kPrintFeatures + c] * feat[c];
      out[r] += acc;
    }
  }
  const double inv = 1.0 / static_cast<double>(real);
  for (double& v : out) v *= inv;
  return out;
}

double normalize_action(double signed_quantity, double max_quantity) {
  return signed_quantity / max_quantity;
}

void TransitionConfig::validate() const {
  if (latent_dim == 0 || seq_len == 0 || hidden == 0 || components == 0)
    throw ConfigError("transition: dims must be positive");
  train.validate();
}

std::vector<nn::Sample> build_transition_sequences(std::span<const LatentTransition> rows,
                                                   const TransitionConfig& cfg) {
  std::vector<nn::Sample> samples;
  if (rows.size() < cfg.seq_len) return samples;
  for (std::size_t start = 0; start + cfg.seq_len <= rows.size(); ++start) {
    Tensor input = Tensor::zeros({cfg.seq_len, cfg.input_dim()});
    for (std::size_t i = 0; i < cfg.seq_len; ++i) {
      const LatentTransition& r = rows[start + i];
      if (r.z_state.size() != cfg.latent_dim || r.context.size() != cfg.context_dim)
        throw ValidationError("transition: latent row dims do not match config");
      std::size_t c = 0;
      for (double v : r.z_state) input.at(i, c++) = v;
      input.at(i, c++) = r.action_norm;
      for (double v : r.context) input.at(i, c++) = v;
    }
    const LatentTransition& last = rows[start + cfg.seq_len - 1];
    samples.push_back({std::move(input), Tensor::vec(last.z_next)});
  }
  return samples;
}

TransitionModel::TransitionModel(const TransitionConfig& cfg)
    : cfg_(cfg),
      embedding_(ContextEmbedding::make(cfg.context_dim, cfg.embed_seed)),
      net_(nn::json::array({
          nn::lstm(cfg.input_dim(), cfg.hidden, true),
          nn::dense(cfg.hidden, cfg.head_dim()),
          nn::mdn_head(cfg.components, cfg.latent_dim),
      })) {
  cfg_.validate();
  net_.init_params(cfg_.train.seed);
}

Tensor TransitionModel::encode_history(std::span<const TransitionStep> history,
                                       const TransitionConfig& cfg) {
  if (history.size() != cfg.seq_len)
    throw ValidationError("transition: history must hold exactly " + std::to_string(cfg.seq_len) +
                          " steps, got " + std::to_string(history.size()));
  Tensor input = Tensor::zeros({cfg.seq_len, cfg.input_dim()});
  for (std::size_t i = 0; i < history.size(); ++i) {
    const TransitionStep& s = history[i];
    if (s.latent.size() != cfg.latent_dim || s.context.size() != cfg.context_dim)
      throw ValidationError("transition: step dims do not match config");
    std::size_t c = 0;
    for (double v : s.latent) input.at(i, c++) = v;
    input.at(i, c++) = s.action_norm;
    for (double v : s.context) input.at(i, c++) = v;
  }
  return input;
}

MixtureParams TransitionModel::predict(std::span<const TransitionStep> history) {
  const Tensor out = net_.forward(encode_history(history, cfg_));
  return MixtureParams::from_head_output(out.v, cfg_.components, cfg_.latent_dim);
}

std::vector<double> TransitionModel::sample_next(std::span<const TransitionStep> history,
                                                 double temperature, Rng& rng) {
  return sample(predict(history), temperature, rng);
}

nn::FitResult TransitionModel::train(const std::vector<nn::Sample>& train_set,
                                     const std::vector<nn::Sample>& val_set) {
  nn::MdnNllLoss loss(cfg_.components, cfg_.latent_dim);
  return nn::fit(net_, train_set, val_set, loss, cfg_.train);
}

void TransitionModel::save(const std::string& path) const {
  nn::json meta;
  meta["model"] = "transition";
  meta["latent_dim"] = cfg_.latent_dim;
  meta["seq_len"] = cfg_.seq_len;
  meta["hidden"] = cfg_.hidden;
  meta["components"] = cfg_.components;
  meta["context_dim"] = cfg_.context_dim;
  meta["embed_seed"] = cfg_.embed_seed;
  nn::save_network(net_, path, meta);
}

TransitionModel TransitionModel::load(const std::string& path) {
  auto loaded = nn::load_network(path);
  TransitionConfig cfg;
  cfg.latent_dim = loaded.meta.at("latent_dim").get<std::size_t>();
  cfg.seq_len = loaded.meta.at("seq_len").get<std::size_t>();
  cfg.hidden = loaded.meta.at("hidden").get<std::size_t>();
  cfg.components = loaded.meta.at("components").get<std::size_t>();
  cfg.context_dim = loaded.meta.at("context_dim").get<std::size_t>();
  cfg.embed_seed = loaded.meta.at("embed_seed").get<std::uint64_t>();
  TransitionModel model(cfg);
  model.net_ = std::move(loaded.net);
  return model;
}

}  // namespace lobwm
