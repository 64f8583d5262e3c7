#include "lobwm/latent_ae.hpp"

#include "lobwm/common.hpp"

namespace lobwm {

void AeConfig::validate() const {
  if (window == 0 || window % 8 != 0)
    throw ConfigError("ae: window must be a positive multiple of 8");
  if (features == 0 || latent_dim == 0) throw ConfigError("ae: dims must be positive");
  if (kernel % 2 == 0) throw ConfigError("ae: kernel must be odd");
  train.validate();
}

namespace {

nn::json ae_spec(const AeConfig& c) {
  const std::size_t t_bottom = c.window / 8;
  return nn::json::array({
      // encoder
      nn::conv1d(c.features, c.channels0, c.kernel), nn::relu(), nn::downsample2(),
      nn::conv1d(c.channels0, c.channels1, c.kernel), nn::relu(), nn::downsample2(),
      nn::conv1d(c.channels1, c.channels2, c.kernel), nn::relu(), nn::downsample2(),
      nn::flatten(), nn::dense(t_bottom * c.channels2, c.latent_dim),
      // decoder
      nn::dense(c.latent_dim, t_bottom * c.channels2), nn::relu(),
      nn::reshape(t_bottom, c.channels2),
      nn::upsample2(), nn::conv1d(c.channels2, c.channels1, c.kernel), nn::relu(),
      nn::upsample2(), nn::conv1d(c.channels1, c.channels0, c.kernel), nn::relu(),
      nn::upsample2(), nn::conv1d(c.channels0, c.features, c.kernel), nn::sigmoid(),
  });
}

constexpr std::size_t kEncoderLayers = 11;  // conv/relu/down x3, flatten, dense

}  // namespace

Autoencoder::Autoencoder(const AeConfig& cfg)
    : cfg_(cfg), encoder_layers_(kEncoderLayers), net_(ae_spec(cfg)) {
  cfg_.validate();
  net_.init_params(cfg_.train.seed);
}

std::vector<double> Autoencoder::encode(const LobWindow& window) {
  if (!window.normalized) throw ValidationError("encode: window must be normalized first");
  return encode_features(window.features());
}

std::vector<double> Autoencoder::encode_features(const Tensor& features) {
  if (features.rank() != 2 || features.shape[0] != cfg_.window ||
      features.shape[1] != cfg_.features)
    throw ValidationError("encode: expected {" + std::to_string(cfg_.window) + "," +
                          std::to_string(cfg_.features) + "}, got " + features.shape_str());
  return net_.forward_range(features, 0, encoder_layers_).v;
}

Tensor Autoencoder::decode(std::span<const double> z) {
  if (z.size() != cfg_.latent_dim) throw ValidationError("decode: latent size mismatch");
  return net_.forward_range(Tensor::vec({z.begin(), z.end()}), encoder_layers_,
                            net_.layer_count());
}

Tensor Autoencoder::reconstruct(const Tensor& features) {
  return decode(encode_features(features));
}

nn::FitResult Autoencoder::train(const std::vector<nn::Sample>& train_set,
                                 const std::vector<nn::Sample>& val_set) {
  nn::MseLoss loss;
  return nn::fit(net_, train_set, val_set, loss, cfg_.train);
}

double Autoencoder::mean_reconstruction_error(const std::vector<nn::Sample>& set) {
  if (set.empty()) throw ValidationError("reconstruction error: empty set");
  nn::MseLoss loss;
  double total = 0.0;
  for (const auto& [input, target] : set) total += loss.value(net_.forward(input), target);
  return total / static_cast<double>(set.size());
}

void Autoencoder::save(const std::string& path) const {
  nn::json meta;
  meta["model"] = "autoencoder";
  meta["window"] = cfg_.window;
  meta["features"] = cfg_.features;
  meta["latent_dim"] = cfg_.latent_dim;
  meta["channels"] = {cfg_.channels0, cfg_.channels1, cfg_.channels2};
  meta["kernel"] = cfg_.kernel;
  nn::save_network(net_, path, meta);
}

Autoencoder Autoencoder::load(const std::string& path) {
  auto loaded = nn::load_network(path);
  AeConfig cfg;
  cfg.window = loaded.meta.at("window").get<std::size_t>();
  cfg.features = loaded.meta.at("features").get<std::size_t>();
  cfg.latent_dim = loaded.meta.at("latent_dim").get<std::size_t>();
  const auto ch = loaded.meta.at("channels");
  cfg.channels0 = ch.at(0).get<std::size_t>();
  cfg.channels1 = ch.at(1).get<std::size_t>();
  cfg.channels2 = ch.at(2).get<std::size_t>();
  cfg.kernel = loaded.meta.at("kernel").get<std::size_t>();
  Autoencoder ae(cfg);
  ae.net_ = std::move(loaded.net);
  return ae;
}

std::vector<LobWindow> windows_of_day(const DayStream& day, std::size_t window_ticks) {
  std::vector<LobWindow> out;
  const std::size_t n = day.snapshots.size() / window_ticks;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    LobWindow w;
    w.snapshots.assign(day.snapshots.begin() + i * window_ticks,
                       day.snapshots.begin() + (i + 1) * window_ticks);
    out.push_back(std::move(w));
  }
  return out;
}

std::vector<nn::Sample> build_window_samples(const Dataset& ds, Split split,
                                             std::size_t window_ticks) {
  std::vector<nn::Sample> samples;
  for (std::size_t di : ds.day_indices(split)) {
    for (const auto& w : windows_of_day(ds.days[di], window_ticks)) {
      Tensor f = normalize_window(w).features();
      samples.push_back({f, f});
    }
  }
  return samples;
}

}  // namespace lobwm
