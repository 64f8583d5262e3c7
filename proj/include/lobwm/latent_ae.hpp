#pragma once

#include <span>
#include <string>
#include <vector>

#include "lobwm/lob_data.hpp"
#include "lobwm/nn.hpp"

// Convolutional autoencoder compressing a normalized W x 4L book window to
// an m-dimensional latent state. The encoder half feeds every downstream
// model; the decoder exists for training and reconstruction checks.

namespace lobwm {

struct AeConfig {
  std::size_t window = 40;      // W ticks per state; three stride-2 stages need W % 8 == 0
  std::size_t features = 12;    // 4L columns
  std::size_t latent_dim = 16;  // m
  std::size_t channels0 = 16;
  std::size_t channels1 = 32;
  std::size_t channels2 = 64;
  std::size_t kernel = 5;
  nn::TrainConfig train;

  void validate() const;
  std::size_t bottleneck_flat() const { return (window / 8) * channels2; }
};

class Autoencoder {
public:
  explicit Autoencoder(const AeConfig& cfg);

  const AeConfig& config() const { return cfg_; }

  // Requires a normalized window of the configured shape.
  std::vector<double> encode(const LobWindow& window);
  std::vector<double> encode_features(const Tensor& features);

  // Latent -> reconstructed window features, every element in [0,1].
  Tensor decode(std::span<const double> z);
  Tensor reconstruct(const Tensor& features);

  nn::FitResult train(const std::vector<nn::Sample>& train_set,
                      const std::vector<nn::Sample>& val_set);
  double mean_reconstruction_error(const std::vector<nn::Sample>& set);

  nn::Network& net() { return net_; }
  std::size_t encoder_layers() const { return encoder_layers_; }
  void save(const std::string& path) const;
  static Autoencoder load(const std::string& path);

private:
  AeConfig cfg_;
  std::size_t encoder_layers_ = 0;
  nn::Network net_;
};

// Consecutive raw windows of a day, stride-W (back to back, no overlap).
std::vector<LobWindow> windows_of_day(const DayStream& day, std::size_t window_ticks);

// Normalized feature tensors as (input, target) pairs for AE training.
std::vector<nn::Sample> build_window_samples(const Dataset& ds, Split split,
                                             std::size_t window_ticks);

}  // namespace lobwm
