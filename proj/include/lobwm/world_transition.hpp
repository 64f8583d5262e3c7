#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lobwm/lob_data.hpp"
#include "lobwm/mixture.hpp"
#include "lobwm/nn.hpp"

// Sequence-to-sequence recurrent mixture-density transition model over
// latent states, plus the shared state-encoding pieces (trade-context
// embedding, action normalization) used by the transition model, the
// agents and the replay evaluator alike.

namespace lobwm {

// Fixed (seeded, untrained) linear map pooling a TradeContext into a small
// dense vector. Per-print features: direction, normalized quantity, position
// of the print inside the window, signed quantity.
struct ContextEmbedding {
  static constexpr std::size_t kPrintFeatures = 4;
  std::size_t dim = 8;
  std::vector<double> weights;  // dim x kPrintFeatures

  static ContextEmbedding make(std::size_t dim, std::uint64_t seed);
  std::vector<double> embed(const TradeContext& ctx, std::int64_t window_first_tick,
                            std::size_t window_ticks) const;
};

// Signed trade quantity scaled to [-1, 1] by the maximum action quantity.
double normalize_action(double signed_quantity, double max_quantity = 1000.0);

// One RNN input step: latent state, the action taken there, trade context.
struct TransitionStep {
  std::vector<double> latent;
  double action_norm = 0.0;
  std::vector<double> context;
};

struct TransitionConfig {
  std::size_t latent_dim = 16;   // m
  std::size_t seq_len = 10;      // N input steps
  std::size_t hidden = 128;      // RNN units
  std::size_t components = 5;    // K mixture components
  std::size_t context_dim = 8;
  std::uint64_t embed_seed = 0xC0FFEEull;
  nn::TrainConfig train;

  std::size_t input_dim() const { return latent_dim + 1 + context_dim; }
  std::size_t head_dim() const { return components + 2 * components * latent_dim; }
  void validate() const;
};

// A historical transition projected into latent space; the training table
// row for both the transition and reward models.
struct LatentTransition {
  std::vector<double> z_state;
  std::vector<double> z_next;
  double action_norm = 0.0;
  std::vector<double> context;  // embedded, context_dim wide
  double delta_mid = 0.0;
};

// Sliding sequences of seq_len consecutive rows; the target is the last
// row's next latent.
std::vector<nn::Sample> build_transition_sequences(std::span<const LatentTransition> rows,
                                                   const TransitionConfig& cfg);

class TransitionModel {
public:
  explicit TransitionModel(const TransitionConfig& cfg);

  const TransitionConfig& config() const { return cfg_; }
  const ContextEmbedding& embedding() const { return embedding_; }

  // history must hold exactly seq_len steps.
  MixtureParams predict(std::span<const TransitionStep> history);
  std::vector<double> sample_next(std::span<const TransitionStep> history, double temperature,
                                  Rng& rng);

  nn::FitResult train(const std::vector<nn::Sample>& train_set,
                      const std::vector<nn::Sample>& val_set);

  static Tensor encode_history(std::span<const TransitionStep> history,
                               const TransitionConfig& cfg);

  nn::Network& net() { return net_; }
  void save(const std::string& path) const;
  static TransitionModel load(const std::string& path);

private:
  TransitionConfig cfg_;
  ContextEmbedding embedding_;
  nn::Network net_;
};

}  // namespace lobwm
