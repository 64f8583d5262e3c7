#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lobwm/agents.hpp"
#include "lobwm/eval.hpp"
#include "lobwm/latent_ae.hpp"
#include "lobwm/lob_data.hpp"
#include "lobwm/strategies.hpp"
#include "lobwm/world_reward.hpp"
#include "lobwm/world_transition.hpp"

// Declarative run configuration and the staged pipeline: generate data,
// train the world model, train an agent inside it, evaluate everything on
// held-out replay. Stages are cached by content hash and skipped when
// nothing upstream changed.

namespace lobwm {

struct RunConfig {
  std::uint64_t seed = 1;
  long long po_max = 1000;
  ActionSpace actions;  // 21 actions, step 100
  double fee_rate = 0.02;

  // data
  std::size_t window_ticks = 40;       // W
  std::size_t context_capacity = 10;   // U
  std::size_t levels = 3;              // L
  std::size_t train_days = 3;
  std::size_t test_days = 2;
  std::size_t ticks_per_day = 2400;
  std::string regime = "ascending";  // ascending|descending|oscillating|mixed
  SynthParams synth;

  // autoencoder
  std::size_t latent_dim = 16;  // m
  std::size_t ae_kernel = 5;
  std::size_t ae_channels0 = 16, ae_channels1 = 32, ae_channels2 = 64;
  nn::TrainConfig ae_train;

  // transition model
  std::size_t seq_len = 10;       // N
  std::size_t rnn_units = 128;
  std::size_t components = 5;     // K
  std::size_t context_dim = 8;
  nn::TrainConfig transition_train;

  // reward model
  std::size_t reward_lstm = 128;
  std::size_t reward_dense = 40;
  double squash_lo = -6.0, squash_hi = 6.0;
  nn::TrainConfig reward_train;

  // agent
  AgentKind agent_kind = AgentKind::pg;
  double gamma = 0.99;
  std::size_t horizon = 500;  // H
  std::size_t agent_hidden = 128;
  std::size_t agent_iterations = 40;
  std::size_t episodes_per_update = 8;
  double agent_lr = 1e-3;
  double temperature = 1.0;

  // classifier
  std::size_t classifier_dense = 64;
  nn::TrainConfig classifier_train;

  // evaluation
  std::size_t eval_max_states = 300;
  double momentum_alpha = 0.1;  // one synthetic price tick
  std::size_t regime_segment_ticks = 500;
  double regime_slope_threshold = 2.0;
  long long aggressive_quantity = 1000;
  long long conservative_quantity = 100;
  std::size_t compare_days = 5;
  std::size_t dream_replay_horizon = 40;

  double val_fraction = 0.2;

  static RunConfig from_json(const nlohmann::json& j);       // strict: unknown keys rejected
  static RunConfig from_file(const std::string& path);
  nlohmann::json to_json() const;                            // fully resolved
  void validate() const;

  AeConfig ae_config() const;
  TransitionConfig transition_config() const;
  RewardModelConfig reward_config() const;
  ClassifierConfig classifier_config() const;
  AgentConfig agent_config() const;
  EvalConfig eval_config() const;
  std::uint64_t stage_seed(const std::string& stage) const;
};

struct StageResult {
  std::string name;
  bool skipped = false;
  std::string hash;
};

class Pipeline {
public:
  Pipeline(RunConfig cfg, std::string out_dir);

  StageResult gen_data();
  StageResult train_ae();
  StageResult encode();
  StageResult train_transition();
  StageResult train_reward();
  StageResult train_agent_stage(std::optional<AgentKind> kind_override = std::nullopt);
  StageResult train_classifier();
  StageResult evaluate();
  StageResult compare();
  std::vector<StageResult> run_all();

  // benchmark runners (used by the run-benchmark subcommand)
  void run_benchmark(const std::string& strategy);

  const RunConfig& config() const { return cfg_; }
  std::string out_dir() const { return out_; }
  std::string data_manifest_path() const;
  std::string checkpoint_path(const std::string& name) const;
  std::string report_path(const std::string& name) const;
  nlohmann::json manifest() const { return manifest_; }

private:
  struct StageIo;
  StageResult run_stage(const std::string& name, const nlohmann::json& config_subset,
                        const std::vector<std::string>& dep_stages,
                        const std::vector<std::string>& outputs,
                        const std::function<void()>& body);
  void require_stage(const std::string& stage) const;  // dependency check
  void load_manifest();
  void save_manifest() const;

  RunConfig cfg_;
  std::string out_;
  nlohmann::json manifest_;
};

// Latent-transition table persistence (the `encode` stage artifact).
struct EncodedDay {
  std::string day_id;
  std::vector<LatentTransition> rows;
};
void write_latent_csv(const std::vector<EncodedDay>& days, std::size_t latent_dim,
                      std::size_t context_dim, const std::string& path);
std::vector<EncodedDay> read_latent_csv(const std::string& path, std::size_t latent_dim,
                                        std::size_t context_dim);

}  // namespace lobwm
