#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "lobwm/nn.hpp"
#include "lobwm/world_reward.hpp"
#include "lobwm/world_transition.hpp"

// RL agents trained entirely inside the world model: Double DQN, REINFORCE
// policy gradient, and advantage actor-critic over a discrete action grid.

namespace lobwm {

// --------------------------------------------------------------- actions

// Symmetric quantity grid: index i maps to (i - (count-1)/2) * step units.
// The default 21 actions cover -1000..+1000 in steps of 100.
struct ActionSpace {
  std::size_t count = 21;
  double step = 100.0;

  long long quantity(std::size_t index) const;
  std::size_t index_of(long long quantity) const;
  std::size_t no_trade_index() const { return (count - 1) / 2; }
  double max_quantity() const {
    return static_cast<double>((count - 1) / 2) * step;
  }
  void validate() const;  // count must be odd and > 1
};

// ----------------------------------------------------------- environment

class Env {
public:
  struct Step {
    std::vector<double> state;
    double reward = 0.0;
    bool done = false;
  };

  virtual ~Env() = default;
  virtual std::size_t state_dim() const = 0;
  virtual std::size_t n_actions() const = 0;
  virtual std::size_t horizon() const = 0;
  virtual std::vector<double> reset(Rng& rng) = 0;
  virtual Step step(std::size_t action, Rng& rng) = 0;
};

struct EpisodeTrace {
  std::vector<std::vector<double>> states;  // s_0 .. s_{T-1}
  std::vector<std::size_t> actions;
  std::vector<double> rewards;
  std::vector<double> final_state;  // s_T, for bootstrapping

  std::size_t length() const { return rewards.size(); }
};

double discounted_return(std::span<const double> rewards, double gamma);

using PolicyFn = std::function<std::size_t(std::span<const double>)>;

EpisodeTrace run_episode(Env& env, const PolicyFn& policy, Rng& rng);

// Monte-Carlo mean undiscounted return of the uniform-random policy.
double random_policy_mean_return(Env& env, std::size_t episodes, Rng& rng);

// Agent-state layout shared by dream and replay sides:
// [latent (m), context embedding, position / po_max].
std::vector<double> agent_state_vector(std::span<const double> z,
                                       std::span<const double> context_emb, const Position& po);

// -------------------------------------------------------------- dream env

struct DreamInitialState {
  std::vector<double> z;
  TradeContext context;
  std::int64_t first_tick = 0;
};

struct DreamConfig {
  std::size_t horizon = 500;  // H
  double temperature = 1.0;
  long long po_max = 1000;
  ActionSpace actions;
};

// World-model environment: alternates agent action, sampled latent
// transition and squashed predicted reward. The agent's own executed trades
// become the trade context of subsequent states.
class DreamEnv : public Env {
public:
  DreamEnv(TransitionModel& transition, RewardModel& reward, RewardBounds bounds,
           std::vector<DreamInitialState> initial_states, DreamConfig cfg,
           std::size_t window_ticks);

  std::size_t state_dim() const override;
  std::size_t n_actions() const override { return cfg_.actions.count; }
  std::size_t horizon() const override { return cfg_.horizon; }
  std::vector<double> reset(Rng& rng) override;
  Step step(std::size_t action, Rng& rng) override;

  const Position& position() const { return po_; }
  // Raw (unsquashed) predicted reward of the last step, in PnL units.
  double last_raw_reward() const { return last_raw_reward_; }

private:
  std::vector<double> observe() const;

  TransitionModel& transition_;
  RewardModel& reward_;
  RewardBounds bounds_;
  std::vector<DreamInitialState> rho0_;
  DreamConfig cfg_;
  std::size_t window_ticks_;

  std::deque<TransitionStep> history_;
  std::vector<double> z_;
  TradeContext context_;
  std::vector<double> context_emb_;
  Position po_;
  std::int64_t tick_base_ = 0;
  std::size_t steps_done_ = 0;
  double last_raw_reward_ = 0.0;
};

// ------------------------------------------------------------------- dqn

struct DqnConfig {
  std::size_t hidden = 128;
  double gamma = 0.99;
  double lr = 1e-3;
  std::size_t batch_size = 32;
  std::size_t buffer_capacity = 20000;
  std::size_t target_copy_period = 500;  // updates between parameter copies
  double eps_start = 1.0;
  double eps_end = 0.05;
  std::size_t eps_decay_steps = 5000;
  std::size_t warmup = 200;  // buffer size before updates begin
  double clip_norm = 5.0;
  std::uint64_t seed = 1;
};

struct DqnTransitionSample {
  std::vector<double> s;
  std::size_t a = 0;
  double r = 0.0;
  std::vector<double> s_next;
  bool terminal = false;
};

struct DqnStats {
  std::size_t online_argmax_evals = 0;  // action selection, online net
  std::size_t target_value_evals = 0;   // value evaluation, target net
  std::size_t target_copies = 0;
  std::size_t updates = 0;
  std::size_t updates_since_copy = 0;
};

class DqnAgent {
public:
  DqnAgent(std::size_t state_dim, std::size_t n_actions, const DqnConfig& cfg);

  std::vector<double> q_values(std::span<const double> s);  // online net
  std::size_t greedy_action(std::span<const double> s);
  std::size_t act(std::span<const double> s, double epsilon, Rng& rng);
  double epsilon_at(std::size_t env_step) const;

  // One gradient step of the double-DQN objective on the given batch.
  void update_batch(std::span<const DqnTransitionSample> batch);
  void copy_target();

  std::vector<double> train(Env& env, std::size_t episodes, Rng& rng);  // per-episode returns

  const DqnStats& stats() const { return stats_; }
  nn::Network& online() { return online_; }
  nn::Network& target() { return target_; }

private:
  DqnConfig cfg_;
  std::size_t n_actions_;
  nn::Network online_, target_;
  std::unique_ptr<nn::Optimizer> opt_;
  DqnStats stats_;
};

// -------------------------------------------------------------------- pg

struct PgConfig {
  std::size_t hidden = 128;
  double gamma = 0.99;
  double lr = 1e-3;
  std::size_t episodes_per_update = 8;
  bool baseline = true;  // subtract the batch-mean return
  double clip_norm = 5.0;
  std::uint64_t seed = 1;
};

class PgAgent {
public:
  PgAgent(std::size_t state_dim, std::size_t n_actions, const PgConfig& cfg);

  std::vector<double> action_probs(std::span<const double> s);
  std::size_t sample_action(std::span<const double> s, Rng& rng);
  std::size_t greedy_action(std::span<const double> s);

  // REINFORCE ascent step: every log-prob in an episode is weighted by that
  // episode's whole discounted return (minus the optional baseline).
  void update(std::span<const EpisodeTrace> episodes);

  std::vector<double> train(Env& env, std::size_t updates, Rng& rng);  // mean return per update

  nn::Network& policy() { return policy_; }

private:
  PgConfig cfg_;
  std::size_t n_actions_;
  nn::Network policy_;
  std::unique_ptr<nn::Optimizer> opt_;
};

// ------------------------------------------------------------------- a2c

struct A2cConfig {
  std::size_t hidden = 128;
  double gamma = 0.99;
  double actor_lr = 1e-3;
  double critic_lr = 1e-3;
  double clip_norm = 5.0;
  std::uint64_t seed = 1;
};

class A2cAgent {
public:
  A2cAgent(std::size_t state_dim, std::size_t n_actions, const A2cConfig& cfg);

  std::vector<double> action_probs(std::span<const double> s);
  std::size_t sample_action(std::span<const double> s, Rng& rng);
  std::size_t greedy_action(std::span<const double> s);
  double value(std::span<const double> s);           // live critic
  double snapshot_value(std::span<const double> s);  // previous-update critic

  // Advantages come from the live critic; critic regression targets from the
  // snapshot taken at the start of the update.
  void update(const EpisodeTrace& episode);

  std::vector<double> train(Env& env, std::size_t episodes, Rng& rng);

  nn::Network& actor() { return actor_; }
  nn::Network& critic() { return critic_; }

private:
  A2cConfig cfg_;
  std::size_t n_actions_;
  nn::Network actor_, critic_, critic_snapshot_;
  std::unique_ptr<nn::Optimizer> actor_opt_, critic_opt_;
};

// ---------------------------------------------------------- orchestration

enum class AgentKind { dqn, pg, a2c };
AgentKind agent_kind_from_string(const std::string& s);
const char* to_string(AgentKind k);

// One configuration schema covering all three agent kinds.
struct AgentConfig {
  AgentKind kind = AgentKind::pg;
  std::size_t hidden = 128;
  double gamma = 0.99;
  double lr = 1e-3;
  std::size_t iterations = 40;  // pg: updates; dqn/a2c: episodes
  std::size_t episodes_per_update = 8;
  std::size_t batch_size = 32;
  std::size_t buffer_capacity = 20000;
  std::size_t target_copy_period = 500;
  double eps_start = 1.0;
  double eps_end = 0.05;
  std::size_t eps_decay_steps = 5000;
  std::size_t warmup = 200;
  double clip_norm = 5.0;
  std::uint64_t seed = 1;

  void validate() const;
};

struct TrainedAgent {
  AgentKind kind = AgentKind::pg;
  nn::Network net;  // policy for pg/a2c, Q network for dqn
  std::vector<double> curve;  // mean dream return per iteration

  std::size_t act(std::span<const double> s);  // deterministic evaluation action
  void save(const std::string& path) const;
  static TrainedAgent load(const std::string& path);
};

TrainedAgent train_agent(const AgentConfig& cfg, Env& env);

}  // namespace lobwm
