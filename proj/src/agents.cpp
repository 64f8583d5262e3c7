#include "lobwm/agents.hpp"

#include <algorithm>
#include <cmath>

#include "lobwm/common.hpp"

namespace lobwm {

// --------------------------------------------------------------- actions

void ActionSpace::validate() const {
  if (count < 3 || count % 2 == 0) throw ConfigError("action space: count must be odd and >= 3");
  if (!(step > 0.0)) throw ConfigError("action space: step must be positive");
}

long long ActionSpace::quantity(std::size_t index) const {
  if (index >= count) throw ValidationError("action index out of range");
  const auto offset = static_cast<long long>(index) - static_cast<long long>((count - 1) / 2);
  return offset * static_cast<long long>(step);
}

std::size_t ActionSpace::index_of(long long qty) const {
  const auto s = static_cast<long long>(step);
  if (qty % s != 0) throw ValidationError("quantity not on the action grid");
  const long long idx = qty / s + static_cast<long long>((count - 1) / 2);
  if (idx < 0 || idx >= static_cast<long long>(count))
    throw ValidationError("quantity outside the action grid");
  return static_cast<std::size_t>(idx);
}

// ----------------------------------------------------------- environment

double discounted_return(std::span<const double> rewards, double gamma) {
  if (!(gamma > 0.0) || gamma > 1.0) throw ValidationError("gamma must be in (0, 1]");
  double g = 0.0, scale = 1.0;
  for (double r : rewards) {
    g += scale * r;
    scale *= gamma;
  }
  return g;
}

EpisodeTrace run_episode(Env& env, const PolicyFn& policy, Rng& rng) {
  EpisodeTrace trace;
  std::vector<double> state = env.reset(rng);
  for (std::size_t t = 0; t < env.horizon(); ++t) {
    const std::size_t action = policy(state);
    Env::Step step = env.step(action, rng);
    trace.states.push_back(std::move(state));
    trace.actions.push_back(action);
    trace.rewards.push_back(step.reward);
    state = std::move(step.state);
    if (step.done) break;
  }
  trace.final_state = std::move(state);
  return trace;
}

double random_policy_mean_return(Env& env, std::size_t episodes, Rng& rng) {
  if (episodes == 0) throw ValidationError("need at least one episode");
  const std::size_t n = env.n_actions();
  double total = 0.0;
  for (std::size_t e = 0; e < episodes; ++e) {
    const EpisodeTrace tr = run_episode(
        env, [&](std::span<const double>) { return static_cast<std::size_t>(rng.uniform_int(n)); },
        rng);
    for (double r : tr.rewards) total += r;
  }
  return total / static_cast<double>(episodes);
}

std::vector<double> agent_state_vector(std::span<const double> z,
                                       std::span<const double> context_emb, const Position& po) {
  std::vector<double> s;
  s.reserve(z.size() + context_emb.size() + 1);
  s.insert(s.end(), z.begin(), z.end());
  s.insert(s.end(), context_emb.begin(), context_emb.end());
  s.push_back(static_cast<double>(po.value) / static_cast<double>(po.max));
  return s;
}

// -------------------------------------------------------------- dream env

DreamEnv::DreamEnv(TransitionModel& transition, RewardModel& reward, RewardBounds bounds,
                   std::vector<DreamInitialState> initial_states, DreamConfig cfg,
                   std::size_t window_ticks)
    : transition_(transition),
      reward_(reward),
      bounds_(bounds),
      rho0_(std::move(initial_states)),
      cfg_(cfg),
      window_ticks_(window_ticks) {
  cfg_.actions.validate();
  if (rho0_.empty()) throw ConfigError("dream env: need at least one initial state");
  for (const auto& s : rho0_)
    if (s.z.size() != transition_.config().latent_dim)
      throw ConfigError("dream env: initial latent does not match the transition model");
}

std::size_t DreamEnv::state_dim() const {
  return transition_.config().latent_dim + transition_.config().context_dim + 1;
}

std::vector<double> DreamEnv::observe() const {
  return agent_state_vector(z_, context_emb_, po_);
}

std::vector<double> DreamEnv::reset(Rng& rng) {
  const DreamInitialState& init = rho0_[rng.uniform_int(rho0_.size())];
  z_ = init.z;
  context_ = init.context;
  tick_base_ = init.first_tick;
  context_emb_ = transition_.embedding().embed(context_, tick_base_, window_ticks_);
  po_ = Position{0, cfg_.po_max};
  steps_done_ = 0;
  last_raw_reward_ = 0.0;

  // Seed the recurrent history with N-1 copies of the initial step; the
  // first action completes the window.
  history_.clear();
  TransitionStep seed_step{z_, 0.0, context_emb_};
  for (std::size_t i = 0; i + 1 < transition_.config().seq_len; ++i) history_.push_back(seed_step);
  return observe();
}

Env::Step DreamEnv::step(std::size_t action, Rng& rng) {
  if (steps_done_ >= cfg_.horizon) throw Error("dream env: episode already finished");
  const long long qty = cfg_.actions.quantity(action);
  po_ = step_position(po_, qty);

  history_.push_back(TransitionStep{z_, normalize_action(static_cast<double>(qty),
                                                         cfg_.actions.max_quantity()),
                                    context_emb_});
  while (history_.size() > transition_.config().seq_len) history_.pop_front();

  const std::vector<TransitionStep> hist(history_.begin(), history_.end());
  const std::vector<double> z_next = transition_.sample_next(hist, cfg_.temperature, rng);

  const double delta = reward_.predict_delta(z_, z_next);
  last_raw_reward_ = delta * static_cast<double>(po_.value);
  const double squashed = squash_reward(last_raw_reward_, bounds_);

  // executed trades join the context seen by later states
  tick_base_ += static_cast<std::int64_t>(window_ticks_);
  if (qty != 0) {
    std::vector<TradePrint> prints;
    for (std::size_t i = 0; i < context_.slots.size(); ++i)
      if (context_.mask[i]) prints.push_back(context_.slots[i]);
    TradePrint own;
    own.tick = tick_base_ + static_cast<std::int64_t>(window_ticks_) - 1;
    own.price = 0.0;  // executions happen at mid; price is not a state feature
    own.quantity = static_cast<double>(std::llabs(qty));
    own.direction = qty > 0 ? 1 : -1;
    prints.push_back(own);
    context_ = TradeContext::from_prints(prints, context_.capacity());
  }
  context_emb_ = transition_.embedding().embed(context_, tick_base_, window_ticks_);

  z_ = z_next;
  ++steps_done_;
  return {observe(), squashed, steps_done_ >= cfg_.horizon};
}

// ------------------------------------------------------------------- dqn

namespace {

nn::json mlp_spec(std::size_t in, std::size_t hidden, std::size_t out, bool with_softmax) {
  nn::json spec = nn::json::array({
      nn::dense(in, hidden), nn::relu(),
      nn::dense(hidden, hidden), nn::relu(),
      nn::dense(hidden, out),
  });
  if (with_softmax) spec.push_back(nn::softmax());
  return spec;
}

Tensor to_tensor(std::span<const double> s) { return Tensor::vec({s.begin(), s.end()}); }

std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

DqnAgent::DqnAgent(std::size_t state_dim, std::size_t n_actions, const DqnConfig& cfg)
    : cfg_(cfg),
      n_actions_(n_actions),
      online_(mlp_spec(state_dim, cfg.hidden, n_actions, false)),
      target_(mlp_spec(state_dim, cfg.hidden, n_actions, false)),
      opt_(std::make_unique<nn::Adam>(cfg.lr)) {
  online_.init_params(cfg_.seed);
  target_.set_params(online_.get_params());
}

std::vector<double> DqnAgent::q_values(std::span<const double> s) {
  return online_.forward(to_tensor(s)).v;
}

std::size_t DqnAgent::greedy_action(std::span<const double> s) {
  ++stats_.online_argmax_evals;
  return argmax(q_values(s));
}

std::size_t DqnAgent::act(std::span<const double> s, double epsilon, Rng& rng) {
  if (rng.bernoulli(epsilon)) return static_cast<std::size_t>(rng.uniform_int(n_actions_));
  return greedy_action(s);
}

double DqnAgent::epsilon_at(std::size_t env_step) const {
  if (cfg_.eps_decay_steps == 0) return cfg_.eps_end;
  const double frac = std::min(1.0, static_cast<double>(env_step) /
                                        static_cast<double>(cfg_.eps_decay_steps));
  return cfg_.eps_start + frac * (cfg_.eps_end - cfg_.eps_start);
}

void DqnAgent::update_batch(std::span<const DqnTransitionSample> batch) {
  if (batch.empty()) throw ValidationError("dqn update: empty batch");
  online_.zero_grad();
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (const auto& tr : batch) {
    double y = tr.r;
    if (!tr.terminal && cfg_.gamma > 0.0) {
      // action chosen by the online net, value read from the target net
      ++stats_.online_argmax_evals;
      const std::size_t a_star = argmax(online_.forward(to_tensor(tr.s_next)).v);
      ++stats_.target_value_evals;
      y += cfg_.gamma * target_.forward(to_tensor(tr.s_next)).v[a_star];
    }
    const Tensor q = online_.forward(to_tensor(tr.s));
    Tensor g = Tensor::zeros(q.shape);
    g.v[tr.a] = 2.0 * (q.v[tr.a] - y) * inv;
    online_.backward(g);
  }
  if (cfg_.clip_norm > 0.0) online_.clip_grad_norm(cfg_.clip_norm);
  opt_->step(online_);
  ++stats_.updates;
  ++stats_.updates_since_copy;
  if (stats_.updates_since_copy >= cfg_.target_copy_period) copy_target();
}

void DqnAgent::copy_target() {
  target_.set_params(online_.get_params());
  ++stats_.target_copies;
  stats_.updates_since_copy = 0;
}

std::vector<double> DqnAgent::train(Env& env, std::size_t episodes, Rng& rng) {
  std::vector<DqnTransitionSample> buffer;
  buffer.reserve(cfg_.buffer_capacity);
  std::size_t write_pos = 0, env_steps = 0;
  std::vector<double> returns;
  returns.reserve(episodes);

  for (std::size_t ep = 0; ep < episodes; ++ep) {
    std::vector<double> state = env.reset(rng);
    double ep_return = 0.0;
    for (std::size_t t = 0; t < env.horizon(); ++t) {
      const std::size_t action = act(state, epsilon_at(env_steps), rng);
      Env::Step st = env.step(action, rng);
      ep_return += st.reward;
      DqnTransitionSample sample{state, action, st.reward, st.state, st.done};
      if (buffer.size() < cfg_.buffer_capacity) {
        buffer.push_back(std::move(sample));
      } else {
        buffer[write_pos] = std::move(sample);
        write_pos = (write_pos + 1) % cfg_.buffer_capacity;
      }
      ++env_steps;
      if (buffer.size() >= std::max<std::size_t>(cfg_.warmup, cfg_.batch_size)) {
        std::vector<DqnTransitionSample> batch;
        batch.reserve(cfg_.batch_size);
        for (std::size_t i = 0; i < cfg_.batch_size; ++i)
          batch.push_back(buffer[rng.uniform_int(buffer.size())]);
        update_batch(batch);
      }
      state = std::move(st.state);
      if (st.done) break;
    }
    returns.push_back(ep_return);
  }
  return returns;
}

// -------------------------------------------------------------------- pg

PgAgent::PgAgent(std::size_t state_dim, std::size_t n_actions, const PgConfig& cfg)
    : cfg_(cfg),
      n_actions_(n_actions),
      policy_(mlp_spec(state_dim, cfg.hidden, n_actions, true)),
      opt_(std::make_unique<nn::Adam>(cfg.lr)) {
  policy_.init_params(cfg_.seed);
}

std::vector<double> PgAgent::action_probs(std::span<const double> s) {
  return policy_.forward(to_tensor(s)).v;
}

std::size_t PgAgent::sample_action(std::span<const double> s, Rng& rng) {
  return rng.pick_weighted(action_probs(s));
}

std::size_t PgAgent::greedy_action(std::span<const double> s) { return argmax(action_probs(s)); }

void PgAgent::update(std::span<const EpisodeTrace> episodes) {
  if (episodes.empty()) throw ValidationError("pg update: no episodes");
  std::vector<double> returns;
  returns.reserve(episodes.size());
  for (const auto& ep : episodes) returns.push_back(discounted_return(ep.rewards, cfg_.gamma));
  double baseline = 0.0;
  if (cfg_.baseline) {
    for (double g : returns) baseline += g;
    baseline /= static_cast<double>(returns.size());
  }

  policy_.zero_grad();
  const double inv = 1.0 / static_cast<double>(episodes.size());
  for (std::size_t e = 0; e < episodes.size(); ++e) {
    const EpisodeTrace& ep = episodes[e];
    const double advantage = returns[e] - baseline;
    if (advantage == 0.0) continue;
    for (std::size_t t = 0; t < ep.length(); ++t) {
      const Tensor probs = policy_.forward(to_tensor(ep.states[t]));
      Tensor g = Tensor::zeros(probs.shape);
      // minimize -log pi(a) * advantage
      g.v[ep.actions[t]] = -advantage * inv / std::max(probs.v[ep.actions[t]], 1e-12);
      policy_.backward(g);
    }
  }
  if (cfg_.clip_norm > 0.0) policy_.clip_grad_norm(cfg_.clip_norm);
  opt_->step(policy_);
}

std::vector<double> PgAgent::train(Env& env, std::size_t updates, Rng& rng) {
  std::vector<double> curve;
  curve.reserve(updates);
  for (std::size_t u = 0; u < updates; ++u) {
    std::vector<EpisodeTrace> episodes;
    episodes.reserve(cfg_.episodes_per_update);
    double mean_return = 0.0;
    for (std::size_t e = 0; e < cfg_.episodes_per_update; ++e) {
      EpisodeTrace tr =
          run_episode(env, [&](std::span<const double> s) { return sample_action(s, rng); }, rng);
      for (double r : tr.rewards) mean_return += r;
      episodes.push_back(std::move(tr));
    }
    mean_return /= static_cast<double>(cfg_.episodes_per_update);
    update(episodes);
    curve.push_back(mean_return);
  }
  return curve;
}

// ------------------------------------------------------------------- a2c

A2cAgent::A2cAgent(std::size_t state_dim, std::size_t n_actions, const A2cConfig& cfg)
    : cfg_(cfg),
      n_actions_(n_actions),
      actor_(mlp_spec(state_dim, cfg.hidden, n_actions, true)),
      critic_(mlp_spec(state_dim, cfg.hidden, 1, false)),
      critic_snapshot_(mlp_spec(state_dim, cfg.hidden, 1, false)),
      actor_opt_(std::make_unique<nn::Adam>(cfg.actor_lr)),
      critic_opt_(std::make_unique<nn::Adam>(cfg.critic_lr)) {
  actor_.init_params(cfg_.seed);
  critic_.init_params(cfg_.seed + 1);
  critic_snapshot_.set_params(critic_.get_params());
}

std::vector<double> A2cAgent::action_probs(std::span<const double> s) {
  return actor_.forward(to_tensor(s)).v;
}

std::size_t A2cAgent::sample_action(std::span<const double> s, Rng& rng) {
  return rng.pick_weighted(action_probs(s));
}

std::size_t A2cAgent::greedy_action(std::span<const double> s) { return argmax(action_probs(s)); }

double A2cAgent::value(std::span<const double> s) { return critic_.forward(to_tensor(s)).v[0]; }

double A2cAgent::snapshot_value(std::span<const double> s) {
  return critic_snapshot_.forward(to_tensor(s)).v[0];
}

void A2cAgent::update(const EpisodeTrace& episode) {
  const std::size_t len = episode.length();
  if (len == 0) throw ValidationError("a2c update: empty episode");

  // w- for this update is the critic as of the previous update
  critic_snapshot_.set_params(critic_.get_params());

  actor_.zero_grad();
  critic_.zero_grad();
  const double inv = 1.0 / static_cast<double>(len);
  for (std::size_t t = 0; t < len; ++t) {
    const std::span<const double> s(episode.states[t]);
    const std::span<const double> s_next =
        t + 1 < len ? std::span<const double>(episode.states[t + 1])
                    : std::span<const double>(episode.final_state);
    const double v_next_live = value(s_next);
    const double v_next_snap = snapshot_value(s_next);
    const double v_here = value(s);

    const double advantage = episode.rewards[t] + cfg_.gamma * v_next_live - v_here;
    const double target = episode.rewards[t] + cfg_.gamma * v_next_snap;

    // critic regression toward the snapshot target
    const Tensor v_pred = critic_.forward(to_tensor(s));
    Tensor gv = Tensor::zeros(v_pred.shape);
    gv.v[0] = 2.0 * (v_pred.v[0] - target) * inv;
    critic_.backward(gv);

    if (advantage != 0.0) {
      const Tensor probs = actor_.forward(to_tensor(s));
      Tensor ga = Tensor::zeros(probs.shape);
      ga.v[episode.actions[t]] =
          -advantage * inv / std::max(probs.v[episode.actions[t]], 1e-12);
      actor_.backward(ga);
    }
  }
  if (cfg_.clip_norm > 0.0) {
    actor_.clip_grad_norm(cfg_.clip_norm);
    critic_.clip_grad_norm(cfg_.clip_norm);
  }
  actor_opt_->step(actor_);
  critic_opt_->step(critic_);
}

std::vector<double> A2cAgent::train(Env& env, std::size_t episodes, Rng& rng) {
  std::vector<double> curve;
  curve.reserve(episodes);
  for (std::size_t e = 0; e < episodes; ++e) {
    EpisodeTrace tr =
        run_episode(env, [&](std::span<const double> s) { return sample_action(s, rng); }, rng);
    double total = 0.0;
    for (double r : tr.rewards) total += r;
    update(tr);
    curve.push_back(total);
  }
  return curve;
}

// ---------------------------------------------------------- orchestration

AgentKind agent_kind_from_string(const std::string& s) {
  if (s == "dqn") return AgentKind::dqn;
  if (s == "pg") return AgentKind::pg;
  if (s == "a2c") return AgentKind::a2c;
  throw ConfigError("unknown agent kind: " + s);
}

const char* to_string(AgentKind k) {
  switch (k) {
    case AgentKind::dqn: return "dqn";
    case AgentKind::pg: return "pg";
    case AgentKind::a2c: return "a2c";
  }
  return "?";
}

void AgentConfig::validate() const {
  if (!(gamma > 0.0) || gamma > 1.0) throw ConfigError("agent: gamma must be in (0,1]");
  if (!(lr > 0.0)) throw ConfigError("agent: lr must be positive");
  if (hidden == 0 || iterations == 0) throw ConfigError("agent: hidden/iterations must be positive");
}

std::size_t TrainedAgent::act(std::span<const double> s) {
  const Tensor out = net.forward(Tensor::vec({s.begin(), s.end()}));
  return static_cast<std::size_t>(std::max_element(out.v.begin(), out.v.end()) - out.v.begin());
}

void TrainedAgent::save(const std::string& path) const {
  nn::json meta;
  meta["model"] = "agent";
  meta["agent_kind"] = to_string(kind);
  meta["curve"] = curve;
  nn::save_network(net, path, meta);
}

TrainedAgent TrainedAgent::load(const std::string& path) {
  auto loaded = nn::load_network(path);
  TrainedAgent agent;
  agent.kind = agent_kind_from_string(loaded.meta.at("agent_kind").get<std::string>());
  agent.net = std::move(loaded.net);
  agent.curve = loaded.meta.value("curve", std::vector<double>{});
  return agent;
}

TrainedAgent train_agent(const AgentConfig& cfg, Env& env) {
  cfg.validate();
  Rng rng(cfg.seed);
  TrainedAgent out;
  out.kind = cfg.kind;
  switch (cfg.kind) {
    case AgentKind::dqn: {
      DqnConfig dc;
      dc.hidden = cfg.hidden;
      dc.gamma = cfg.gamma;
      dc.lr = cfg.lr;
      dc.batch_size = cfg.batch_size;
      dc.buffer_capacity = cfg.buffer_capacity;
      dc.target_copy_period = cfg.target_copy_period;
      dc.eps_start = cfg.eps_start;
      dc.eps_end = cfg.eps_end;
      dc.eps_decay_steps = cfg.eps_decay_steps;
      dc.warmup = cfg.warmup;
      dc.clip_norm = cfg.clip_norm;
      dc.seed = cfg.seed;
      DqnAgent agent(env.state_dim(), env.n_actions(), dc);
      out.curve = agent.train(env, cfg.iterations, rng);
      out.net = agent.online();
      break;
    }
    case AgentKind::pg: {
      PgConfig pc;
      pc.hidden = cfg.hidden;
      pc.gamma = cfg.gamma;
      pc.lr = cfg.lr;
      pc.episodes_per_update = cfg.episodes_per_update;
      pc.clip_norm = cfg.clip_norm;
      pc.seed = cfg.seed;
      PgAgent agent(env.state_dim(), env.n_actions(), pc);
      out.curve = agent.train(env, cfg.iterations, rng);
      out.net = agent.policy();
      break;
    }
    case AgentKind::a2c: {
      A2cConfig ac;
      ac.hidden = cfg.hidden;
      ac.gamma = cfg.gamma;
      ac.actor_lr = cfg.lr;
      ac.critic_lr = cfg.lr;
      ac.clip_norm = cfg.clip_norm;
      ac.seed = cfg.seed;
      A2cAgent agent(env.state_dim(), env.n_actions(), ac);
      out.curve = agent.train(env, cfg.iterations, rng);
      out.net = agent.actor();
      break;
    }
  }
  return out;
}

}  // namespace lobwm
