#pragma once

// Tiny hand-built MDPs used as oracles for the RL agents.

#include <array>
#include <cmath>
#include <vector>

#include "lobwm/agents.hpp"

namespace lobwm::testenv {

// Two states, two actions, deterministic dynamics.
//   s0: a0 -> (s0, 0.0)   a1 -> (s1, -0.2)
//   s1: a0 -> (s1, +1.0)  a1 -> (s0,  0.0)
// With gamma=0.9 the optimal policy is a1 in s0 and a0 in s1.
class TwoStateMdp : public Env {
public:
  explicit TwoStateMdp(std::size_t horizon = 25) : horizon_(horizon) {}

  std::size_t state_dim() const override { return 2; }
  std::size_t n_actions() const override { return 2; }
  std::size_t horizon() const override { return horizon_; }

  std::vector<double> reset(Rng& rng) override {
    state_ = static_cast<std::size_t>(rng.uniform_int(2));
    return one_hot(state_);
  }

  Step step(std::size_t action, Rng&) override {
    double reward = 0.0;
    if (state_ == 0) {
      if (action == 1) {
        reward = -0.2;
        state_ = 1;
      }
    } else {
      if (action == 0) reward = 1.0;
      else state_ = 0;
    }
    return {one_hot(state_), reward, false};
  }

  // exact dynamics for the value-iteration oracle
  static std::pair<std::size_t, double> dynamics(std::size_t s, std::size_t a) {
    if (s == 0) return a == 0 ? std::pair<std::size_t, double>{0, 0.0}
                              : std::pair<std::size_t, double>{1, -0.2};
    return a == 0 ? std::pair<std::size_t, double>{1, 1.0}
                  : std::pair<std::size_t, double>{0, 0.0};
  }

  static std::vector<double> one_hot(std::size_t s) {
    return s == 0 ? std::vector<double>{1.0, 0.0} : std::vector<double>{0.0, 1.0};
  }

private:
  std::size_t horizon_;
  std::size_t state_ = 0;
};

// Greedy policy from value iteration on a 2-state 2-action MDP.
inline std::array<std::size_t, 2> value_iteration_policy(double gamma, int iterations = 200) {
  std::array<double, 2> v{0.0, 0.0};
  for (int it = 0; it < iterations; ++it) {
    std::array<double, 2> next{};
    for (std::size_t s = 0; s < 2; ++s) {
      double best = -1e300;
      for (std::size_t a = 0; a < 2; ++a) {
        const auto [s2, r] = TwoStateMdp::dynamics(s, a);
        best = std::max(best, r + gamma * v[s2]);
      }
      next[s] = best;
    }
    v = next;
  }
  std::array<std::size_t, 2> policy{};
  for (std::size_t s = 0; s < 2; ++s) {
    double best = -1e300;
    for (std::size_t a = 0; a < 2; ++a) {
      const auto [s2, r] = TwoStateMdp::dynamics(s, a);
      const double q = r + gamma * v[s2];
      if (q > best) {
        best = q;
        policy[s] = a;
      }
    }
  }
  return policy;
}

// Single-state bandit: action 0 pays +1, action 1 pays 0. Horizon 1.
class BanditEnv : public Env {
public:
  std::size_t state_dim() const override { return 1; }
  std::size_t n_actions() const override { return 2; }
  std::size_t horizon() const override { return 1; }
  std::vector<double> reset(Rng&) override { return {1.0}; }
  Step step(std::size_t action, Rng&) override {
    return {{1.0}, action == 0 ? 1.0 : 0.0, true};
  }
};

// Single state, constant reward c for every action; V* = c / (1 - gamma).
class ConstRewardEnv : public Env {
public:
  ConstRewardEnv(double c, std::size_t horizon) : c_(c), horizon_(horizon) {}
  std::size_t state_dim() const override { return 1; }
  std::size_t n_actions() const override { return 2; }
  std::size_t horizon() const override { return horizon_; }
  std::vector<double> reset(Rng&) override { return {1.0}; }
  Step step(std::size_t, Rng&) override { return {{1.0}, c_, false}; }

private:
  double c_;
  std::size_t horizon_;
};

}  // namespace lobwm::testenv
