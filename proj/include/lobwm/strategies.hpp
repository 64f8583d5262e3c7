#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "lobwm/eval.hpp"
#include "lobwm/lob_data.hpp"
#include "lobwm/nn.hpp"

// Benchmark strategies: momentum envelope, movement classifier, greedy
// optimal with future knowledge, and an exhaustive tree-search oracle for
// tiny horizons.

namespace lobwm {

enum class Movement { down = 0, no_change = 1, up = 2 };
const char* to_string(Movement m);

// Classify a mid move against the threshold: up iff delta > alpha, down iff
// delta < -alpha.
Movement classify_move(double delta, double alpha);

// Closing mid (last tick) minus opening mid (first tick) of the state window.
Movement momentum_signal(const LobWindow& raw_window, double alpha);

// up -> buy fixed quantity, down -> sell it, no_change -> no trade.
long long movement_quantity(Movement m, long long fixed_quantity);

class MomentumPolicy : public Policy {
public:
  MomentumPolicy(double alpha, long long fixed_quantity, ActionSpace actions)
      : alpha_(alpha), qty_(fixed_quantity), actions_(actions) {}
  std::string name() const override { return "momentum_q" + std::to_string(qty_); }
  std::size_t decide(const DecisionContext& ctx) override {
    return actions_.index_of(movement_quantity(momentum_signal(ctx.raw_window, alpha_), qty_));
  }

private:
  double alpha_;
  long long qty_;
  ActionSpace actions_;
};

// ------------------------------------------------------------- classifier

struct ClassifierConfig {
  std::size_t window = 40;
  std::size_t features = 12;
  std::size_t channels0 = 16;
  std::size_t channels1 = 32;
  std::size_t channels2 = 64;
  std::size_t kernel = 5;
  std::size_t dense_units = 64;
  double alpha = 0.1;  // movement threshold used for labels
  nn::TrainConfig train;

  void validate() const;
};

class MovementClassifier {
public:
  explicit MovementClassifier(const ClassifierConfig& cfg);

  const ClassifierConfig& config() const { return cfg_; }
  std::vector<double> probs(const Tensor& normalized_features);
  Movement classify(const Tensor& normalized_features);

  nn::FitResult train(const std::vector<nn::Sample>& train_set,
                      const std::vector<nn::Sample>& val_set);

  nn::Network& net() { return net_; }
  void save(const std::string& path) const;
  static MovementClassifier load(const std::string& path);

private:
  ClassifierConfig cfg_;
  nn::Network net_;
};

// Labels are the next state's average-mid change against alpha.
std::vector<nn::Sample> build_classifier_samples(const Dataset& ds, Split split,
                                                 std::size_t window_ticks, double alpha);

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct ClassificationReport {
  std::array<ClassMetrics, 3> per_class;  // down, no_change, up
  double accuracy = 0.0;
  std::size_t total = 0;

  nlohmann::json to_json() const;
};

ClassificationReport evaluate_classifier(MovementClassifier& clf,
                                         const std::vector<nn::Sample>& samples);

class ClassifierPolicy : public Policy {
public:
  ClassifierPolicy(MovementClassifier& clf, long long fixed_quantity, ActionSpace actions)
      : clf_(clf), qty_(fixed_quantity), actions_(actions) {}
  std::string name() const override { return "classifier_q" + std::to_string(qty_); }
  std::size_t decide(const DecisionContext& ctx) override {
    return actions_.index_of(movement_quantity(clf_.classify(ctx.norm_window.features()), qty_));
  }

private:
  MovementClassifier& clf_;
  long long qty_;
  ActionSpace actions_;
};

// ---------------------------------------------------------------- greedy

struct GreedyConfig {
  ActionSpace actions;
  long long po_max = 1000;
  FeeModel fees;
};

struct GreedyPlan {
  std::vector<std::size_t> action_indices;  // one per step
  std::vector<double> step_rewards;         // net of fees
  double total = 0.0;
};

// Future-knowledge baseline: at every step expand all actions from the one
// retained node, score by one-step net reward, keep the best. Ties prefer
// the smaller |quantity| (selling before buying at equal size).
GreedyPlan greedy_optimal(std::span<const double> state_avg_mids, const GreedyConfig& cfg);
GreedyPlan greedy_optimal(const DayStream& day, std::size_t window_ticks, const GreedyConfig& cfg);

class GreedyPolicy : public Policy {
public:
  GreedyPolicy(const DayStream& day, std::size_t window_ticks, const GreedyConfig& cfg)
      : plan_(greedy_optimal(day, window_ticks, cfg)) {}
  std::string name() const override { return "greedy"; }
  std::size_t decide(const DecisionContext& ctx) override {
    return ctx.step < plan_.action_indices.size() ? plan_.action_indices[ctx.step]
                                                  : plan_.action_indices.back();
  }
  const GreedyPlan& plan() const { return plan_; }

private:
  GreedyPlan plan_;
};

// ------------------------------------------------------------------- bfs

// Exact optimum by exhaustive tree expansion over every action sequence.
// Tiny instances only: cost is |actions|^steps.
double bfs_optimal(std::span<const double> state_avg_mids,
                   std::span<const long long> action_quantities, long long po_max,
                   const FeeModel& fees);

// ---------------------------------------------------------------- envelope

struct StrategyEnvelope {
  std::vector<double> lower;  // pointwise min over the quantity variants
  std::vector<double> upper;
};

std::vector<double> momentum_pnl_curve(const DayStream& day, std::size_t window_ticks,
                                       double alpha, long long fixed_quantity, long long po_max,
                                       const FeeModel& fees, std::size_t max_states = 0);

StrategyEnvelope momentum_envelope(const DayStream& day, std::size_t window_ticks, double alpha,
                                   std::span<const long long> quantities, long long po_max,
                                   const FeeModel& fees, std::size_t max_states = 0);

}  // namespace lobwm
