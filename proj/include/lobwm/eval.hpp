#pragma once

#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "lobwm/agents.hpp"
#include "lobwm/latent_ae.hpp"
#include "lobwm/lob_data.hpp"
#include "lobwm/world_reward.hpp"
#include "lobwm/world_transition.hpp"

// Historical-replay evaluation with exact rewards and fees, regime tagging,
// dream-vs-replay transferability tables and per-regime variance reports.

namespace lobwm {

// fee = rate * |quantity| * |mid change over the step|, charged on execution
struct FeeModel {
  double rate = 0.02;
  double fee(double quantity_abs, double delta_mid) const {
    return rate * quantity_abs * std::abs(delta_mid);
  }
};

// Everything a strategy may look at when deciding one step.
struct DecisionContext {
  const LobWindow& raw_window;
  const LobWindow& norm_window;
  std::span<const double> latent;
  std::span<const double> context_emb;
  Position position;
  std::size_t step = 0;
};

class Policy {
public:
  virtual ~Policy() = default;
  virtual std::string name() const = 0;
  virtual std::size_t decide(const DecisionContext& ctx) = 0;
};

// Wraps a trained RL agent: decisions are made from the agent-state vector.
class RlPolicy : public Policy {
public:
  explicit RlPolicy(TrainedAgent& agent, std::string name = "rl") : agent_(agent), name_(std::move(name)) {}
  std::string name() const override { return name_; }
  std::size_t decide(const DecisionContext& ctx) override {
    return agent_.act(agent_state_vector(ctx.latent, ctx.context_emb, ctx.position));
  }

private:
  TrainedAgent& agent_;
  std::string name_;
};

class ZeroPolicy : public Policy {
public:
  explicit ZeroPolicy(ActionSpace actions) : actions_(actions) {}
  std::string name() const override { return "zero"; }
  std::size_t decide(const DecisionContext&) override { return actions_.no_trade_index(); }

private:
  ActionSpace actions_;
};

// ------------------------------------------------------------ evaluation

struct EvalConfig {
  std::size_t window_ticks = 40;
  std::size_t context_capacity = 10;
  long long po_max = 1000;
  FeeModel fees;
  ActionSpace actions;
  std::size_t max_states = 0;  // cap on states per day; 0 = use the whole day
};

struct ActionRecord {
  std::size_t step = 0;
  std::int64_t tick = 0;  // first tick of the window the decision was made in
  long long quantity = 0;
};

struct EvalReport {
  std::string day_id;
  std::string policy_name;
  std::vector<double> cum_pnl_net;    // per step, fees subtracted
  std::vector<double> cum_pnl_gross;  // per step, no fees
  std::vector<ActionRecord> actions;  // executed trades only
  double total_net = 0.0;
  double total_gross = 0.0;
  double fees_paid = 0.0;
  std::string regime_label;

  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
  void write_csv(const std::string& path) const;
};

// ae/embedding may be null for strategies that never read the latent state
// (momentum, greedy); the latent and context spans are then empty.
EvalReport replay_policy(Policy& policy, Autoencoder* ae, const ContextEmbedding* embedding,
                         const DayStream& day, const EvalConfig& cfg);

// Replays a recorded action log against the same day; used to cross-check
// that a report's PnL curve is reproducible from its actions alone.
std::vector<double> recompute_curve_from_actions(const DayStream& day,
                                                 std::span<const ActionRecord> actions,
                                                 const EvalConfig& cfg);

// --------------------------------------------------------------- regimes

// Least-squares slope per segment, scaled to price units per 1000 ticks:
// above +threshold = ascending, below -threshold = descending, else
// oscillating. Adjacent segments with one label are merged.
std::vector<RegimeSegment> tag_regimes(std::span<const double> mids, std::size_t segment_ticks,
                                       double slope_threshold_per_1000);

// Dominant label over the series.
Regime dominant_regime(std::span<const RegimeSegment> segments);

// --------------------------------------------------------- transferability

struct DreamReplayRow {
  std::string day_id;
  double dream_return = 0.0;   // unsquashed predicted rewards, PnL units
  double replay_return = 0.0;  // exact replay rewards, no fees
};

struct DreamReplayComparison {
  std::vector<DreamReplayRow> rows;
  double correlation = 0.0;     // Pearson, 0 when degenerate
  double sign_agreement = 0.0;  // fraction of days with matching return sign

  nlohmann::json to_json() const;
};

DreamReplayComparison compare_dream_vs_replay(TrainedAgent& agent, TransitionModel& transition,
                                              RewardModel& reward, const RewardBounds& bounds,
                                              Autoencoder& ae,
                                              std::span<const DayStream* const> days,
                                              const EvalConfig& cfg, std::size_t horizon,
                                              double temperature, std::uint64_t seed);

// ---------------------------------------------------------------- variance

struct VarianceRow {
  std::string regime;  // ascending / descending / oscillating / total
  std::string strategy;
  double variance = 0.0;
  double mean = 0.0;
  std::size_t days = 0;
};

struct VarianceReport {
  std::vector<VarianceRow> rows;
  nlohmann::json to_json() const;
};

// Groups reports by strategy and by each report's regime label; variance of
// total net PnL across days, plus a "total" row per strategy.
VarianceReport variance_report(std::span<const EvalReport> reports);

}  // namespace lobwm
