#include "lobwm/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "lobwm/common.hpp"

namespace lobwm {

using json = nlohmann::json;

// ------------------------------------------------------------ evaluation

namespace {

struct StepData {
  std::vector<LobWindow> windows;
  std::vector<double> avg_mids;
};

StepData day_states(const DayStream& day, const EvalConfig& cfg) {
  StepData sd;
  sd.windows = windows_of_day(day, cfg.window_ticks);
  if (cfg.max_states > 0 && sd.windows.size() > cfg.max_states)
    sd.windows.resize(cfg.max_states);
  if (sd.windows.size() < 2) throw ValidationError("replay: day too short for two states");
  sd.avg_mids.resize(sd.windows.size());
  for (std::size_t i = 0; i < sd.windows.size(); ++i) sd.avg_mids[i] = avg_mid(sd.windows[i]);
  return sd;
}

}  // namespace

EvalReport replay_policy(Policy& policy, Autoencoder* ae, const ContextEmbedding* embedding,
                         const DayStream& day, const EvalConfig& cfg) {
  cfg.actions.validate();
  const StepData sd = day_states(day, cfg);

  EvalReport rep;
  rep.day_id = day.id;
  rep.policy_name = policy.name();

  Position po{0, cfg.po_max};
  double cum_net = 0.0, cum_gross = 0.0;
  for (std::size_t i = 0; i + 1 < sd.windows.size(); ++i) {
    const LobWindow& raw = sd.windows[i];
    const LobWindow norm = normalize_window(raw);
    const std::vector<double> z = ae ? ae->encode(norm) : std::vector<double>{};
    const TradeContext ctx = TradeContext::from_prints(
        trades_in_range(day, raw.first_tick(), raw.last_tick() + 1), cfg.context_capacity);
    const std::vector<double> u =
        embedding ? embedding->embed(ctx, raw.first_tick(), cfg.window_ticks)
                  : std::vector<double>{};

    const DecisionContext dc{raw, norm, z, u, po, i};
    const std::size_t action = policy.decide(dc);
    const long long qty = cfg.actions.quantity(action);
    po = step_position(po, qty);

    const double delta = sd.avg_mids[i + 1] - sd.avg_mids[i];
    const double gross = delta * static_cast<double>(po.value);
    const double fee = qty == 0 ? 0.0 : cfg.fees.fee(static_cast<double>(std::llabs(qty)), delta);
    cum_gross += gross;
    cum_net += gross - fee;
    rep.fees_paid += fee;
    rep.cum_pnl_gross.push_back(cum_gross);
    rep.cum_pnl_net.push_back(cum_net);
    if (qty != 0) rep.actions.push_back({i, raw.first_tick(), qty});
  }
  rep.total_net = cum_net;
  rep.total_gross = cum_gross;

  const auto segments = tag_regimes(day.mid_series(), 500, 2.0);
  rep.regime_label = to_string(dominant_regime(segments));
  return rep;
}

std::vector<double> recompute_curve_from_actions(const DayStream& day,
                                                 std::span<const ActionRecord> actions,
                                                 const EvalConfig& cfg) {
  const StepData sd = day_states(day, cfg);
  std::vector<double> curve;
  Position po{0, cfg.po_max};
  double cum = 0.0;
  std::size_t next_action = 0;
  for (std::size_t i = 0; i + 1 < sd.windows.size(); ++i) {
    long long qty = 0;
    if (next_action < actions.size() && actions[next_action].step == i) {
      qty = actions[next_action].quantity;
      ++next_action;
    }
    po = step_position(po, qty);
    const double delta = sd.avg_mids[i + 1] - sd.avg_mids[i];
    const double fee = qty == 0 ? 0.0 : cfg.fees.fee(static_cast<double>(std::llabs(qty)), delta);
    cum += delta * static_cast<double>(po.value) - fee;
    curve.push_back(cum);
  }
  return curve;
}

json EvalReport::to_json() const {
  json j;
  j["day_id"] = day_id;
  j["policy"] = policy_name;
  j["total_net"] = total_net;
  j["total_gross"] = total_gross;
  j["fees_paid"] = fees_paid;
  j["regime"] = regime_label;
  j["cum_pnl_net"] = cum_pnl_net;
  j["cum_pnl_gross"] = cum_pnl_gross;
  j["actions"] = json::array();
  for (const auto& a : actions)
    j["actions"].push_back({{"step", a.step}, {"tick", a.tick}, {"quantity", a.quantity}});
  return j;
}

EvalReport EvalReport::from_json(const json& j) {
  EvalReport rep;
  rep.day_id = j.at("day_id").get<std::string>();
  rep.policy_name = j.at("policy").get<std::string>();
  rep.total_net = j.at("total_net").get<double>();
  rep.total_gross = j.at("total_gross").get<double>();
  rep.fees_paid = j.at("fees_paid").get<double>();
  rep.regime_label = j.at("regime").get<std::string>();
  rep.cum_pnl_net = j.at("cum_pnl_net").get<std::vector<double>>();
  rep.cum_pnl_gross = j.at("cum_pnl_gross").get<std::vector<double>>();
  for (const auto& a : j.at("actions"))
    rep.actions.push_back({a.at("step").get<std::size_t>(), a.at("tick").get<std::int64_t>(),
                           a.at("quantity").get<long long>()});
  return rep;
}

void EvalReport::write_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "step,cum_pnl_net,cum_pnl_gross\n";
  for (std::size_t i = 0; i < cum_pnl_net.size(); ++i)
    out << i << ',' << cum_pnl_net[i] << ',' << cum_pnl_gross[i] << "\n";
  if (!out) throw IoError("failed writing: " + path);
}

// --------------------------------------------------------------- regimes

std::vector<RegimeSegment> tag_regimes(std::span<const double> mids, std::size_t segment_ticks,
                                       double slope_threshold_per_1000) {
  if (mids.size() < 2) throw ValidationError("tag_regimes: series too short");
  if (segment_ticks < 2) throw ConfigError("tag_regimes: segment must cover at least 2 ticks");

  std::vector<RegimeSegment> segments;
  std::size_t begin = 0;
  while (begin < mids.size()) {
    const std::size_t end = std::min(begin + segment_ticks, mids.size());
    const std::size_t n = end - begin;
    Regime label = Regime::oscillating;
    if (n >= 2) {
      // least-squares slope over (t, mid)
      double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double x = static_cast<double>(i);
        const double y = mids[begin + i];
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
      }
      const double nn = static_cast<double>(n);
      const double slope = (nn * sxy - sx * sy) / (nn * sxx - sx * sx);
      const double per_1000 = slope * 1000.0;
      if (per_1000 > slope_threshold_per_1000) label = Regime::ascending;
      else if (per_1000 < -slope_threshold_per_1000) label = Regime::descending;
    }
    if (!segments.empty() && segments.back().regime == label) {
      segments.back().end_tick = static_cast<std::int64_t>(end);
    } else {
      segments.push_back({label, static_cast<std::int64_t>(begin), static_cast<std::int64_t>(end)});
    }
    begin = end;
  }
  return segments;
}

Regime dominant_regime(std::span<const RegimeSegment> segments) {
  if (segments.empty()) throw ValidationError("dominant_regime: no segments");
  std::array<std::int64_t, 3> ticks{0, 0, 0};
  for (const auto& s : segments)
    ticks[static_cast<std::size_t>(s.regime)] += s.end_tick - s.begin_tick;
  const auto best = std::max_element(ticks.begin(), ticks.end()) - ticks.begin();
  return static_cast<Regime>(best);
}

// --------------------------------------------------------- transferability

DreamReplayComparison compare_dream_vs_replay(TrainedAgent& agent, TransitionModel& transition,
                                              RewardModel& reward, const RewardBounds& bounds,
                                              Autoencoder& ae,
                                              std::span<const DayStream* const> days,
                                              const EvalConfig& cfg, std::size_t horizon,
                                              double temperature, std::uint64_t seed) {
  if (days.empty()) throw ValidationError("compare: no days");
  DreamReplayComparison out;

  for (const DayStream* day : days) {
    // replay side: gross rewards, capped at `horizon` steps
    EvalConfig replay_cfg = cfg;
    replay_cfg.max_states = horizon + 1;
    RlPolicy policy(agent);
    const EvalReport rep = replay_policy(policy, &ae, &transition.embedding(), *day, replay_cfg);

    // dream side: same initial state, unsquashed predicted rewards
    const auto windows = windows_of_day(*day, cfg.window_ticks);
    if (windows.empty()) throw ValidationError("compare: day too short");
    DreamInitialState init;
    init.z = ae.encode(normalize_window(windows[0]));
    init.context = TradeContext::from_prints(
        trades_in_range(*day, windows[0].first_tick(), windows[0].last_tick() + 1),
        cfg.context_capacity);
    init.first_tick = windows[0].first_tick();

    DreamConfig dream_cfg;
    dream_cfg.horizon = std::min<std::size_t>(horizon, rep.cum_pnl_gross.size());
    dream_cfg.temperature = temperature;
    dream_cfg.po_max = cfg.po_max;
    dream_cfg.actions = cfg.actions;
    DreamEnv env(transition, reward, bounds, {init}, dream_cfg, cfg.window_ticks);

    Rng rng(seed);
    std::vector<double> state = env.reset(rng);
    double dream_total = 0.0;
    for (std::size_t t = 0; t < dream_cfg.horizon; ++t) {
      const Env::Step st = env.step(agent.act(state), rng);
      dream_total += env.last_raw_reward();
      state = st.state;
      if (st.done) break;
    }
    out.rows.push_back({day->id, dream_total, rep.total_gross});
  }

  // Pearson correlation over the paired returns
  const std::size_t n = out.rows.size();
  double mx = 0.0, my = 0.0;
  for (const auto& r : out.rows) {
    mx += r.dream_return;
    my += r.replay_return;
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  std::size_t agree = 0;
  for (const auto& r : out.rows) {
    const double dx = r.dream_return - mx, dy = r.replay_return - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
    const auto sgn = [](double v) { return v > 0.0 ? 1 : (v < 0.0 ? -1 : 0); };
    if (sgn(r.dream_return) == sgn(r.replay_return)) ++agree;
  }
  out.correlation = (sxx > 0.0 && syy > 0.0) ? sxy / std::sqrt(sxx * syy) : 0.0;
  out.sign_agreement = static_cast<double>(agree) / static_cast<double>(n);
  return out;
}

json DreamReplayComparison::to_json() const {
  json j;
  j["rows"] = json::array();
  for (const auto& r : rows)
    j["rows"].push_back(
        {{"day", r.day_id}, {"dream", r.dream_return}, {"replay", r.replay_return}});
  j["correlation"] = correlation;
  j["sign_agreement"] = sign_agreement;
  return j;
}

// ---------------------------------------------------------------- variance

VarianceReport variance_report(std::span<const EvalReport> reports) {
  if (reports.empty()) throw ValidationError("variance report: no reports");

  std::map<std::string, std::map<std::string, std::vector<double>>> by_strategy_regime;
  for (const auto& r : reports) {
    by_strategy_regime[r.policy_name][r.regime_label].push_back(r.total_net);
    by_strategy_regime[r.policy_name]["total"].push_back(r.total_net);
  }

  VarianceReport out;
  const char* panels[4] = {"ascending", "descending", "oscillating", "total"};
  for (const auto& [strategy, regimes] : by_strategy_regime) {
    for (const char* panel : panels) {
      VarianceRow row;
      row.regime = panel;
      row.strategy = strategy;
      const auto it = regimes.find(panel);
      if (it != regimes.end() && !it->second.empty()) {
        const auto& vals = it->second;
        double mean = 0.0;
        for (double v : vals) mean += v;
        mean /= static_cast<double>(vals.size());
        double var = 0.0;
        for (double v : vals) var += (v - mean) * (v - mean);
        var /= static_cast<double>(vals.size());
        row.mean = mean;
        row.variance = var;
        row.days = vals.size();
      }
      out.rows.push_back(row);
    }
  }
  return out;
}

json VarianceReport::to_json() const {
  json j = json::array();
  for (const auto& r : rows)
    j.push_back({{"regime", r.regime},
                 {"strategy", r.strategy},
                 {"variance", r.variance},
                 {"mean", r.mean},
                 {"days", r.days}});
  return j;
}

}  // namespace lobwm
