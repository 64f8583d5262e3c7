#include "lobwm/strategies.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "lobwm/common.hpp"
#include "lobwm/latent_ae.hpp"

namespace lobwm {

const char* to_string(Movement m) {
  switch (m) {
    case Movement::down: return "down";
    case Movement::no_change: return "no_change";
    case Movement::up: return "up";
  }
  return "?";
}

Movement classify_move(double delta, double alpha) {
  if (!(alpha > 0.0)) throw ConfigError("movement threshold must be positive");
  if (delta > alpha) return Movement::up;
  if (delta < -alpha) return Movement::down;
  return Movement::no_change;
}

Movement momentum_signal(const LobWindow& raw_window, double alpha) {
  if (raw_window.normalized) throw ValidationError("momentum signal needs a raw window");
  if (raw_window.snapshots.empty()) throw ValidationError("momentum signal: empty window");
  const double opening = mid_price(raw_window.snapshots.front());
  const double closing = mid_price(raw_window.snapshots.back());
  return classify_move(closing - opening, alpha);
}

long long movement_quantity(Movement m, long long fixed_quantity) {
  switch (m) {
    case Movement::up: return fixed_quantity;
    case Movement::down: return -fixed_quantity;
    case Movement::no_change: return 0;
  }
  return 0;
}

// ------------------------------------------------------------- classifier

void ClassifierConfig::validate() const {
  if (window == 0 || window % 8 != 0)
    throw ConfigError("classifier: window must be a positive multiple of 8");
  if (features == 0) throw ConfigError("classifier: features must be positive");
  if (kernel % 2 == 0) throw ConfigError("classifier: kernel must be odd");
  if (!(alpha > 0.0)) throw ConfigError("classifier: alpha must be positive");
  train.validate();
}

namespace {

nn::json classifier_spec(const ClassifierConfig& c) {
  return nn::json::array({
      nn::conv1d(c.features, c.channels0, c.kernel), nn::relu(), nn::downsample2(),
      nn::conv1d(c.channels0, c.channels1, c.kernel), nn::relu(), nn::downsample2(),
      nn::conv1d(c.channels1, c.channels2, c.kernel), nn::relu(), nn::downsample2(),
      nn::flatten(),
      nn::dense((c.window / 8) * c.channels2, c.dense_units), nn::relu(),
      nn::dense(c.dense_units, 3), nn::softmax(),
  });
}

}  // namespace

MovementClassifier::MovementClassifier(const ClassifierConfig& cfg)
    : cfg_(cfg), net_(classifier_spec(cfg)) {
  cfg_.validate();
  net_.init_params(cfg_.train.seed);
}

std::vector<double> MovementClassifier::probs(const Tensor& normalized_features) {
  return net_.forward(normalized_features).v;
}

Movement MovementClassifier::classify(const Tensor& normalized_features) {
  const auto p = probs(normalized_features);
  return static_cast<Movement>(std::max_element(p.begin(), p.end()) - p.begin());
}

nn::FitResult MovementClassifier::train(const std::vector<nn::Sample>& train_set,
                                        const std::vector<nn::Sample>& val_set) {
  nn::CrossEntropyLoss loss;
  return nn::fit(net_, train_set, val_set, loss, cfg_.train);
}

void MovementClassifier::save(const std::string& path) const {
  nn::json meta;
  meta["model"] = "classifier";
  meta["window"] = cfg_.window;
  meta["features"] = cfg_.features;
  meta["channels"] = {cfg_.channels0, cfg_.channels1, cfg_.channels2};
  meta["kernel"] = cfg_.kernel;
  meta["dense_units"] = cfg_.dense_units;
  meta["alpha"] = cfg_.alpha;
  nn::save_network(net_, path, meta);
}

MovementClassifier MovementClassifier::load(const std::string& path) {
  auto loaded = nn::load_network(path);
  ClassifierConfig cfg;
  cfg.window = loaded.meta.at("window").get<std::size_t>();
  cfg.features = loaded.meta.at("features").get<std::size_t>();
  const auto ch = loaded.meta.at("channels");
  cfg.channels0 = ch.at(0).get<std::size_t>();
  cfg.channels1 = ch.at(1).get<std::size_t>();
  cfg.channels2 = ch.at(2).get<std::size_t>();
  cfg.kernel = loaded.meta.at("kernel").get<std::size_t>();
  cfg.dense_units = loaded.meta.at("dense_units").get<std::size_t>();
  cfg.alpha = loaded.meta.at("alpha").get<double>();
  MovementClassifier clf(cfg);
  clf.net_ = std::move(loaded.net);
  return clf;
}

std::vector<nn::Sample> build_classifier_samples(const Dataset& ds, Split split,
                                                 std::size_t window_ticks, double alpha) {
  std::vector<nn::Sample> samples;
  for (std::size_t di : ds.day_indices(split)) {
    const auto windows = windows_of_day(ds.days[di], window_ticks);
    if (windows.size() < 2) continue;
    std::vector<double> avgs(windows.size());
    for (std::size_t i = 0; i < windows.size(); ++i) avgs[i] = avg_mid(windows[i]);
    for (std::size_t i = 0; i + 1 < windows.size(); ++i) {
      const Movement label = classify_move(avgs[i + 1] - avgs[i], alpha);
      samples.push_back({normalize_window(windows[i]).features(),
                         Tensor({1}, {static_cast<double>(static_cast<int>(label))})});
    }
  }
  return samples;
}

ClassificationReport evaluate_classifier(MovementClassifier& clf,
                                         const std::vector<nn::Sample>& samples) {
  if (samples.empty()) throw ValidationError("classifier evaluation: empty sample set");
  std::array<std::array<std::size_t, 3>, 3> confusion{};  // [truth][predicted]
  for (const auto& [input, target] : samples) {
    const auto truth = static_cast<std::size_t>(target.v.at(0));
    const auto pred = static_cast<std::size_t>(clf.classify(input));
    ++confusion[truth][pred];
  }
  ClassificationReport rep;
  rep.total = samples.size();
  std::size_t correct = 0;
  for (std::size_t c = 0; c < 3; ++c) {
    std::size_t support = 0, predicted = 0;
    for (std::size_t p = 0; p < 3; ++p) {
      support += confusion[c][p];
      predicted += confusion[p][c];
    }
    const std::size_t tp = confusion[c][c];
    correct += tp;
    ClassMetrics& m = rep.per_class[c];
    m.support = support;
    m.precision = predicted > 0 ? static_cast<double>(tp) / static_cast<double>(predicted) : 0.0;
    m.recall = support > 0 ? static_cast<double>(tp) / static_cast<double>(support) : 0.0;
    m.f1 = (m.precision + m.recall) > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
                                          : 0.0;
  }
  rep.accuracy = static_cast<double>(correct) / static_cast<double>(rep.total);
  return rep;
}

nlohmann::json ClassificationReport::to_json() const {
  nlohmann::json j;
  j["columns"] = {"class", "precision", "recall", "f1", "support"};
  j["rows"] = nlohmann::json::array();
  const char* names[3] = {"down", "no_change", "up"};
  for (std::size_t c = 0; c < 3; ++c) {
    j["rows"].push_back({{"class", names[c]},
                         {"precision", per_class[c].precision},
                         {"recall", per_class[c].recall},
                         {"f1", per_class[c].f1},
                         {"support", per_class[c].support}});
  }
  j["accuracy"] = accuracy;
  j["total"] = total;
  return j;
}

// ---------------------------------------------------------------- greedy

GreedyPlan greedy_optimal(std::span<const double> state_avg_mids, const GreedyConfig& cfg) {
  cfg.actions.validate();
  if (state_avg_mids.size() < 2)
    throw ValidationError("greedy: need at least two states");

  // candidate order implements the tie rule: |q| ascending, sell before buy
  std::vector<std::size_t> order(cfg.actions.count);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const long long qa = cfg.actions.quantity(a), qb = cfg.actions.quantity(b);
    if (std::llabs(qa) != std::llabs(qb)) return std::llabs(qa) < std::llabs(qb);
    return qa < qb;
  });

  GreedyPlan plan;
  Position po{0, cfg.po_max};
  for (std::size_t i = 0; i + 1 < state_avg_mids.size(); ++i) {
    const double delta = state_avg_mids[i + 1] - state_avg_mids[i];
    double best_score = -std::numeric_limits<double>::infinity();
    std::size_t best_index = cfg.actions.no_trade_index();
    Position best_po = po;
    for (std::size_t idx : order) {
      const long long qty = cfg.actions.quantity(idx);
      const Position po_next = step_position(po, qty);
      const double fee = qty == 0 ? 0.0 : cfg.fees.fee(static_cast<double>(std::llabs(qty)), delta);
      const double score = delta * static_cast<double>(po_next.value) - fee;
      if (score > best_score) {
        best_score = score;
        best_index = idx;
        best_po = po_next;
      }
    }
    // never worse than holding still
    const double hold_score = delta * static_cast<double>(po.value);
    if (best_score + 1e-12 < hold_score)
      throw Error("greedy: chosen action scored below no-trade");
    po = best_po;
    plan.action_indices.push_back(best_index);
    plan.step_rewards.push_back(best_score);
    plan.total += best_score;
  }
  return plan;
}

GreedyPlan greedy_optimal(const DayStream& day, std::size_t window_ticks,
                          const GreedyConfig& cfg) {
  const auto windows = windows_of_day(day, window_ticks);
  std::vector<double> avgs(windows.size());
  for (std::size_t i = 0; i < windows.size(); ++i) avgs[i] = avg_mid(windows[i]);
  return greedy_optimal(avgs, cfg);
}

// ------------------------------------------------------------------- bfs

namespace {

double bfs_expand(std::span<const double> deltas, std::span<const long long> quantities,
                  long long po_max, const FeeModel& fees, std::size_t step, Position po) {
  if (step == deltas.size()) return 0.0;
  double best = -std::numeric_limits<double>::infinity();
  for (long long qty : quantities) {
    const Position po_next = step_position(po, qty);
    const double fee =
        qty == 0 ? 0.0 : fees.fee(static_cast<double>(std::llabs(qty)), deltas[step]);
    const double reward = deltas[step] * static_cast<double>(po_next.value) - fee;
    best = std::max(best, reward + bfs_expand(deltas, quantities, po_max, fees, step + 1, po_next));
  }
  return best;
}

}  // namespace

double bfs_optimal(std::span<const double> state_avg_mids,
                   std::span<const long long> action_quantities, long long po_max,
                   const FeeModel& fees) {
  if (state_avg_mids.size() < 2) throw ValidationError("bfs: need at least two states");
  if (action_quantities.empty()) throw ValidationError("bfs: empty action set");
  const std::size_t steps = state_avg_mids.size() - 1;
  if (steps > 8) throw ValidationError("bfs: horizon too large for exhaustive search");
  std::vector<double> deltas(steps);
  for (std::size_t i = 0; i < steps; ++i) deltas[i] = state_avg_mids[i + 1] - state_avg_mids[i];
  return bfs_expand(deltas, action_quantities, po_max, fees, 0, Position{0, po_max});
}

// ---------------------------------------------------------------- envelope

std::vector<double> momentum_pnl_curve(const DayStream& day, std::size_t window_ticks,
                                       double alpha, long long fixed_quantity, long long po_max,
                                       const FeeModel& fees, std::size_t max_states) {
  auto windows = windows_of_day(day, window_ticks);
  if (max_states > 0 && windows.size() > max_states) windows.resize(max_states);
  if (windows.size() < 2) throw ValidationError("momentum curve: need at least two states");
  std::vector<double> curve;
  curve.reserve(windows.size() - 1);
  Position po{0, po_max};
  double cum = 0.0;
  for (std::size_t i = 0; i + 1 < windows.size(); ++i) {
    const long long qty = movement_quantity(momentum_signal(windows[i], alpha), fixed_quantity);
    po = step_position(po, qty);
    const double delta = avg_mid(windows[i + 1]) - avg_mid(windows[i]);
    const double fee = qty == 0 ? 0.0 : fees.fee(static_cast<double>(std::llabs(qty)), delta);
    cum += delta * static_cast<double>(po.value) - fee;
    curve.push_back(cum);
  }
  return curve;
}

StrategyEnvelope momentum_envelope(const DayStream& day, std::size_t window_ticks, double alpha,
                                   std::span<const long long> quantities, long long po_max,
                                   const FeeModel& fees, std::size_t max_states) {
  if (quantities.empty()) throw ValidationError("envelope: no quantities");
  StrategyEnvelope env;
  bool first = true;
  for (long long q : quantities) {
    const auto curve = momentum_pnl_curve(day, window_ticks, alpha, q, po_max, fees, max_states);
    if (first) {
      env.lower = curve;
      env.upper = curve;
      first = false;
      continue;
    }
    if (curve.size() != env.lower.size()) throw Error("envelope: curve length mismatch");
    for (std::size_t i = 0; i < curve.size(); ++i) {
      env.lower[i] = std::min(env.lower[i], curve[i]);
      env.upper[i] = std::max(env.upper[i], curve[i]);
    }
  }
  return env;
}

}  // namespace lobwm
