#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lobwm/rng.hpp"
#include "lobwm/tensor.hpp"

// Limit-order-book data model: snapshots, trade prints, windows, transition
// assembly, a synthetic day generator, and CSV/manifest persistence.

namespace lobwm {

enum class Split { train, validation, test };
enum class Regime { ascending, descending, oscillating };

const char* to_string(Split s);
const char* to_string(Regime r);
Split split_from_string(const std::string& s);
Regime regime_from_string(const std::string& s);

// ------------------------------------------------------------- snapshots

struct LobSnapshot {
  std::int64_t tick = 0;
  std::vector<double> ask_prices;  // level 0 = best ask, strictly increasing
  std::vector<double> ask_sizes;
  std::vector<double> bid_prices;  // level 0 = best bid, strictly decreasing
  std::vector<double> bid_sizes;
};

// Throws ValidationError on a crossed/degenerate book.
void validate_snapshot(const LobSnapshot& s);

// (best ask + best bid) / 2. Validates first.
double mid_price(const LobSnapshot& s);

// --------------------------------------------------------------- windows

struct LobWindow {
  std::vector<LobSnapshot> snapshots;
  bool normalized = false;

  std::size_t width() const { return snapshots.size(); }
  std::size_t levels() const { return snapshots.empty() ? 0 : snapshots[0].ask_prices.size(); }
  std::size_t feature_count() const { return 4 * levels(); }
  std::int64_t first_tick() const { return snapshots.front().tick; }
  std::int64_t last_tick() const { return snapshots.back().tick; }

  // {W, 4L} matrix, columns ordered ap1..apL, as1..asL, bp1..bpL, bs1..bsL.
  Tensor features() const;
};

// Per-feature min-max over the window's time axis; constant columns map to
// 0.5. Rejects an already-normalized window and an empty one.
LobWindow normalize_window(const LobWindow& w);

// Mean of per-tick mid prices. Raw windows only.
double avg_mid(const LobWindow& w);

// ---------------------------------------------------------------- trades

struct TradePrint {
  std::int64_t tick = 0;
  double price = 0.0;
  double quantity = 0.0;  // positive units
  int direction = 0;      // +1 buy, -1 sell
};

struct QuantityNorm {
  double value = 0.0;  // (q - 100) / 900 when in bounds
  bool excluded = false;
};

// Trades below 100 or above 1000 units are flagged as outliers.
QuantityNorm normalize_quantity(double q);

inline constexpr double kQuantityLow = 100.0;
inline constexpr double kQuantityHigh = 1000.0;

// Fixed-capacity trade context: up to `capacity` real prints (chronological),
// then all-zero padding with mask=false.
struct TradeContext {
  std::vector<TradePrint> slots;
  std::vector<bool> mask;

  static TradeContext from_prints(std::span<const TradePrint> prints, std::size_t capacity);
  std::size_t capacity() const { return slots.size(); }
  std::size_t real_count() const;
};

// ------------------------------------------------------------ transitions

struct MarketState {
  LobWindow window;
  TradeContext context;
};

struct Transition {
  MarketState state;
  TradePrint action;
  MarketState next_state;
  double delta_mid = 0.0;  // avg_mid(next_state) - avg_mid(state)

  double reward_for(double position) const { return delta_mid * position; }
};

struct AssembleResult {
  std::vector<Transition> transitions;
  std::size_t skipped_no_window = 0;  // trade too close to a day edge
  std::size_t skipped_outlier = 0;    // excluded quantity, never a target action
  bool day_too_short = false;
};

// ---------------------------------------------------------------- days

struct RegimeSegment {
  Regime regime = Regime::ascending;
  std::int64_t begin_tick = 0;  // inclusive
  std::int64_t end_tick = 0;    // exclusive
};

struct DayStream {
  std::string id;
  Split split = Split::train;
  std::vector<LobSnapshot> snapshots;  // ticks contiguous ascending
  std::vector<TradePrint> trades;      // ticks within the snapshot range
  std::vector<RegimeSegment> regimes;  // generator ground truth, may be empty

  std::vector<double> mid_series() const;
};

struct Dataset {
  std::vector<DayStream> days;
  std::vector<std::size_t> day_indices(Split s) const;
};

// One Transition per in-bounds, non-outlier trade print: the state window is
// the W ticks before the trade, the next window the W ticks from the trade on.
AssembleResult assemble_transitions(const DayStream& day, std::size_t window_ticks,
                                    std::size_t context_capacity);

// Non-outlier trades with ticks in [lo, hi), chronological.
std::vector<TradePrint> trades_in_range(const DayStream& day, std::int64_t lo, std::int64_t hi);

// ------------------------------------------------------------- generator

struct SynthParams {
  double base_price = 400.0;
  double drift = 0.01;        // per-tick trend magnitude for ascending/descending
  double noise_sigma = 0.02;  // random-walk noise on the mid
  double osc_amplitude = 1.5;
  double osc_period = 400.0;
  double ou_theta = 0.05;  // mean reversion of the oscillating-regime noise
  double ou_sigma = 0.03;
  double spread = 0.2;
  double level_gap = 0.1;
  double depth_mean = 400.0;      // lognormal depth around this level
  double depth_log_step = 0.04;   // per-tick log-depth move
  double depth_min = 50.0;
  double depth_max = 4000.0;
  double trade_prob = 0.05;    // per-tick trade arrival probability
  double outlier_prob = 0.0;   // fraction of trades outside [100, 1000]
  std::size_t levels = 3;

  void validate() const;  // throws ConfigError
};

DayStream generate_synthetic_day(std::uint64_t seed, std::size_t n_ticks, Regime regime,
                                 const SynthParams& params, std::string id = "day",
                                 Split split = Split::train);

// Concatenates regime segments with a continuous mid path; ground-truth
// segment labels are recorded on the returned day.
DayStream generate_mixed_day(std::uint64_t seed,
                             std::span<const std::pair<Regime, std::size_t>> segments,
                             const SynthParams& params, std::string id = "day",
                             Split split = Split::train);

// ----------------------------------------------------------------- files

// Directory layout: <dir>/manifest.json plus <id>_lob.csv / <id>_trades.csv
// per day. Loading validates every row and reports offending line numbers.
void save_dataset(const Dataset& ds, const std::string& dir);
Dataset load_dataset(const std::string& manifest_path);

// Loads only the given split; the other splits' files are never opened.
Dataset load_dataset(const std::string& manifest_path, Split only);

// Read instrumentation: every dataset file open is recorded here, so tests
// can prove which splits a training stage touched.
namespace io_audit {
struct Entry {
  std::string path;
  std::size_t bytes = 0;
};
void reset();
void record(const std::string& path, std::size_t bytes);
std::vector<Entry> entries();
std::size_t bytes_read_matching(const std::string& substring);
}  // namespace io_audit

}  // namespace lobwm
