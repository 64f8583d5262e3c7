#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "lobwm/lob_data.hpp"

using namespace lobwm;
namespace fs = std::filesystem;

namespace {

LobSnapshot snap(std::int64_t tick, double ap1, double bp1) {
  LobSnapshot s;
  s.tick = tick;
  s.ask_prices = {ap1, ap1 + 0.1, ap1 + 0.2};
  s.bid_prices = {bp1, bp1 - 0.1, bp1 - 0.2};
  s.ask_sizes = {100, 150, 200};
  s.bid_sizes = {100, 150, 200};
  return s;
}

// Flat-mid window helper: every tick has the given mid, spread 0.2.
LobWindow window_with_mids(const std::vector<double>& mids, std::int64_t tick0 = 0) {
  LobWindow w;
  for (std::size_t i = 0; i < mids.size(); ++i)
    w.snapshots.push_back(snap(tick0 + static_cast<std::int64_t>(i), mids[i] + 0.1, mids[i] - 0.1));
  return w;
}

std::vector<double> acf(const std::vector<double>& x, std::size_t max_lag) {
  const double n = static_cast<double>(x.size());
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= n;
  double denom = 0.0;
  for (double v : x) denom += (v - mean) * (v - mean);
  std::vector<double> out(max_lag + 1, 0.0);
  for (std::size_t lag = 0; lag <= max_lag; ++lag) {
    double acc = 0.0;
    for (std::size_t t = 0; t + lag < x.size(); ++t) acc += (x[t] - mean) * (x[t + lag] - mean);
    out[lag] = acc / denom;
  }
  return out;
}

}  // namespace

TEST_CASE("mid price reproduces the worked example exactly") {
  LobSnapshot s;
  s.tick = 0;
  s.ask_prices = {408.3, 408.4, 408.5};
  s.bid_prices = {408.0, 407.9, 407.8};
  s.ask_sizes = {10, 20, 30};
  s.bid_sizes = {10, 20, 30};
  CHECK(mid_price(s) == 408.15);
}

TEST_CASE("zero spread and crossed books are rejected") {
  LobSnapshot s = snap(0, 100.0, 100.0);  // ap1 == bp1
  CHECK_THROWS_AS(mid_price(s), ValidationError);
  s = snap(0, 99.0, 100.0);  // crossed
  CHECK_THROWS_AS(validate_snapshot(s), ValidationError);
}

TEST_CASE("mid price is the arithmetic mean of the touch") {
  CHECK(mid_price(snap(0, 10.0, 8.0)) == 9.0);
}

TEST_CASE("window normalization is per-feature min-max") {
  SUBCASE("three-point column spans [0, 0.5, 1]") {
    LobWindow w = window_with_mids({1.0, 2.0, 3.0});
    LobWindow n = normalize_window(w);
    CHECK(n.normalized);
    // every price column moves with the mid, so each maps to 0, 0.5, 1
    CHECK(n.snapshots[0].ask_prices[0] == 0.0);
    CHECK(n.snapshots[1].ask_prices[0] == 0.5);
    CHECK(n.snapshots[2].ask_prices[0] == 1.0);
  }
  SUBCASE("constant columns map to 0.5") {
    LobWindow w = window_with_mids({5.0, 5.0, 5.0});
    LobWindow n = normalize_window(w);
    for (const auto& s : n.snapshots) {
      CHECK(s.ask_prices[0] == 0.5);
      CHECK(s.bid_prices[2] == 0.5);
      CHECK(s.ask_sizes[0] == 0.5);  // sizes constant in this helper
    }
  }
  SUBCASE("two-point column spans [0, 1]") {
    LobWindow n = normalize_window(window_with_mids({408.0, 408.3}));
    CHECK(n.snapshots[0].bid_prices[0] == 0.0);
    CHECK(n.snapshots[1].bid_prices[0] == 1.0);
  }
  SUBCASE("all features land in [0,1]") {
    SynthParams p;
    DayStream day = generate_synthetic_day(3, 200, Regime::oscillating, p);
    LobWindow w;
    w.snapshots.assign(day.snapshots.begin(), day.snapshots.begin() + 40);
    const Tensor f = normalize_window(w).features();
    for (double v : f.v) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
  SUBCASE("re-normalizing is rejected") {
    LobWindow n = normalize_window(window_with_mids({1.0, 2.0}));
    CHECK_THROWS_AS(normalize_window(n), ValidationError);
  }
  SUBCASE("empty window is rejected") {
    CHECK_THROWS_AS(normalize_window(LobWindow{}), ValidationError);
  }
  SUBCASE("avg_mid refuses normalized windows") {
    LobWindow n = normalize_window(window_with_mids({1.0, 2.0}));
    CHECK_THROWS_AS(avg_mid(n), ValidationError);
  }
}

TEST_CASE("trade quantity normalization and outlier bounds") {
  CHECK(normalize_quantity(100).value == 0.0);
  CHECK_FALSE(normalize_quantity(100).excluded);
  CHECK(normalize_quantity(1000).value == 1.0);
  CHECK_FALSE(normalize_quantity(1000).excluded);
  CHECK(normalize_quantity(50).excluded);
  CHECK(normalize_quantity(1001).excluded);
  CHECK(normalize_quantity(550).value == 0.5);
}

TEST_CASE("trade context pads with zeros after the real entries") {
  std::vector<TradePrint> prints;
  for (int i = 0; i < 3; ++i) prints.push_back({10 + i, 400.0, 200.0, 1});
  const TradeContext ctx = TradeContext::from_prints(prints, 10);
  CHECK(ctx.capacity() == 10);
  CHECK(ctx.real_count() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(ctx.mask[i]);
    CHECK(ctx.slots[i].tick == 10 + static_cast<std::int64_t>(i));
  }
  for (std::size_t i = 3; i < 10; ++i) {
    CHECK_FALSE(ctx.mask[i]);
    CHECK(ctx.slots[i].quantity == 0.0);
    CHECK(ctx.slots[i].price == 0.0);
    CHECK(ctx.slots[i].direction == 0);
  }
  // overflow keeps the most recent entries
  std::vector<TradePrint> many;
  for (int i = 0; i < 15; ++i) many.push_back({static_cast<std::int64_t>(i), 1.0, 150.0, -1});
  const TradeContext full = TradeContext::from_prints(many, 10);
  CHECK(full.real_count() == 10);
  CHECK(full.slots[0].tick == 5);
  CHECK(full.slots[9].tick == 14);
}

TEST_CASE("transition assembly windows sit back to back around the action") {
  const std::size_t w = 40;
  SynthParams p;
  p.trade_prob = 0.0;
  DayStream day = generate_synthetic_day(1, 3 * w, Regime::ascending, p);
  day.trades.push_back({static_cast<std::int64_t>(w + 1), 400.0, 300.0, 1});

  const AssembleResult res = assemble_transitions(day, w, 10);
  REQUIRE(res.transitions.size() == 1);
  const Transition& tr = res.transitions[0];
  CHECK(tr.state.window.width() == w);
  CHECK(tr.next_state.window.width() == w);
  CHECK(tr.state.window.last_tick() + 1 == tr.next_state.window.first_tick());
  CHECK(tr.next_state.window.first_tick() == tr.action.tick);
  CHECK(tr.delta_mid ==
        doctest::Approx(avg_mid(tr.next_state.window) - avg_mid(tr.state.window)));
  // the action itself is part of the next state's trade context
  CHECK(tr.next_state.context.real_count() == 1);
  CHECK(tr.next_state.context.slots[0].tick == tr.action.tick);
}

TEST_CASE("days shorter than two windows yield no transitions") {
  SynthParams p;
  p.trade_prob = 0.3;
  DayStream day = generate_synthetic_day(2, 79, Regime::ascending, p);
  const AssembleResult res = assemble_transitions(day, 40, 10);
  CHECK(res.transitions.empty());
  CHECK(res.day_too_short);
}

TEST_CASE("assembled transition count matches brute-force enumeration") {
  const std::size_t w = 40;
  SynthParams p;
  p.trade_prob = 0.0125;  // ~50 trades over 4000 ticks
  p.outlier_prob = 0.15;
  DayStream day = generate_synthetic_day(7, 4000, Regime::oscillating, p);

  std::size_t expected = 0;
  for (const auto& t : day.trades) {
    if (normalize_quantity(t.quantity).excluded) continue;
    if (t.tick - static_cast<std::int64_t>(w) < 0) continue;
    if (t.tick + static_cast<std::int64_t>(w) > 4000) continue;
    ++expected;
  }
  REQUIRE(expected > 10);

  const AssembleResult res = assemble_transitions(day, w, 10);
  CHECK(res.transitions.size() == expected);
  CHECK(res.skipped_outlier > 0);
  for (const auto& tr : res.transitions)
    CHECK(tr.state.window.last_tick() + 1 == tr.next_state.window.first_tick());
}

TEST_CASE("synthetic generator honors its contracts") {
  SUBCASE("zero-noise ascending drift gives strictly increasing mids") {
    SynthParams p;
    p.noise_sigma = 0.0;
    p.drift = 0.01;
    DayStream day = generate_synthetic_day(5, 500, Regime::ascending, p);
    const auto mids = day.mid_series();
    for (std::size_t i = 1; i < mids.size(); ++i) CHECK(mids[i] > mids[i - 1]);
  }
  SUBCASE("identical seeds give identical streams") {
    SynthParams p;
    DayStream a = generate_synthetic_day(11, 600, Regime::oscillating, p);
    DayStream b = generate_synthetic_day(11, 600, Regime::oscillating, p);
    REQUIRE(a.snapshots.size() == b.snapshots.size());
    CHECK(a.mid_series() == b.mid_series());
    REQUIRE(a.trades.size() == b.trades.size());
    for (std::size_t i = 0; i < a.trades.size(); ++i) {
      CHECK(a.trades[i].tick == b.trades[i].tick);
      CHECK(a.trades[i].quantity == b.trades[i].quantity);
      CHECK(a.trades[i].direction == b.trades[i].direction);
    }
  }
  SUBCASE("every generated snapshot is a valid book") {
    SynthParams p;
    DayStream day = generate_synthetic_day(13, 800, Regime::descending, p);
    for (const auto& s : day.snapshots) CHECK_NOTHROW(validate_snapshot(s));
  }
  SUBCASE("trade quantities stay inside the outlier bounds by default") {
    SynthParams p;
    p.trade_prob = 0.2;
    DayStream day = generate_synthetic_day(17, 1000, Regime::ascending, p);
    REQUIRE(!day.trades.empty());
    for (const auto& t : day.trades) {
      CHECK(t.quantity >= 100.0);
      CHECK(t.quantity <= 1000.0);
    }
  }
  SUBCASE("oscillating mid autocorrelation dips near half the period") {
    SynthParams p;
    p.osc_period = 200.0;
    p.osc_amplitude = 2.0;
    p.ou_sigma = 0.01;
    DayStream day = generate_synthetic_day(19, 3000, Regime::oscillating, p);
    const auto corr = acf(day.mid_series(), 220);
    std::size_t first_min = 0;
    for (std::size_t lag = 2; lag + 1 < corr.size(); ++lag) {
      if (corr[lag] <= corr[lag - 1] && corr[lag] <= corr[lag + 1]) {
        first_min = lag;
        break;
      }
    }
    REQUIRE(first_min > 0);
    CHECK(std::abs(static_cast<double>(first_min) - 100.0) <= 20.0);
  }
  SUBCASE("invalid params raise config errors") {
    SynthParams p;
    p.trade_prob = 1.5;
    CHECK_THROWS_AS(generate_synthetic_day(1, 100, Regime::ascending, p), ConfigError);
  }
  SUBCASE("mixed days carry ground-truth regime segments") {
    SynthParams p;
    const std::vector<std::pair<Regime, std::size_t>> segs = {
        {Regime::ascending, 300}, {Regime::descending, 300}, {Regime::oscillating, 400}};
    DayStream day = generate_mixed_day(23, segs, p);
    REQUIRE(day.regimes.size() == 3);
    CHECK(day.regimes[0].end_tick == 300);
    CHECK(day.regimes[2].begin_tick == 600);
    CHECK(day.snapshots.size() == 1000);
  }
}

TEST_CASE("dataset round-trips through csv files") {
  SynthParams p;
  p.trade_prob = 0.05;
  Dataset ds;
  ds.days.push_back(generate_synthetic_day(31, 300, Regime::ascending, p, "d0", Split::train));
  ds.days.push_back(generate_synthetic_day(32, 300, Regime::descending, p, "d1", Split::test));

  const fs::path dir = fs::temp_directory_path() / "lobwm_ds_test";
  fs::remove_all(dir);
  save_dataset(ds, dir.string());
  const Dataset back = load_dataset((dir / "manifest.json").string());

  REQUIRE(back.days.size() == 2);
  CHECK(back.days[0].id == "d0");
  CHECK(back.days[0].split == Split::train);
  CHECK(back.days[1].split == Split::test);
  CHECK(back.days[0].mid_series() == ds.days[0].mid_series());
  REQUIRE(back.days[1].trades.size() == ds.days[1].trades.size());
  for (std::size_t i = 0; i < back.days[1].trades.size(); ++i) {
    CHECK(back.days[1].trades[i].tick == ds.days[1].trades[i].tick);
    CHECK(back.days[1].trades[i].price == ds.days[1].trades[i].price);
    CHECK(back.days[1].trades[i].quantity == ds.days[1].trades[i].quantity);
  }
  CHECK(back.days[0].regimes.size() == 1);
  CHECK(back.day_indices(Split::test) == std::vector<std::size_t>{1});
  fs::remove_all(dir);
}

TEST_CASE("a crossed-book row is reported with its line number") {
  const fs::path dir = fs::temp_directory_path() / "lobwm_bad_csv";
  fs::remove_all(dir);
  fs::create_directories(dir);
  {
    std::ofstream lob(dir / "bad_lob.csv");
    lob << "tick,ap1,ap2,ap3,as1,as2,as3,bp1,bp2,bp3,bs1,bs2,bs3\n";
    lob << "0,400.1,400.2,400.3,10,10,10,399.9,399.8,399.7,10,10,10\n";
    lob << "1,399.0,400.2,400.3,10,10,10,399.9,399.8,399.7,10,10,10\n";  // crossed
    std::ofstream trades(dir / "bad_trades.csv");
    trades << "tick,price,qty,dir\n";
    std::ofstream manifest(dir / "manifest.json");
    manifest << R"({"version":1,"days":[{"id":"bad","split":"train","lob":"bad_lob.csv","trades":"bad_trades.csv"}]})";
  }
  try {
    load_dataset((dir / "manifest.json").string());
    FAIL("expected IoError");
  } catch (const IoError& e) {
    CHECK(e.line() == 3);
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  fs::remove_all(dir);
}

TEST_CASE("io audit records dataset reads") {
  SynthParams p;
  Dataset ds;
  ds.days.push_back(generate_synthetic_day(41, 120, Regime::ascending, p, "aud", Split::train));
  const fs::path dir = fs::temp_directory_path() / "lobwm_audit_test";
  fs::remove_all(dir);
  save_dataset(ds, dir.string());

  io_audit::reset();
  CHECK(io_audit::entries().empty());
  load_dataset((dir / "manifest.json").string());
  CHECK(io_audit::bytes_read_matching("aud_lob.csv") > 0);
  CHECK(io_audit::bytes_read_matching("aud_trades.csv") > 0);
  CHECK(io_audit::bytes_read_matching("nonexistent") == 0);
  fs::remove_all(dir);
}
