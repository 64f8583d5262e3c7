#include "lobwm/lob_data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "lobwm/common.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace lobwm {

const char* to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "?";
}

const char* to_string(Regime r) {
  switch (r) {
    case Regime::ascending: return "ascending";
    case Regime::descending: return "descending";
    case Regime::oscillating: return "oscillating";
  }
  return "?";
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "validation") return Split::validation;
  if (s == "test") return Split::test;
  throw ConfigError("unknown split: " + s);
}

Regime regime_from_string(const std::string& s) {
  if (s == "ascending") return Regime::ascending;
  if (s == "descending") return Regime::descending;
  if (s == "oscillating") return Regime::oscillating;
  throw ConfigError("unknown regime: " + s);
}

// ------------------------------------------------------------- snapshots

void validate_snapshot(const LobSnapshot& s) {
  const std::size_t levels = s.ask_prices.size();
  if (levels == 0 || s.bid_prices.size() != levels || s.ask_sizes.size() != levels ||
      s.bid_sizes.size() != levels)
    throw ValidationError("snapshot: inconsistent level counts");
  for (std::size_t i = 0; i < levels; ++i) {
    if (!(s.ask_prices[i] > 0.0) || !(s.bid_prices[i] > 0.0))
      throw ValidationError("snapshot: prices must be positive");
    if (s.ask_sizes[i] < 0.0 || s.bid_sizes[i] < 0.0)
      throw ValidationError("snapshot: sizes must be non-negative");
  }
  for (std::size_t i = 1; i < levels; ++i) {
    if (!(s.ask_prices[i] > s.ask_prices[i - 1]))
      throw ValidationError("snapshot: ask prices must be strictly increasing");
    if (!(s.bid_prices[i] < s.bid_prices[i - 1]))
      throw ValidationError("snapshot: bid prices must be strictly decreasing");
  }
  if (!(s.ask_prices[0] > s.bid_prices[0]))
    throw ValidationError("snapshot: crossed or zero-spread book");
}

double mid_price(const LobSnapshot& s) {
  validate_snapshot(s);
  return (s.ask_prices[0] + s.bid_prices[0]) / 2.0;
}

// --------------------------------------------------------------- windows

Tensor LobWindow::features() const {
  const std::size_t w = width(), l = levels();
  Tensor t = Tensor::zeros({w, 4 * l});
  for (std::size_t r = 0; r < w; ++r) {
    const LobSnapshot& s = snapshots[r];
    for (std::size_t i = 0; i < l; ++i) {
      t.at(r, i) = s.ask_prices[i];
      t.at(r, l + i) = s.ask_sizes[i];
      t.at(r, 2 * l + i) = s.bid_prices[i];
      t.at(r, 3 * l + i) = s.bid_sizes[i];
    }
  }
  return t;
}

LobWindow normalize_window(const LobWindow& w) {
  if (w.normalized) throw ValidationError("normalize_window: window already normalized");
  if (w.snapshots.empty()) throw ValidationError("normalize_window: empty window");
  const std::size_t l = w.levels();
  LobWindow out = w;
  out.normalized = true;

  // column accessor over the 4L features, in feature order
  auto column = [&](LobSnapshot& s, std::size_t c) -> double& {
    if (c < l) return s.ask_prices[c];
    if (c < 2 * l) return s.ask_sizes[c - l];
    if (c < 3 * l) return s.bid_prices[c - 2 * l];
    return s.bid_sizes[c - 3 * l];
  };

  for (std::size_t c = 0; c < 4 * l; ++c) {
    double lo = column(out.snapshots[0], c), hi = lo;
    for (auto& s : out.snapshots) {
      lo = std::min(lo, column(s, c));
      hi = std::max(hi, column(s, c));
    }
    const double range = hi - lo;
    for (auto& s : out.snapshots) {
      double& v = column(s, c);
      v = range == 0.0 ? 0.5 : (v - lo) / range;
    }
  }
  return out;
}

double avg_mid(const LobWindow& w) {
  if (w.normalized) throw ValidationError("avg_mid: requires a raw window");
  if (w.snapshots.empty()) throw ValidationError("avg_mid: empty window");
  double total = 0.0;
  for (const auto& s : w.snapshots) total += mid_price(s);
  return total / static_cast<double>(w.snapshots.size());
}

// ---------------------------------------------------------------- trades

QuantityNorm normalize_quantity(double q) {
  if (q < kQuantityLow || q > kQuantityHigh) return {0.0, true};
  return {(q - kQuantityLow) / (kQuantityHigh - kQuantityLow), false};
}

TradeContext TradeContext::from_prints(std::span<const TradePrint> prints, std::size_t capacity) {
  TradeContext ctx;
  ctx.slots.assign(capacity, TradePrint{});
  ctx.mask.assign(capacity, false);
  const std::size_t take = std::min(prints.size(), capacity);
  const std::size_t start = prints.size() - take;  // keep the most recent, chronological
  for (std::size_t i = 0; i < take; ++i) {
    ctx.slots[i] = prints[start + i];
    ctx.mask[i] = true;
  }
  return ctx;
}

std::size_t TradeContext::real_count() const {
  std::size_t n = 0;
  for (bool m : mask) n += m ? 1 : 0;
  return n;
}

// ------------------------------------------------------------ transitions

std::vector<double> DayStream::mid_series() const {
  std::vector<double> mids;
  mids.reserve(snapshots.size());
  for (const auto& s : snapshots) mids.push_back(mid_price(s));
  return mids;
}

std::vector<std::size_t> Dataset::day_indices(Split s) const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < days.size(); ++i)
    if (days[i].split == s) idx.push_back(i);
  return idx;
}

namespace {

LobWindow slice_window(const DayStream& day, std::size_t begin, std::size_t count) {
  LobWindow w;
  w.snapshots.assign(day.snapshots.begin() + begin, day.snapshots.begin() + begin + count);
  return w;
}

}  // namespace

std::vector<TradePrint> trades_in_range(const DayStream& day, std::int64_t lo, std::int64_t hi) {
  std::vector<TradePrint> out;
  for (const auto& t : day.trades) {
    if (t.tick < lo || t.tick >= hi) continue;
    if (normalize_quantity(t.quantity).excluded) continue;
    out.push_back(t);
  }
  return out;
}

AssembleResult assemble_transitions(const DayStream& day, std::size_t window_ticks,
                                    std::size_t context_capacity) {
  AssembleResult res;
  const auto w = static_cast<std::int64_t>(window_ticks);
  if (day.snapshots.size() < 2 * window_ticks) {
    res.day_too_short = true;
    return res;
  }
  const std::int64_t t0 = day.snapshots.front().tick;
  const std::int64_t t_end = day.snapshots.back().tick + 1;

  for (const auto& trade : day.trades) {
    if (normalize_quantity(trade.quantity).excluded) {
      ++res.skipped_outlier;
      continue;
    }
    const std::int64_t tau = trade.tick;
    if (tau - w < t0 || tau + w > t_end) {
      ++res.skipped_no_window;
      continue;
    }
    Transition tr;
    tr.action = trade;
    const auto state_begin = static_cast<std::size_t>(tau - w - t0);
    tr.state.window = slice_window(day, state_begin, window_ticks);
    tr.next_state.window = slice_window(day, state_begin + window_ticks, window_ticks);
    const auto state_ctx = trades_in_range(day, tau - w, tau);
    const auto next_ctx = trades_in_range(day, tau, tau + w);
    tr.state.context = TradeContext::from_prints(state_ctx, context_capacity);
    tr.next_state.context = TradeContext::from_prints(next_ctx, context_capacity);
    tr.delta_mid = avg_mid(tr.next_state.window) - avg_mid(tr.state.window);
    res.transitions.push_back(std::move(tr));
  }
  return res;
}

// ------------------------------------------------------------- generator

void SynthParams::validate() const {
  if (!(base_price > 0.0)) throw ConfigError("synth: base_price must be positive");
  if (drift < 0.0) throw ConfigError("synth: drift must be non-negative");
  if (noise_sigma < 0.0 || ou_sigma < 0.0) throw ConfigError("synth: sigmas must be non-negative");
  if (!(osc_period > 1.0)) throw ConfigError("synth: osc_period must exceed 1 tick");
  if (!(spread > 0.0) || !(level_gap > 0.0)) throw ConfigError("synth: spread/gap must be positive");
  if (!(depth_min > 0.0) || depth_max < depth_min) throw ConfigError("synth: bad depth bounds");
  if (trade_prob < 0.0 || trade_prob > 1.0) throw ConfigError("synth: trade_prob must be in [0,1]");
  if (outlier_prob < 0.0 || outlier_prob > 1.0)
    throw ConfigError("synth: outlier_prob must be in [0,1]");
  if (levels == 0) throw ConfigError("synth: need at least one level");
}

namespace {

struct GenState {
  double mid = 0.0;
  double ou = 0.0;
  double osc_anchor = 0.0;
  std::vector<double> log_depth;  // ask levels first, then bid levels
};

void emit_ticks(const SynthParams& p, Regime regime, std::size_t n_ticks, std::int64_t tick0,
                GenState& st, Rng& rng, DayStream& day) {
  const double ld_mu = std::log(p.depth_mean);
  const double ld_lo = std::log(p.depth_min), ld_hi = std::log(p.depth_max);
  if (st.log_depth.empty()) {
    st.log_depth.assign(2 * p.levels, 0.0);
    for (auto& ld : st.log_depth) ld = std::clamp(ld_mu + 0.5 * rng.normal(), ld_lo, ld_hi);
  }
  if (regime == Regime::oscillating) st.osc_anchor = st.mid;

  for (std::size_t i = 0; i < n_ticks; ++i) {
    const std::int64_t tick = tick0 + static_cast<std::int64_t>(i);
    switch (regime) {
      case Regime::ascending:
        st.mid += p.drift + p.noise_sigma * rng.normal();
        break;
      case Regime::descending:
        st.mid += -p.drift + p.noise_sigma * rng.normal();
        break;
      case Regime::oscillating:
        st.ou += -p.ou_theta * st.ou + p.ou_sigma * rng.normal();
        st.mid = st.osc_anchor +
                 p.osc_amplitude * std::sin(2.0 * M_PI * static_cast<double>(i + 1) / p.osc_period) +
                 st.ou;
        break;
    }
    st.mid = std::max(st.mid, p.spread);  // price floor

    LobSnapshot s;
    s.tick = tick;
    s.ask_prices.resize(p.levels);
    s.ask_sizes.resize(p.levels);
    s.bid_prices.resize(p.levels);
    s.bid_sizes.resize(p.levels);
    for (std::size_t lv = 0; lv < p.levels; ++lv) {
      s.ask_prices[lv] = st.mid + 0.5 * p.spread + static_cast<double>(lv) * p.level_gap;
      s.bid_prices[lv] = st.mid - 0.5 * p.spread - static_cast<double>(lv) * p.level_gap;
      double& ld_a = st.log_depth[lv];
      double& ld_b = st.log_depth[p.levels + lv];
      ld_a = std::clamp(ld_a + 0.02 * (ld_mu - ld_a) + p.depth_log_step * rng.normal(), ld_lo, ld_hi);
      ld_b = std::clamp(ld_b + 0.02 * (ld_mu - ld_b) + p.depth_log_step * rng.normal(), ld_lo, ld_hi);
      s.ask_sizes[lv] = std::round(std::exp(ld_a));
      s.bid_sizes[lv] = std::round(std::exp(ld_b));
    }
    day.snapshots.push_back(std::move(s));

    if (rng.bernoulli(p.trade_prob)) {
      TradePrint t;
      t.tick = tick;
      t.price = st.mid;
      t.direction = rng.bernoulli(0.5) ? 1 : -1;
      if (rng.bernoulli(p.outlier_prob)) {
        t.quantity = rng.bernoulli(0.5) ? static_cast<double>(rng.uniform_int(90) + 10)
                                        : static_cast<double>(rng.uniform_int(1000) + 1001);
      } else {
        t.quantity = static_cast<double>(rng.uniform_int(901) + 100);  // [100, 1000]
      }
      day.trades.push_back(t);
    }
  }
}

}  // namespace

DayStream generate_synthetic_day(std::uint64_t seed, std::size_t n_ticks, Regime regime,
                                 const SynthParams& params, std::string id, Split split) {
  const std::pair<Regime, std::size_t> seg{regime, n_ticks};
  return generate_mixed_day(seed, std::span(&seg, 1), params, std::move(id), split);
}

DayStream generate_mixed_day(std::uint64_t seed,
                             std::span<const std::pair<Regime, std::size_t>> segments,
                             const SynthParams& params, std::string id, Split split) {
  params.validate();
  std::size_t total = 0;
  for (const auto& [r, n] : segments) total += n;
  if (total < 2) throw ConfigError("synth: need at least 2 ticks");

  DayStream day;
  day.id = std::move(id);
  day.split = split;
  day.snapshots.reserve(total);

  Rng rng(seed);
  GenState st;
  st.mid = params.base_price;
  std::int64_t tick = 0;
  for (const auto& [regime, n] : segments) {
    if (n == 0) continue;
    day.regimes.push_back({regime, tick, tick + static_cast<std::int64_t>(n)});
    emit_ticks(params, regime, n, tick, st, rng, day);
    tick += static_cast<std::int64_t>(n);
  }
  return day;
}

// ----------------------------------------------------------------- files

namespace io_audit {

namespace {
std::vector<Entry>& store() {
  static std::vector<Entry> entries;
  return entries;
}
}  // namespace

void reset() { store().clear(); }
void record(const std::string& path, std::size_t bytes) { store().push_back({path, bytes}); }
std::vector<Entry> entries() { return store(); }

std::size_t bytes_read_matching(const std::string& substring) {
  std::size_t total = 0;
  for (const auto& e : store())
    if (e.path.find(substring) != std::string::npos) total += e.bytes;
  return total;
}

}  // namespace io_audit

namespace {

std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw IoError("failed to format double");
  return std::string(buf, ptr);
}

double parse_double(std::string_view sv, long line) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(sv.data(), sv.data() + sv.size(), v);
  if (ec != std::errc() || ptr != sv.data() + sv.size())
    throw IoError("bad numeric field '" + std::string(sv) + "'", line);
  return v;
}

std::int64_t parse_int(std::string_view sv, long line) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(sv.data(), sv.data() + sv.size(), v);
  if (ec != std::errc() || ptr != sv.data() + sv.size())
    throw IoError("bad integer field '" + std::string(sv) + "'", line);
  return v;
}

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  std::string content = ss.str();
  io_audit::record(path, content.size());
  return content;
}

constexpr const char* kLobHeader = "tick,ap1,ap2,ap3,as1,as2,as3,bp1,bp2,bp3,bs1,bs2,bs3";
constexpr const char* kTradesHeader = "tick,price,qty,dir";

void write_lob_csv(const DayStream& day, const std::string& path) {
  if (!day.snapshots.empty() && day.snapshots[0].ask_prices.size() != 3)
    throw IoError("lob csv format is fixed at 3 levels per side");
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << kLobHeader << "\n";
  for (const auto& s : day.snapshots) {
    out << s.tick;
    for (std::size_t i = 0; i < 3; ++i) out << ',' << format_double(s.ask_prices[i]);
    for (std::size_t i = 0; i < 3; ++i)
      out << ',' << static_cast<long long>(std::llround(s.ask_sizes[i]));
    for (std::size_t i = 0; i < 3; ++i) out << ',' << format_double(s.bid_prices[i]);
    for (std::size_t i = 0; i < 3; ++i)
      out << ',' << static_cast<long long>(std::llround(s.bid_sizes[i]));
    out << "\n";
  }
  if (!out) throw IoError("failed writing: " + path);
}

void write_trades_csv(const DayStream& day, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << kTradesHeader << "\n";
  for (const auto& t : day.trades) {
    out << t.tick << ',' << format_double(t.price) << ','
        << static_cast<long long>(std::llround(t.quantity)) << ','
        << (t.direction > 0 ? 'B' : 'S') << "\n";
  }
  if (!out) throw IoError("failed writing: " + path);
}

std::vector<LobSnapshot> read_lob_csv(const std::string& path) {
  const std::string content = read_file(path);
  std::vector<LobSnapshot> snaps;
  std::istringstream in(content);
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line_no == 1) {
      if (line != kLobHeader) throw IoError("unexpected lob csv header in " + path, 1);
      continue;
    }
    const auto f = split_csv(line);
    if (f.size() != 13) throw IoError("expected 13 fields in " + path, line_no);
    LobSnapshot s;
    s.tick = parse_int(f[0], line_no);
    s.ask_prices = {parse_double(f[1], line_no), parse_double(f[2], line_no),
                    parse_double(f[3], line_no)};
    s.ask_sizes = {parse_double(f[4], line_no), parse_double(f[5], line_no),
                   parse_double(f[6], line_no)};
    s.bid_prices = {parse_double(f[7], line_no), parse_double(f[8], line_no),
                    parse_double(f[9], line_no)};
    s.bid_sizes = {parse_double(f[10], line_no), parse_double(f[11], line_no),
                   parse_double(f[12], line_no)};
    try {
      validate_snapshot(s);
    } catch (const ValidationError& e) {
      throw IoError(std::string(e.what()) + " in " + path, line_no);
    }
    if (!snaps.empty() && s.tick != snaps.back().tick + 1)
      throw IoError("ticks must be contiguous ascending in " + path, line_no);
    snaps.push_back(std::move(s));
  }
  return snaps;
}

std::vector<TradePrint> read_trades_csv(const std::string& path) {
  const std::string content = read_file(path);
  std::vector<TradePrint> trades;
  std::istringstream in(content);
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line_no == 1) {
      if (line != kTradesHeader) throw IoError("unexpected trades csv header in " + path, 1);
      continue;
    }
    const auto f = split_csv(line);
    if (f.size() != 4) throw IoError("expected 4 fields in " + path, line_no);
    TradePrint t;
    t.tick = parse_int(f[0], line_no);
    t.price = parse_double(f[1], line_no);
    t.quantity = parse_double(f[2], line_no);
    if (!(t.quantity > 0.0)) throw IoError("trade quantity must be positive in " + path, line_no);
    if (f[3] == "B") t.direction = 1;
    else if (f[3] == "S") t.direction = -1;
    else throw IoError("trade direction must be B or S in " + path, line_no);
    if (!trades.empty() && t.tick < trades.back().tick)
      throw IoError("trade ticks must be non-decreasing in " + path, line_no);
    trades.push_back(t);
  }
  return trades;
}

}  // namespace

void save_dataset(const Dataset& ds, const std::string& dir) {
  fs::create_directories(dir);
  json manifest;
  manifest["version"] = 1;
  manifest["days"] = json::array();
  for (const auto& day : ds.days) {
    const std::string lob_name = day.id + "_lob.csv";
    const std::string trades_name = day.id + "_trades.csv";
    write_lob_csv(day, (fs::path(dir) / lob_name).string());
    write_trades_csv(day, (fs::path(dir) / trades_name).string());
    json regimes = json::array();
    for (const auto& seg : day.regimes)
      regimes.push_back(
          {{"regime", to_string(seg.regime)}, {"begin", seg.begin_tick}, {"end", seg.end_tick}});
    manifest["days"].push_back({{"id", day.id},
                                {"split", to_string(day.split)},
                                {"lob", lob_name},
                                {"trades", trades_name},
                                {"regimes", regimes}});
  }
  std::ofstream out(fs::path(dir) / "manifest.json");
  if (!out) throw IoError("cannot write manifest in " + dir);
  out << manifest.dump(1) << "\n";
}

namespace {

Dataset load_dataset_impl(const std::string& manifest_path, const Split* only) {
  const std::string content = read_file(manifest_path);
  json manifest;
  try {
    manifest = json::parse(content);
  } catch (const json::exception& e) {
    throw IoError("malformed manifest " + manifest_path + ": " + e.what());
  }
  if (manifest.value("version", 0) != 1)
    throw IoError("unsupported manifest version in " + manifest_path);

  const fs::path base = fs::path(manifest_path).parent_path();
  Dataset ds;
  for (const auto& d : manifest.at("days")) {
    DayStream day;
    day.id = d.at("id").get<std::string>();
    day.split = split_from_string(d.at("split").get<std::string>());
    if (only && day.split != *only) continue;  // skip without touching the files
    day.snapshots = read_lob_csv((base / d.at("lob").get<std::string>()).string());
    day.trades = read_trades_csv((base / d.at("trades").get<std::string>()).string());
    if (day.snapshots.empty()) throw IoError("day " + day.id + " has no snapshots");
    const std::int64_t t0 = day.snapshots.front().tick;
    const std::int64_t t1 = day.snapshots.back().tick;
    for (const auto& t : day.trades)
      if (t.tick < t0 || t.tick > t1)
        throw IoError("day " + day.id + " has a trade outside the snapshot tick range");
    for (const auto& seg : d.value("regimes", json::array()))
      day.regimes.push_back({regime_from_string(seg.at("regime").get<std::string>()),
                             seg.at("begin").get<std::int64_t>(),
                             seg.at("end").get<std::int64_t>()});
    ds.days.push_back(std::move(day));
  }
  return ds;
}

}  // namespace

Dataset load_dataset(const std::string& manifest_path) {
  return load_dataset_impl(manifest_path, nullptr);
}

Dataset load_dataset(const std::string& manifest_path, Split only) {
  return load_dataset_impl(manifest_path, &only);
}

}  // namespace lobwm
