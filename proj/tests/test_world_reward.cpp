#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "lobwm/latent_ae.hpp"
#include "lobwm/world_reward.hpp"

using namespace lobwm;

namespace {

LobSnapshot snap_with_mid(std::int64_t tick, double mid) {
  LobSnapshot s;
  s.tick = tick;
  s.ask_prices = {mid + 0.1, mid + 0.2, mid + 0.3};
  s.bid_prices = {mid - 0.1, mid - 0.2, mid - 0.3};
  s.ask_sizes = {100, 100, 100};
  s.bid_sizes = {100, 100, 100};
  return s;
}

LobWindow window_with_mids(const std::vector<double>& mids, std::int64_t tick0 = 0) {
  LobWindow w;
  for (std::size_t i = 0; i < mids.size(); ++i)
    w.snapshots.push_back(snap_with_mid(tick0 + static_cast<std::int64_t>(i), mids[i]));
  return w;
}

}  // namespace

TEST_CASE("position updates clamp at the capacity bounds") {
  CHECK(step_position({900, 1000}, +500).value == 1000);
  CHECK(step_position({0, 1000}, -300).value == -300);
  CHECK(step_position({-1000, 1000}, -100).value == -1000);
  CHECK(step_position({250, 1000}, 0).value == 250);
  CHECK(step_position({-900, 1000}, +250).value == -650);
}

TEST_CASE("position clamp holds over random action sequences") {
  Rng rng(12);
  Position po{0, 1000};
  for (int i = 0; i < 100000; ++i) {
    const long long qty = static_cast<long long>(rng.uniform_int(2001)) - 1000;
    po = step_position(po, qty);
    CHECK(po.value <= po.max);
    CHECK(po.value >= -po.max);
  }
}

TEST_CASE("replay reward is the average-mid change times the position") {
  const LobWindow w0 = window_with_mids({400.0, 400.0, 400.0});
  const LobWindow w1 = window_with_mids({400.1, 400.1, 400.1}, 3);
  CHECK(replay_reward(w0, w1, {200, 1000}) == doctest::Approx(20.0).epsilon(1e-9));
  CHECK(replay_reward(w0, w1, {0, 1000}) == 0.0);  // exactly zero position
  // descending pair with a long position loses money
  const LobWindow w2 = window_with_mids({399.5, 399.5, 399.5}, 6);
  CHECK(replay_reward(w1, w2, {300, 1000}) < 0.0);
}

TEST_CASE("episode reward sums equal the position-weighted mid telescoping") {
  SynthParams p;
  p.trade_prob = 0.0;
  const DayStream day = generate_synthetic_day(3, 400, Regime::oscillating, p);
  const auto windows = windows_of_day(day, 40);
  REQUIRE(windows.size() == 10);

  Rng rng(5);
  Position po{0, 1000};
  double total = 0.0, brute = 0.0;
  for (std::size_t i = 0; i + 1 < windows.size(); ++i) {
    const long long qty = (static_cast<long long>(rng.uniform_int(21)) - 10) * 100;
    po = step_position(po, qty);
    total += replay_reward(windows[i], windows[i + 1], po);
    brute += (avg_mid(windows[i + 1]) - avg_mid(windows[i])) * static_cast<double>(po.value);
  }
  CHECK(total == doctest::Approx(brute).epsilon(1e-12));

  // constant position telescopes to po * (last - first)
  Position held{700, 1000};
  double held_total = 0.0;
  for (std::size_t i = 0; i + 1 < windows.size(); ++i)
    held_total += replay_reward(windows[i], windows[i + 1], held);
  CHECK(held_total ==
        doctest::Approx(700.0 * (avg_mid(windows.back()) - avg_mid(windows.front()))).epsilon(1e-9));
}

TEST_CASE("reward squashing hits the recorded constants and stays monotone") {
  RewardBounds unit{0.0, 10.0, 0.0, 1.0};  // min-max target range [0,1]
  CHECK(squash_reward(5.0, unit) == doctest::Approx(0.6224593312018546).epsilon(1e-12));

  RewardBounds wide{0.0, 10.0, -6.0, 6.0};  // default range uses the sigmoid's full swing
  CHECK(squash_reward(5.0, wide) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(squash_reward(0.0, wide) == doctest::Approx(1.0 / (1.0 + std::exp(6.0))).epsilon(1e-12));

  Rng rng(9);
  for (int i = 0; i < 1000; ++i) {
    const double a = rng.uniform(-50, 50), b = rng.uniform(-50, 50);
    const double lo = std::min(a, b), hi = std::max(a, b);
    if (lo == hi) continue;
    const double s_lo = squash_reward(lo, wide), s_hi = squash_reward(hi, wide);
    CHECK(s_lo < s_hi);  // strictly monotone
    CHECK(s_lo > 0.0);
    CHECK(s_hi < 1.0);
  }
}

TEST_CASE("reward bounds cover both position signs") {
  const std::vector<double> deltas = {-0.2, 0.1, 0.5};
  const RewardBounds b = compute_reward_bounds(deltas, 1000.0);
  CHECK(b.lo == doctest::Approx(-500.0));
  CHECK(b.hi == doctest::Approx(500.0));
  CHECK(b.squash_lo == -6.0);
  CHECK(b.squash_hi == 6.0);
}

TEST_CASE("predicted reward is zero at zero position and linear in the position") {
  RewardModelConfig cfg;
  cfg.latent_dim = 4;
  cfg.lstm_units = 8;
  cfg.dense_units = 6;
  cfg.train.seed = 3;
  RewardModel model(cfg);
  const std::vector<double> z0 = {0.1, -0.2, 0.5, 0.9};
  const std::vector<double> z1 = {0.2, -0.1, 0.4, 0.8};
  CHECK(model.predict_reward(z0, z1, {0, 1000}) == 0.0);
  const double r1 = model.predict_reward(z0, z1, {400, 1000});
  const double r2 = model.predict_reward(z0, z1, {800, 1000});
  CHECK(r2 == doctest::Approx(2.0 * r1).epsilon(1e-12));
}

TEST_CASE("paper-shaped reward architecture: 128 recurrent units and a 40-unit dense layer") {
  RewardModelConfig cfg;        // defaults
  CHECK(cfg.lstm_units == 128);
  CHECK(cfg.dense_units == 40);
  RewardModel model(cfg);
  CHECK(model.net().layer(0).kind() == "lstm");
  CHECK(model.net().layer(0).spec().at("hidden") == 128);
  CHECK(model.net().layer(1).kind() == "dense");
  CHECK(model.net().layer(1).spec().at("out") == 40);
}

TEST_CASE("learns a mid change encoded in one latent coordinate") {
  RewardModelConfig cfg;
  cfg.latent_dim = 4;
  cfg.lstm_units = 16;
  cfg.dense_units = 8;
  cfg.train.epochs = 120;
  cfg.train.lr = 5e-3;
  cfg.train.batch_size = 32;
  cfg.train.patience = 0;
  cfg.train.seed = 11;

  Rng rng(21);
  std::vector<LatentTransition> rows;
  for (int i = 0; i < 500; ++i) {
    LatentTransition r;
    r.z_state = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    r.z_next = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    r.delta_mid = r.z_next[0] - r.z_state[0];
    rows.push_back(std::move(r));
  }
  auto samples = build_reward_samples(rows);
  auto [train_set, val_set] = nn::split_train_val(std::move(samples), 0.2, 5);

  RewardModel model(cfg);
  const double init_val = [&] {
    nn::MseLoss mse;
    double acc = 0.0;
    for (const auto& [input, target] : val_set) acc += mse.value(model.net().forward(input), target);
    return acc / static_cast<double>(val_set.size());
  }();
  const auto fit = model.train(train_set, val_set);
  CHECK(fit.best_val < init_val);
  CHECK(fit.best_val < 1e-3);
}

TEST_CASE("sign agreement with replay mid changes on held-out synthetic data") {
  // full path: synthesize days, train a small AE, encode transitions, train
  // the reward model on two days, check directional accuracy on a third
  SynthParams p;
  p.trade_prob = 0.12;
  p.osc_period = 160.0;
  p.osc_amplitude = 2.0;
  p.ou_sigma = 0.02;
  p.noise_sigma = 0.0;

  const std::size_t w = 16;
  Dataset ds;
  ds.days.push_back(generate_synthetic_day(100, 1600, Regime::oscillating, p, "t0", Split::train));
  ds.days.push_back(generate_synthetic_day(101, 1600, Regime::oscillating, p, "t1", Split::train));
  ds.days.push_back(generate_synthetic_day(102, 1600, Regime::oscillating, p, "h0", Split::test));

  AeConfig ac;
  ac.window = w;
  ac.features = 12;
  ac.latent_dim = 8;
  ac.channels0 = 8;
  ac.channels1 = 12;
  ac.channels2 = 16;
  ac.kernel = 3;
  ac.train.epochs = 12;
  ac.train.lr = 2e-3;
  ac.train.batch_size = 16;
  ac.train.patience = 0;
  ac.train.seed = 1;
  Autoencoder ae(ac);
  auto windows = build_window_samples(ds, Split::train, w);
  ae.train(windows, {});

  const auto encode_rows = [&](const DayStream& day) {
    std::vector<LatentTransition> rows;
    for (const auto& tr : assemble_transitions(day, w, 5).transitions) {
      LatentTransition r;
      r.z_state = ae.encode(normalize_window(tr.state.window));
      r.z_next = ae.encode(normalize_window(tr.next_state.window));
      r.delta_mid = tr.delta_mid;
      rows.push_back(std::move(r));
    }
    return rows;
  };

  std::vector<LatentTransition> train_rows;
  for (int d = 0; d < 2; ++d) {
    auto rows = encode_rows(ds.days[d]);
    train_rows.insert(train_rows.end(), rows.begin(), rows.end());
  }
  REQUIRE(train_rows.size() > 100);

  RewardModelConfig rc;
  rc.latent_dim = 8;
  rc.lstm_units = 24;
  rc.dense_units = 12;
  rc.train.epochs = 60;
  rc.train.lr = 3e-3;
  rc.train.batch_size = 32;
  rc.train.patience = 10;
  rc.train.seed = 2;
  RewardModel model(rc);
  model.train(build_reward_samples(train_rows), {});

  const auto held = encode_rows(ds.days[2]);
  REQUIRE(held.size() > 40);
  std::size_t agree = 0, counted = 0;
  for (const auto& r : held) {
    if (std::abs(r.delta_mid) < 1e-6) continue;  // no direction to call
    const double pred = model.predict_delta(r.z_state, r.z_next);
    if ((pred > 0) == (r.delta_mid > 0)) ++agree;
    ++counted;
  }
  REQUIRE(counted > 30);
  const double rate = static_cast<double>(agree) / static_cast<double>(counted);
  INFO("sign agreement ", rate);
  CHECK(rate >= 0.7);
}

TEST_CASE("reward checkpoints persist the squash bounds") {
  RewardModelConfig cfg;
  cfg.latent_dim = 4;
  cfg.lstm_units = 8;
  cfg.dense_units = 6;
  RewardModel model(cfg);
  RewardBounds b{-123.0, 456.0, -6.0, 6.0};
  const std::string path = "/tmp/lobwm_reward_test.json";
  model.save(path, b);
  auto loaded = load_reward_model(path);
  CHECK(loaded.bounds.lo == -123.0);
  CHECK(loaded.bounds.hi == 456.0);
  const std::vector<double> z0 = {0.1, 0.2, 0.3, 0.4}, z1 = {0.4, 0.3, 0.2, 0.1};
  CHECK(loaded.model.predict_delta(z0, z1) == model.predict_delta(z0, z1));
}
