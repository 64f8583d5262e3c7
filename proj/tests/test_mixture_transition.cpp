#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "lobwm/mixture.hpp"
#include "lobwm/world_transition.hpp"

using namespace lobwm;

namespace {

MixtureParams random_mixture(Rng& rng, std::size_t k, std::size_t m) {
  MixtureParams p;
  p.components = k;
  p.dim = m;
  p.weights.resize(k);
  double total = 0.0;
  for (double& w : p.weights) {
    w = rng.uniform(0.05, 1.0);
    total += w;
  }
  for (double& w : p.weights) w /= total;
  for (std::size_t i = 0; i < k * m; ++i) {
    p.means.push_back(rng.uniform(-2.0, 2.0));
    p.vars.push_back(rng.uniform(0.05, 1.5));
  }
  p.validate();
  return p;
}

}  // namespace

TEST_CASE("single Gaussian at its mean has the closed-form log density") {
  const std::size_t m = 3;
  MixtureParams p;
  p.components = 1;
  p.dim = m;
  p.weights = {1.0};
  p.means = {0.4, -1.2, 2.0};
  p.vars = {1.0, 1.0, 1.0};
  const double ll = log_likelihood(p, p.means);
  CHECK(ll == doctest::Approx(-0.5 * static_cast<double>(m) * std::log(2.0 * M_PI)).epsilon(1e-12));
}

TEST_CASE("duplicating a component with split weights leaves the density unchanged") {
  Rng rng(4);
  const MixtureParams p = random_mixture(rng, 1, 2);
  MixtureParams q;
  q.components = 2;
  q.dim = 2;
  q.weights = {0.5, 0.5};
  q.means = p.means;
  q.means.insert(q.means.end(), p.means.begin(), p.means.end());
  q.vars = p.vars;
  q.vars.insert(q.vars.end(), p.vars.begin(), p.vars.end());
  for (int i = 0; i < 50; ++i) {
    const std::vector<double> z = {rng.uniform(-3, 3), rng.uniform(-3, 3)};
    CHECK(log_likelihood(p, z) == doctest::Approx(log_likelihood(q, z)).epsilon(1e-12));
  }
}

TEST_CASE("log likelihood is invariant under component permutation") {
  Rng rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t k = 4, m = 3;
    const MixtureParams p = random_mixture(rng, k, m);
    std::vector<std::size_t> perm(k);
    for (std::size_t i = 0; i < k; ++i) perm[i] = i;
    rng.shuffle(perm);
    MixtureParams q;
    q.components = k;
    q.dim = m;
    q.weights.resize(k);
    q.means.resize(k * m);
    q.vars.resize(k * m);
    for (std::size_t i = 0; i < k; ++i) {
      q.weights[i] = p.weights[perm[i]];
      for (std::size_t d = 0; d < m; ++d) {
        q.means[i * m + d] = p.means[perm[i] * m + d];
        q.vars[i * m + d] = p.vars[perm[i] * m + d];
      }
    }
    std::vector<double> z(m);
    for (double& v : z) v = rng.uniform(-3, 3);
    CHECK(log_likelihood(p, z) == doctest::Approx(log_likelihood(q, z)).epsilon(1e-12));
  }
}

TEST_CASE("density integrates to one (Monte Carlo, m=2)") {
  MixtureParams p;
  p.components = 2;
  p.dim = 2;
  p.weights = {0.4, 0.6};
  p.means = {-1.0, 0.5, 1.2, -0.8};
  p.vars = {0.6, 0.9, 0.4, 1.1};
  p.validate();

  const double lo = -7.0, hi = 7.0;
  const double area = (hi - lo) * (hi - lo);
  Rng rng(99);
  const std::size_t n = 400000;
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::vector<double> z = {rng.uniform(lo, hi), rng.uniform(lo, hi)};
    acc += std::exp(log_likelihood(p, z));
  }
  const double integral = acc / static_cast<double>(n) * area;
  CHECK(std::abs(integral - 1.0) <= 0.02);
}

TEST_CASE("sampling collapses to the argmax-weight mean as temperature vanishes") {
  Rng rng(7);
  const MixtureParams p = random_mixture(rng, 3, 2);
  const std::size_t best = static_cast<std::size_t>(
      std::max_element(p.weights.begin(), p.weights.end()) - p.weights.begin());
  Rng srng(1);
  const auto z = sample(p, 1e-10, srng);
  for (std::size_t d = 0; d < p.dim; ++d)
    CHECK(z[d] == doctest::Approx(p.means[best * p.dim + d]).epsilon(1e-4));
}

TEST_CASE("empirical sample mean matches the mixture mean within 3 standard errors") {
  MixtureParams p;
  p.components = 2;
  p.dim = 1;
  p.weights = {0.3, 0.7};
  p.means = {-1.0, 2.0};
  p.vars = {0.25, 0.5};
  p.validate();
  const double mean = 0.3 * -1.0 + 0.7 * 2.0;
  const double second = 0.3 * (0.25 + 1.0) + 0.7 * (0.5 + 4.0);
  const double var = second - mean * mean;
  const std::size_t n = 100000;
  const double se = std::sqrt(var / static_cast<double>(n));

  Rng rng(123);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += sample(p, 1.0, rng)[0];
  const double emp = acc / static_cast<double>(n);
  CHECK(std::abs(emp - mean) <= 3.0 * se);
}

TEST_CASE("sampling is deterministic under a fixed rng seed") {
  Rng rng(11);
  const MixtureParams p = random_mixture(rng, 3, 4);
  Rng a(42), b(42);
  CHECK(sample(p, 1.0, a) == sample(p, 1.0, b));
}

TEST_CASE("component selection frequencies pass a chi-square test against the weights") {
  const std::vector<double> weights = {0.1, 0.2, 0.3, 0.4};
  const std::size_t n = 10000;
  Rng rng(2024);
  std::vector<std::size_t> counts(4, 0);
  for (std::size_t i = 0; i < n; ++i) ++counts[sample_component(weights, rng)];
  double chi2 = 0.0;
  for (std::size_t k = 0; k < 4; ++k) {
    const double expected = weights[k] * static_cast<double>(n);
    const double diff = static_cast<double>(counts[k]) - expected;
    chi2 += diff * diff / expected;
  }
  CHECK(chi2 < 11.345);  // df=3 critical value at alpha=0.01
}

TEST_CASE("invalid mixtures are rejected") {
  MixtureParams p;
  p.components = 2;
  p.dim = 1;
  p.weights = {0.7, 0.7};  // sums to 1.4
  p.means = {0.0, 1.0};
  p.vars = {1.0, 1.0};
  CHECK_THROWS_AS(p.validate(), ValidationError);
  p.weights = {0.5, 0.5};
  p.vars = {1.0, 0.0};  // zero variance
  CHECK_THROWS_AS(p.validate(), ValidationError);
}

// ------------------------------------------------------ transition model

namespace {

TransitionConfig small_config() {
  TransitionConfig cfg;
  cfg.latent_dim = 3;
  cfg.seq_len = 4;
  cfg.hidden = 24;
  cfg.components = 3;
  cfg.context_dim = 2;
  cfg.train.epochs = 50;
  cfg.train.lr = 4e-3;
  cfg.train.batch_size = 16;
  cfg.train.patience = 0;
  cfg.train.seed = 5;
  return cfg;
}

}  // namespace

TEST_CASE("every forward pass yields weights on the simplex and positive variances") {
  TransitionConfig cfg = small_config();
  TransitionModel model(cfg);
  Rng rng(3);
  for (int i = 0; i < 300; ++i) {
    std::vector<TransitionStep> history(cfg.seq_len);
    for (auto& step : history) {
      step.latent = {rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)};
      step.action_norm = rng.uniform(-1, 1);
      step.context = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
    }
    const MixtureParams p = model.predict(history);
    double total = 0.0;
    for (double w : p.weights) {
      CHECK(w >= 0.0);
      total += w;
    }
    CHECK(std::abs(total - 1.0) <= 1e-6);
    for (double v : p.vars) CHECK(v > 0.0);
  }
}

TEST_CASE("wrong history length is rejected") {
  TransitionModel model(small_config());
  std::vector<TransitionStep> history(2);  // config expects 4
  for (auto& s : history) {
    s.latent = {0.0, 0.0, 0.0};
    s.context = {0.0, 0.0};
  }
  CHECK_THROWS_AS(model.predict(history), ValidationError);
}

TEST_CASE("paper-shaped defaults") {
  CHECK(TransitionConfig{}.components == 5);
  CHECK(TransitionConfig{}.hidden == 128);
  CHECK(TransitionConfig{}.seq_len == 10);
  CHECK(TransitionConfig{}.latent_dim == 16);
}

TEST_CASE("trained on identity dynamics the dominant component tracks the last latent") {
  TransitionConfig cfg = small_config();
  Rng rng(17);

  // rows with z_next == z_state: the model must learn to copy the last step
  std::vector<LatentTransition> rows;
  for (int i = 0; i < 400; ++i) {
    LatentTransition r;
    r.z_state = {rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0, 1)};
    r.z_next = r.z_state;
    r.action_norm = rng.uniform(-1, 1);
    r.context = {rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)};
    rows.push_back(std::move(r));
  }
  auto samples = build_transition_sequences(rows, cfg);
  auto [train_set, val_set] = nn::split_train_val(std::move(samples), 0.15, 3);

  TransitionModel model(cfg);
  nn::MdnNllLoss loss(cfg.components, cfg.latent_dim);
  double init_nll = 0.0;
  for (const auto& [input, target] : val_set)
    init_nll += loss.value(model.net().forward(input), target);
  init_nll /= static_cast<double>(val_set.size());

  const auto fit = model.train(train_set, val_set);
  CHECK(fit.best_val < init_nll);  // NLL improved over initialization

  for (int trial = 0; trial < 20; ++trial) {
    std::vector<TransitionStep> history(cfg.seq_len);
    for (auto& step : history) {
      step.latent = {rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0, 1)};
      step.action_norm = rng.uniform(-1, 1);
      step.context = {rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)};
    }
    const MixtureParams p = model.predict(history);
    const std::size_t best = static_cast<std::size_t>(
        std::max_element(p.weights.begin(), p.weights.end()) - p.weights.begin());
    const auto& z_last = history.back().latent;
    for (std::size_t d = 0; d < cfg.latent_dim; ++d)
      CHECK(std::abs(p.means[best * cfg.latent_dim + d] - z_last[d]) < 0.05);
  }
}

TEST_CASE("recovers a known two-component mixture when inputs carry no signal") {
  TransitionConfig cfg;
  cfg.latent_dim = 1;
  cfg.seq_len = 2;
  cfg.hidden = 12;
  cfg.components = 2;
  cfg.context_dim = 1;
  cfg.train.epochs = 80;
  cfg.train.lr = 8e-3;
  cfg.train.batch_size = 32;
  cfg.train.patience = 0;
  cfg.train.seed = 7;

  const double true_w0 = 0.35, mu0 = -1.0, mu1 = 1.0, sd = 0.05;
  Rng rng(31);
  std::vector<nn::Sample> samples;
  for (int i = 0; i < 800; ++i) {
    Tensor input = Tensor::zeros({cfg.seq_len, cfg.input_dim()});  // constant zero inputs
    const double x = rng.bernoulli(true_w0) ? rng.normal(mu0, sd) : rng.normal(mu1, sd);
    samples.push_back({std::move(input), Tensor({1}, {x})});
  }

  TransitionModel model(cfg);
  model.train(samples, {});

  std::vector<TransitionStep> history(cfg.seq_len);
  for (auto& s : history) {
    s.latent = {0.0};
    s.context = {0.0};
  }
  MixtureParams p = model.predict(history);
  const std::size_t lo = p.means[0] < p.means[1] ? 0 : 1;
  const std::size_t hi = 1 - lo;
  CHECK(std::abs(p.means[lo] - mu0) < 0.1);
  CHECK(std::abs(p.means[hi] - mu1) < 0.1);
  CHECK(std::abs(p.weights[lo] - true_w0) < 0.1);
  CHECK(std::abs(p.weights[hi] - (1.0 - true_w0)) < 0.1);
}

TEST_CASE("transition checkpoints round-trip") {
  TransitionConfig cfg = small_config();
  TransitionModel model(cfg);
  const auto path = std::string("/tmp/lobwm_transition_test.json");
  model.save(path);
  TransitionModel back = TransitionModel::load(path);
  CHECK(back.config().components == cfg.components);
  CHECK(back.config().seq_len == cfg.seq_len);

  Rng rng(8);
  std::vector<TransitionStep> history(cfg.seq_len);
  for (auto& s : history) {
    s.latent = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    s.action_norm = 0.3;
    s.context = {0.1, -0.2};
  }
  const MixtureParams a = model.predict(history);
  const MixtureParams b = back.predict(history);
  CHECK(a.weights == b.weights);
  CHECK(a.means == b.means);
  CHECK(a.vars == b.vars);
}
