#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "lobwm/nn.hpp"

using namespace lobwm;
using nn::json;

namespace {

Tensor random_tensor(Rng& rng, std::initializer_list<std::size_t> shape, double lo = -1.0,
                     double hi = 1.0) {
  Tensor t = Tensor::zeros(shape);
  for (double& x : t.v) x = rng.uniform(lo, hi);
  return t;
}

}  // namespace

TEST_CASE("identity network returns its input") {
  nn::Network net(json::array());
  const Tensor x({3}, {1.0, -2.0, 0.5});
  CHECK(net.forward(x).v == x.v);
}

TEST_CASE("dense layer with zero params maps to zero") {
  nn::Network net(json::array({nn::dense(3, 2)}));
  const Tensor y = net.forward(Tensor({3}, {1.0, 2.0, 3.0}));
  CHECK(y.v == std::vector<double>{0.0, 0.0});
}

TEST_CASE("dense forward matches a hand-computed product") {
  // W = [[1,2],[3,4]], b = [0.5, -1], x = [1,1]
  nn::Network net(json::array({nn::dense(2, 2)}));
  net.set_params(std::vector<double>{1.0, 2.0, 3.0, 4.0, 0.5, -1.0});
  const Tensor y = net.forward(Tensor({2}, {1.0, 1.0}));
  CHECK(y.v[0] == doctest::Approx(3.5));
  CHECK(y.v[1] == doctest::Approx(6.0));
}

TEST_CASE("dense(1->1) square loss has the analytic gradient 2*w*x^2") {
  nn::Network net(json::array({nn::dense(1, 1)}));
  net.set_params(std::vector<double>{3.0, 0.0});  // w=3, b=0
  nn::MseLoss mse;
  const Tensor x({1}, {2.0});
  const Tensor target({1}, {0.0});
  net.zero_grad();
  const Tensor pred = net.forward(x);
  net.backward(mse.grad(pred, target));
  const auto grads = net.get_grads();
  CHECK(grads[0] == doctest::Approx(2.0 * 3.0 * 2.0 * 2.0));  // dL/dw = 2 w x^2
  CHECK(grads[1] == doctest::Approx(2.0 * 3.0 * 2.0));        // dL/db = 2 w x
}

TEST_CASE("zero loss gradient produces zero parameter gradients") {
  nn::Network net(json::array({nn::dense(3, 2), nn::tanh_act()}));
  net.init_params(5);
  net.zero_grad();
  net.forward(Tensor({3}, {0.3, -0.2, 0.9}));
  net.backward(Tensor::zeros({2}));
  for (double g : net.get_grads()) CHECK(g == 0.0);
}

TEST_CASE("finite-difference gradient check per layer kind") {
  Rng rng(42);
  const double tol = 1e-4, eps = 1e-5;

  auto check = [&](const json& spec, std::initializer_list<std::size_t> in_shape,
                   const nn::Loss& loss, const Tensor& target, std::uint64_t seed) {
    nn::Network net(spec);
    net.init_params(seed);
    const Tensor input = random_tensor(rng, in_shape);
    const double err = nn::grad_check(net, loss, input, target, eps);
    INFO("spec ", spec.dump(), " err=", err);
    CHECK(err < tol);
  };

  nn::MseLoss mse;
  SUBCASE("dense + sigmoid") {
    check(json::array({nn::dense(4, 3), nn::sigmoid()}), {4}, mse, random_tensor(rng, {3}), 1);
  }
  SUBCASE("conv1d") {
    check(json::array({nn::conv1d(2, 3, 3)}), {6, 2}, mse, random_tensor(rng, {6, 3}), 2);
  }
  SUBCASE("downsample inside a graph") {
    check(json::array({nn::dense(8, 8), nn::reshape(4, 2), nn::downsample2()}), {8}, mse,
          random_tensor(rng, {2, 2}), 3);
  }
  SUBCASE("upsample inside a graph") {
    check(json::array({nn::dense(8, 8), nn::reshape(4, 2), nn::upsample2()}), {8}, mse,
          random_tensor(rng, {8, 2}), 4);
  }
  SUBCASE("lstm full sequence, 3 steps") {
    check(json::array({nn::lstm(3, 4, false)}), {3, 3}, mse, random_tensor(rng, {3, 4}), 5);
  }
  SUBCASE("lstm last step only") {
    check(json::array({nn::lstm(3, 4, true)}), {4, 3}, mse, random_tensor(rng, {4}), 6);
  }
  SUBCASE("softmax head with cross-entropy") {
    nn::CrossEntropyLoss ce;
    check(json::array({nn::dense(4, 3), nn::softmax()}), {4}, ce, Tensor({1}, {1.0}), 7);
  }
  SUBCASE("exp head") {
    check(json::array({nn::dense(3, 3), nn::exp_head()}), {3}, mse, random_tensor(rng, {3}), 8);
  }
  SUBCASE("relu + tanh stack") {
    check(json::array({nn::dense(4, 5), nn::relu(), nn::dense(5, 2), nn::tanh_act()}), {4}, mse,
          random_tensor(rng, {2}), 9);
  }
}

TEST_CASE("finite-difference gradient check on composite graphs") {
  Rng rng(43);
  const double tol = 1e-4, eps = 1e-5;

  SUBCASE("conv autoencoder graph") {
    // 8x2 window, two conv/downsample stages, 3-dim bottleneck, mirrored decoder
    nn::Network net(json::array({
        nn::conv1d(2, 3, 3), nn::relu(), nn::downsample2(),
        nn::conv1d(3, 4, 3), nn::relu(), nn::downsample2(),
        nn::flatten(), nn::dense(8, 3),
        nn::dense(3, 8), nn::relu(), nn::reshape(2, 4),
        nn::upsample2(), nn::conv1d(4, 3, 3), nn::relu(),
        nn::upsample2(), nn::conv1d(3, 2, 3), nn::sigmoid(),
    }));
    net.init_params(11);
    const Tensor input = random_tensor(rng, {8, 2}, 0.0, 1.0);
    nn::MseLoss mse;
    CHECK(nn::grad_check(net, mse, input, input, eps) < tol);
  }

  SUBCASE("recurrent mixture-density graph with NLL loss") {
    const std::size_t k = 2, m = 2;
    nn::Network net(json::array({
        nn::lstm(4, 6, true), nn::dense(6, k + 2 * k * m), nn::mdn_head(k, m),
    }));
    net.init_params(12);
    nn::MdnNllLoss nll(k, m);
    CHECK(nn::grad_check(net, nll, random_tensor(rng, {3, 4}), random_tensor(rng, {m}), eps) < tol);
  }

  SUBCASE("recurrent regression graph") {
    nn::Network net(json::array({
        nn::lstm(3, 5, true), nn::dense(5, 4), nn::tanh_act(), nn::dense(4, 1),
    }));
    net.init_params(13);
    nn::MseLoss mse;
    CHECK(nn::grad_check(net, mse, random_tensor(rng, {2, 3}), random_tensor(rng, {1}), eps) < tol);
  }
}

TEST_CASE("softmax outputs sum to one and exp head is positive") {
  Rng rng(3);
  nn::Network smax(json::array({nn::softmax()}));
  nn::Network ex(json::array({nn::exp_head()}));
  for (int i = 0; i < 200; ++i) {
    const Tensor x = random_tensor(rng, {5}, -30.0, 30.0);
    const Tensor p = smax.forward(x);
    double total = 0.0;
    for (double e : p.v) {
      CHECK(e >= 0.0);
      total += e;
    }
    CHECK(std::abs(total - 1.0) <= 1e-9);
    for (double e : ex.forward(x).v) CHECK(e > 0.0);
  }
}

TEST_CASE("fit learns y = 2x with a closed-form check") {
  nn::Network net(json::array({nn::dense(1, 1)}));
  net.init_params(1);
  std::vector<nn::Sample> data;
  for (int i = -8; i <= 8; ++i) {
    const double x = 0.25 * i;
    data.push_back({Tensor({1}, {x}), Tensor({1}, {2.0 * x})});
  }
  nn::TrainConfig cfg;
  cfg.lr = 0.05;
  cfg.epochs = 300;
  cfg.batch_size = 4;
  cfg.patience = 0;  // run all epochs
  cfg.seed = 9;
  nn::MseLoss mse;
  nn::fit(net, data, {}, mse, cfg);
  const auto params = net.get_params();
  CHECK(std::abs(params[0] - 2.0) < 1e-2);
  CHECK(std::abs(params[1]) < 1e-2);
}

TEST_CASE("zero epochs leaves parameters untouched") {
  nn::Network net(json::array({nn::dense(2, 2)}));
  net.init_params(4);
  const auto before = net.get_params();
  nn::TrainConfig cfg;
  cfg.epochs = 0;
  nn::MseLoss mse;
  std::vector<nn::Sample> data = {{Tensor({2}, {1.0, 2.0}), Tensor({2}, {0.0, 0.0})}};
  const auto res = nn::fit(net, data, {}, mse, cfg);
  CHECK(net.get_params() == before);
  CHECK(res.train_loss.empty());
}

TEST_CASE("training is deterministic under a fixed seed") {
  auto run = [] {
    nn::Network net(json::array({nn::dense(2, 4), nn::relu(), nn::dense(4, 1)}));
    net.init_params(21);
    std::vector<nn::Sample> data;
    Rng rng(2);
    for (int i = 0; i < 32; ++i) {
      const Tensor x = random_tensor(rng, {2});
      data.push_back({x, Tensor({1}, {x.v[0] - 0.5 * x.v[1]})});
    }
    nn::TrainConfig cfg;
    cfg.lr = 0.01;
    cfg.epochs = 12;
    cfg.seed = 77;
    nn::MseLoss mse;
    return nn::fit(net, data, {}, mse, cfg).train_loss;
  };
  CHECK(run() == run());
}

TEST_CASE("best-so-far validation curve is monotone non-increasing") {
  nn::Network net(json::array({nn::dense(1, 4), nn::tanh_act(), nn::dense(4, 1)}));
  net.init_params(31);
  std::vector<nn::Sample> train, val;
  Rng rng(5);
  for (int i = 0; i < 40; ++i) {
    const Tensor x = random_tensor(rng, {1});
    nn::Sample s{x, Tensor({1}, {std::sin(3.0 * x.v[0])})};
    (i % 4 == 0 ? val : train).push_back(s);
  }
  nn::TrainConfig cfg;
  cfg.lr = 0.02;
  cfg.epochs = 20;
  cfg.seed = 3;
  nn::MseLoss mse;
  const auto res = nn::fit(net, train, val, mse, cfg);
  for (std::size_t i = 1; i < res.best_val_loss.size(); ++i)
    CHECK(res.best_val_loss[i] <= res.best_val_loss[i - 1]);
  CHECK(res.best_val == doctest::Approx(res.best_val_loss.back()));
}

TEST_CASE("divergent training reports the epoch") {
  nn::Network net(json::array({nn::dense(1, 1)}));
  net.init_params(1);
  std::vector<nn::Sample> data = {{Tensor({1}, {1.0}), Tensor({1}, {2.0})}};
  nn::TrainConfig cfg;
  cfg.lr = 1e12;
  cfg.optimizer = "sgd";
  cfg.clip_norm = 0.0;
  cfg.epochs = 50;
  cfg.patience = 0;
  nn::MseLoss mse;
  CHECK_THROWS_AS(nn::fit(net, data, {}, mse, cfg), TrainError);
}

TEST_CASE("checkpoint round-trip reproduces forward outputs exactly") {
  nn::Network net(json::array({nn::conv1d(2, 3, 3), nn::relu(), nn::downsample2(), nn::flatten(),
                               nn::dense(6, 4), nn::softmax()}));
  net.init_params(99);
  Rng rng(8);
  const Tensor x = random_tensor(rng, {4, 2});
  const Tensor y0 = net.forward(x);

  const auto path = std::filesystem::temp_directory_path() / "lobwm_ckpt_test.json";
  nn::save_network(net, path.string(), {{"note", "test"}});
  auto loaded = nn::load_network(path.string());
  CHECK(loaded.meta.at("note") == "test");
  CHECK(loaded.net.spec() == net.spec());
  const Tensor y1 = loaded.net.forward(x);
  CHECK(y0.v == y1.v);  // bit-exact
  std::filesystem::remove(path);
}

TEST_CASE("shape mismatches are rejected") {
  nn::Network net(json::array({nn::dense(3, 2)}));
  CHECK_THROWS_AS(net.forward(Tensor({2}, {1.0, 2.0})), ValidationError);
  nn::Network conv(json::array({nn::conv1d(2, 2, 3)}));
  CHECK_THROWS_AS(conv.forward(Tensor({4}, {1.0, 2.0, 3.0, 4.0})), ValidationError);
}
