#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "lobwm/rng.hpp"
#include "lobwm/tensor.hpp"

// Minimal differentiable-computation kernel: dense, 1-D convolution,
// stride-2 average downsampling, x2 nearest upsampling, an LSTM layer,
// sigmoid/tanh/relu/softmax/exp heads and a mixture-density head, with
// MSE / cross-entropy / mixture-NLL losses, SGD-momentum and Adam
// optimizers, and finite-difference gradient checking.

namespace lobwm::nn {

using json = nlohmann::json;

class Layer {
public:
  virtual ~Layer() = default;
  virtual std::string kind() const = 0;
  virtual Tensor forward(const Tensor& x) = 0;
  virtual Tensor backward(const Tensor& grad_out) = 0;  // accumulates param grads
  virtual std::size_t param_count() const { return 0; }
  virtual double* param_data() { return nullptr; }
  virtual double* grad_data() { return nullptr; }
  virtual void init_params(Rng&) {}
  virtual json spec() const = 0;
};

// Layer spec builders. A network spec is a json array of these.
json dense(std::size_t in, std::size_t out);
json conv1d(std::size_t in_ch, std::size_t out_ch, std::size_t kernel);
json downsample2();
json upsample2();
json lstm(std::size_t in, std::size_t hidden, bool last_only);
json sigmoid();
json tanh_act();
json relu();
json softmax();
json exp_head();
json mdn_head(std::size_t components, std::size_t dim);
json flatten();
json reshape(std::size_t rows, std::size_t cols);

std::unique_ptr<Layer> make_layer(const json& spec);

class Network {
public:
  Network() = default;
  explicit Network(const json& spec_array);

  Network(const Network& o);
  Network& operator=(const Network& o);
  Network(Network&&) = default;
  Network& operator=(Network&&) = default;

  void init_params(std::uint64_t seed);

  Tensor forward(const Tensor& x) { return forward_range(x, 0, layers_.size()); }
  Tensor forward_range(const Tensor& x, std::size_t from, std::size_t to);
  // Backward through the whole stack; returns grad w.r.t. the input.
  Tensor backward(const Tensor& loss_grad);

  void zero_grad();
  std::size_t param_count() const;
  std::size_t layer_count() const { return layers_.size(); }
  Layer& layer(std::size_t i) { return *layers_[i]; }
  const Layer& layer(std::size_t i) const { return *layers_[i]; }

  std::vector<double> get_params() const;
  void set_params(std::span<const double> flat);
  std::vector<double> get_grads() const;

  // Visits (param, grad, count) per parameterized layer, in layer order.
  void for_each_param(const std::function<void(double*, double*, std::size_t)>& fn);

  double grad_norm() const;
  void clip_grad_norm(double max_norm);

  json spec() const;

private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

// --- losses ---

class Loss {
public:
  virtual ~Loss() = default;
  virtual std::string kind() const = 0;
  virtual double value(const Tensor& pred, const Tensor& target) const = 0;
  virtual Tensor grad(const Tensor& pred, const Tensor& target) const = 0;
};

// Mean squared error over all elements.
class MseLoss : public Loss {
public:
  std::string kind() const override { return "mse"; }
  double value(const Tensor& pred, const Tensor& target) const override;
  Tensor grad(const Tensor& pred, const Tensor& target) const override;
};

// Categorical cross-entropy. pred: probability vector, target: {1} class index.
class CrossEntropyLoss : public Loss {
public:
  std::string kind() const override { return "cross_entropy"; }
  double value(const Tensor& pred, const Tensor& target) const override;
  Tensor grad(const Tensor& pred, const Tensor& target) const override;
};

// Negative log-likelihood of a diagonal-Gaussian mixture. pred is the
// mdn_head output [weights(K), means(K*m), vars(K*m)], target is {m}.
class MdnNllLoss : public Loss {
public:
  MdnNllLoss(std::size_t components, std::size_t dim) : k_(components), m_(dim) {}
  std::string kind() const override { return "mdn_nll"; }
  double value(const Tensor& pred, const Tensor& target) const override;
  Tensor grad(const Tensor& pred, const Tensor& target) const override;

private:
  std::size_t k_, m_;
};

std::unique_ptr<Loss> make_loss(const std::string& kind, std::size_t components = 0,
                                std::size_t dim = 0);

// --- optimizers ---

class Optimizer {
public:
  virtual ~Optimizer() = default;
  virtual void step(Network& net) = 0;
};

class SgdMomentum : public Optimizer {
public:
  explicit SgdMomentum(double lr, double momentum = 0.9) : lr_(lr), mu_(momentum) {}
  void step(Network& net) override;

private:
  double lr_, mu_;
  std::vector<double> velocity_;
};

class Adam : public Optimizer {
public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}
  void step(Network& net) override;

private:
  double lr_, b1_, b2_, eps_;
  std::vector<double> m_, v_;
  long t_ = 0;
};

std::unique_ptr<Optimizer> make_optimizer(const std::string& kind, double lr);

// --- training ---

struct TrainConfig {
  double lr = 1e-3;
  std::size_t batch_size = 32;
  std::size_t epochs = 30;
  std::size_t patience = 8;      // early stop after this many non-improving epochs
  double clip_norm = 5.0;        // 0 disables clipping
  std::uint64_t seed = 1;
  std::string optimizer = "adam";  // "adam" | "sgd"

  void validate() const;
};

struct FitResult {
  std::vector<double> train_loss;     // per epoch
  std::vector<double> val_loss;       // per epoch
  std::vector<double> best_val_loss;  // best-so-far, monotone non-increasing
  std::size_t best_epoch = 0;
  double best_val = 0.0;
  std::size_t epochs_run = 0;
};

using Sample = std::pair<Tensor, Tensor>;  // (input, target)

FitResult fit(Network& net, const std::vector<Sample>& train, const std::vector<Sample>& val,
              const Loss& loss, const TrainConfig& cfg);

// Splits samples into (train, val) with a seeded shuffle.
std::pair<std::vector<Sample>, std::vector<Sample>> split_train_val(std::vector<Sample> samples,
                                                                    double val_fraction,
                                                                    std::uint64_t seed);

// --- gradient checking ---

// Max over parameters of |analytic - central difference| / (|analytic| + |fd| + 1e-12).
double grad_check(Network& net, const Loss& loss, const Tensor& input, const Tensor& target,
                  double epsilon = 1e-5);

// --- checkpoints ---

void save_network(const Network& net, const std::string& path, const json& meta = json::object());

struct LoadedNetwork {
  Network net;
  json meta;
};
LoadedNetwork load_network(const std::string& path);

}  // namespace lobwm::nn
