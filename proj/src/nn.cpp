#include "lobwm/nn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "lobwm/kernels.hpp"

namespace lobwm::nn {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw ValidationError(msg);
}

double sigmoid_fn(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// ---------------------------------------------------------------- dense

class DenseLayer : public Layer {
public:
  DenseLayer(std::size_t in, std::size_t out) : in_(in), out_(out) {
    require(in > 0 && out > 0, "dense: dims must be positive");
    params_.assign(out_ * in_ + out_, 0.0);
    grads_.assign(params_.size(), 0.0);
  }

  std::string kind() const override { return "dense"; }

  Tensor forward(const Tensor& x) override {
    require(x.rank() == 1 && x.size() == in_,
            "dense: expected input {" + std::to_string(in_) + "}, got " + x.shape_str());
    x_ = x;
    Tensor y = Tensor::zeros({out_});
    kern::matvec(w(), x.v.data(), y.v.data(), out_, in_);
    kern::axpy(1.0, b(), y.v.data(), out_);
    return y;
  }

  Tensor backward(const Tensor& g) override {
    require(g.size() == out_, "dense: bad grad shape");
    kern::ger_acc(1.0, g.v.data(), x_.v.data(), gw(), out_, in_);
    kern::axpy(1.0, g.v.data(), gb(), out_);
    Tensor gx = Tensor::zeros({in_});
    kern::matvec_t_acc(w(), g.v.data(), gx.v.data(), out_, in_);
    return gx;
  }

  std::size_t param_count() const override { return params_.size(); }
  double* param_data() override { return params_.data(); }
  double* grad_data() override { return grads_.data(); }

  void init_params(Rng& rng) override {
    const double a = 1.0 / std::sqrt(static_cast<double>(in_));
    for (std::size_t i = 0; i < out_ * in_; ++i) params_[i] = rng.uniform(-a, a);
    for (std::size_t i = 0; i < out_; ++i) params_[out_ * in_ + i] = 0.0;
  }

  json spec() const override { return {{"kind", "dense"}, {"in", in_}, {"out", out_}}; }

private:
  double* w() { return params_.data(); }
  double* b() { return params_.data() + out_ * in_; }
  double* gw() { return grads_.data(); }
  double* gb() { return grads_.data() + out_ * in_; }

  std::size_t in_, out_;
  std::vector<double> params_, grads_;
  Tensor x_;
};

// ---------------------------------------------------------------- conv1d

// Same-padded stride-1 convolution over the time axis of a {T, C} input.
// Weight rows are contiguous k*C_in spans, so the inner loops are plain
// dot/axpy over contiguous memory.
class Conv1dLayer : public Layer {
public:
  Conv1dLayer(std::size_t in_ch, std::size_t out_ch, std::size_t kernel)
      : cin_(in_ch), cout_(out_ch), k_(kernel) {
    require(kernel % 2 == 1, "conv1d: kernel must be odd");
    require(in_ch > 0 && out_ch > 0, "conv1d: channels must be positive");
    params_.assign(cout_ * k_ * cin_ + cout_, 0.0);
    grads_.assign(params_.size(), 0.0);
  }

  std::string kind() const override { return "conv1d"; }

  Tensor forward(const Tensor& x) override {
    require(x.rank() == 2 && x.shape[1] == cin_,
            "conv1d: expected {T," + std::to_string(cin_) + "}, got " + x.shape_str());
    x_ = x;
    const std::size_t t_len = x.shape[0];
    const std::size_t pad = (k_ - 1) / 2;
    Tensor y = Tensor::zeros({t_len, cout_});
    for (std::size_t t = 0; t < t_len; ++t) {
      const std::size_t lo = t >= pad ? 0 : pad - t;
      const std::size_t hi = std::min(k_, t_len + pad - t);
      const std::size_t len = (hi - lo) * cin_;
      const double* xs = x.v.data() + (t + lo - pad) * cin_;
      for (std::size_t oc = 0; oc < cout_; ++oc) {
        y.at(t, oc) = kern::dot(w() + (oc * k_ + lo) * cin_, xs, len) + b()[oc];
      }
    }
    return y;
  }

  Tensor backward(const Tensor& g) override {
    const std::size_t t_len = x_.shape[0];
    require(g.rank() == 2 && g.shape[0] == t_len && g.shape[1] == cout_, "conv1d: bad grad shape");
    const std::size_t pad = (k_ - 1) / 2;
    Tensor gx = Tensor::zeros({t_len, cin_});
    for (std::size_t t = 0; t < t_len; ++t) {
      const std::size_t lo = t >= pad ? 0 : pad - t;
      const std::size_t hi = std::min(k_, t_len + pad - t);
      const std::size_t len = (hi - lo) * cin_;
      const double* xs = x_.v.data() + (t + lo - pad) * cin_;
      double* gxs = gx.v.data() + (t + lo - pad) * cin_;
      for (std::size_t oc = 0; oc < cout_; ++oc) {
        const double go = g.at(t, oc);
        kern::axpy(go, xs, gw() + (oc * k_ + lo) * cin_, len);
        kern::axpy(go, w() + (oc * k_ + lo) * cin_, gxs, len);
        gb()[oc] += go;
      }
    }
    return gx;
  }

  std::size_t param_count() const override { return params_.size(); }
  double* param_data() override { return params_.data(); }
  double* grad_data() override { return grads_.data(); }

  void init_params(Rng& rng) override {
    const double a = 1.0 / std::sqrt(static_cast<double>(k_ * cin_));
    for (std::size_t i = 0; i < cout_ * k_ * cin_; ++i) params_[i] = rng.uniform(-a, a);
    for (std::size_t i = 0; i < cout_; ++i) params_[cout_ * k_ * cin_ + i] = 0.0;
  }

  json spec() const override {
    return {{"kind", "conv1d"}, {"in_ch", cin_}, {"out_ch", cout_}, {"kernel", k_}};
  }

private:
  double* w() { return params_.data(); }
  double* b() { return params_.data() + cout_ * k_ * cin_; }
  double* gw() { return grads_.data(); }
  double* gb() { return grads_.data() + cout_ * k_ * cin_; }

  std::size_t cin_, cout_, k_;
  std::vector<double> params_, grads_;
  Tensor x_;
};

// ------------------------------------------------------- down/upsample

class Downsample2Layer : public Layer {
public:
  std::string kind() const override { return "downsample2"; }

  Tensor forward(const Tensor& x) override {
    require(x.rank() == 2, "downsample2: expected rank-2 input");
    require(x.shape[0] % 2 == 0, "downsample2: time length must be even");
    in_shape_ = x.shape;
    const std::size_t t_len = x.shape[0] / 2, c = x.shape[1];
    Tensor y = Tensor::zeros({t_len, c});
    for (std::size_t t = 0; t < t_len; ++t)
      for (std::size_t j = 0; j < c; ++j)
        y.at(t, j) = 0.5 * (x.at(2 * t, j) + x.at(2 * t + 1, j));
    return y;
  }

  Tensor backward(const Tensor& g) override {
    Tensor gx = Tensor::zeros(in_shape_);
    const std::size_t t_len = g.shape[0], c = g.shape[1];
    for (std::size_t t = 0; t < t_len; ++t)
      for (std::size_t j = 0; j < c; ++j) {
        gx.at(2 * t, j) = 0.5 * g.at(t, j);
        gx.at(2 * t + 1, j) = 0.5 * g.at(t, j);
      }
    return gx;
  }

  json spec() const override { return {{"kind", "downsample2"}}; }

private:
  std::vector<std::size_t> in_shape_;
};

class Upsample2Layer : public Layer {
public:
  std::string kind() const override { return "upsample2"; }

  Tensor forward(const Tensor& x) override {
    require(x.rank() == 2, "upsample2: expected rank-2 input");
    const std::size_t t_len = x.shape[0], c = x.shape[1];
    Tensor y = Tensor::zeros({2 * t_len, c});
    for (std::size_t t = 0; t < t_len; ++t)
      for (std::size_t j = 0; j < c; ++j) {
        y.at(2 * t, j) = x.at(t, j);
        y.at(2 * t + 1, j) = x.at(t, j);
      }
    return y;
  }

  Tensor backward(const Tensor& g) override {
    const std::size_t t_len = g.shape[0] / 2, c = g.shape[1];
    Tensor gx = Tensor::zeros({t_len, c});
    for (std::size_t t = 0; t < t_len; ++t)
      for (std::size_t j = 0; j < c; ++j) gx.at(t, j) = g.at(2 * t, j) + g.at(2 * t + 1, j);
    return gx;
  }

  json spec() const override { return {{"kind", "upsample2"}}; }
};

// ---------------------------------------------------------------- lstm

class LstmLayer : public Layer {
public:
  LstmLayer(std::size_t in, std::size_t hidden, bool last_only)
      : in_(in), h_(hidden), last_only_(last_only) {
    require(in > 0 && hidden > 0, "lstm: dims must be positive");
    params_.assign(4 * h_ * in_ + 4 * h_ * h_ + 4 * h_, 0.0);
    grads_.assign(params_.size(), 0.0);
  }

  std::string kind() const override { return "lstm"; }

  Tensor forward(const Tensor& x) override {
    require(x.rank() == 2 && x.shape[1] == in_,
            "lstm: expected {T," + std::to_string(in_) + "}, got " + x.shape_str());
    x_ = x;
    const std::size_t t_len = x.shape[0];
    hs_ = Tensor::zeros({t_len, h_});
    cs_ = Tensor::zeros({t_len, h_});
    gates_ = Tensor::zeros({t_len, 4 * h_});  // post-activation i,f,g,o
    tanh_c_ = Tensor::zeros({t_len, h_});

    std::vector<double> pre(4 * h_);
    std::vector<double> h_prev(h_, 0.0), c_prev(h_, 0.0);
    for (std::size_t t = 0; t < t_len; ++t) {
      kern::matvec(wx(), x.v.data() + t * in_, pre.data(), 4 * h_, in_);
      kern::matvec_acc(wh(), h_prev.data(), pre.data(), 4 * h_, h_);
      kern::axpy(1.0, b(), pre.data(), 4 * h_);
      double* gt = gates_.v.data() + t * 4 * h_;
      for (std::size_t j = 0; j < h_; ++j) {
        const double gi = sigmoid_fn(pre[j]);
        const double gf = sigmoid_fn(pre[h_ + j]);
        const double gg = std::tanh(pre[2 * h_ + j]);
        const double go = sigmoid_fn(pre[3 * h_ + j]);
        gt[j] = gi;
        gt[h_ + j] = gf;
        gt[2 * h_ + j] = gg;
        gt[3 * h_ + j] = go;
        const double c = gf * c_prev[j] + gi * gg;
        const double tc = std::tanh(c);
        cs_.at(t, j) = c;
        tanh_c_.at(t, j) = tc;
        hs_.at(t, j) = go * tc;
      }
      for (std::size_t j = 0; j < h_; ++j) {
        h_prev[j] = hs_.at(t, j);
        c_prev[j] = cs_.at(t, j);
      }
    }
    if (last_only_) {
      Tensor y = Tensor::zeros({h_});
      for (std::size_t j = 0; j < h_; ++j) y.v[j] = hs_.at(t_len - 1, j);
      return y;
    }
    return hs_;
  }

  Tensor backward(const Tensor& g) override {
    const std::size_t t_len = x_.shape[0];
    Tensor gout;
    if (last_only_) {
      require(g.size() == h_, "lstm: bad grad shape");
      gout = Tensor::zeros({t_len, h_});
      for (std::size_t j = 0; j < h_; ++j) gout.at(t_len - 1, j) = g.v[j];
    } else {
      require(g.rank() == 2 && g.shape[0] == t_len && g.shape[1] == h_, "lstm: bad grad shape");
      gout = g;
    }

    Tensor gx = Tensor::zeros({t_len, in_});
    std::vector<double> dh(h_, 0.0), dc(h_, 0.0), dpre(4 * h_);
    for (std::size_t t = t_len; t-- > 0;) {
      const double* gt = gates_.v.data() + t * 4 * h_;
      for (std::size_t j = 0; j < h_; ++j) dh[j] += gout.at(t, j);
      for (std::size_t j = 0; j < h_; ++j) {
        const double gi = gt[j], gf = gt[h_ + j], gg = gt[2 * h_ + j], go = gt[3 * h_ + j];
        const double tc = tanh_c_.at(t, j);
        const double c_prev = t > 0 ? cs_.at(t - 1, j) : 0.0;
        const double dct = dc[j] + dh[j] * go * (1.0 - tc * tc);
        dpre[j] = dct * gg * gi * (1.0 - gi);                 // input gate
        dpre[h_ + j] = dct * c_prev * gf * (1.0 - gf);        // forget gate
        dpre[2 * h_ + j] = dct * gi * (1.0 - gg * gg);        // candidate
        dpre[3 * h_ + j] = dh[j] * tc * go * (1.0 - go);      // output gate
        dc[j] = dct * gf;
      }
      kern::ger_acc(1.0, dpre.data(), x_.v.data() + t * in_, gwx(), 4 * h_, in_);
      if (t > 0) kern::ger_acc(1.0, dpre.data(), hs_.v.data() + (t - 1) * h_, gwh(), 4 * h_, h_);
      kern::axpy(1.0, dpre.data(), gb(), 4 * h_);
      kern::matvec_t_acc(wx(), dpre.data(), gx.v.data() + t * in_, 4 * h_, in_);
      std::fill(dh.begin(), dh.end(), 0.0);
      if (t > 0) kern::matvec_t_acc(wh(), dpre.data(), dh.data(), 4 * h_, h_);
    }
    return gx;
  }

  std::size_t param_count() const override { return params_.size(); }
  double* param_data() override { return params_.data(); }
  double* grad_data() override { return grads_.data(); }

  void init_params(Rng& rng) override {
    const double ax = 1.0 / std::sqrt(static_cast<double>(in_));
    const double ah = 1.0 / std::sqrt(static_cast<double>(h_));
    for (std::size_t i = 0; i < 4 * h_ * in_; ++i) params_[i] = rng.uniform(-ax, ax);
    for (std::size_t i = 0; i < 4 * h_ * h_; ++i) params_[4 * h_ * in_ + i] = rng.uniform(-ah, ah);
    double* bias = b();
    for (std::size_t i = 0; i < 4 * h_; ++i) bias[i] = 0.0;
    for (std::size_t j = 0; j < h_; ++j) bias[h_ + j] = 1.0;  // forget-gate bias
  }

  json spec() const override {
    return {{"kind", "lstm"}, {"in", in_}, {"hidden", h_}, {"last_only", last_only_}};
  }

private:
  double* wx() { return params_.data(); }
  double* wh() { return params_.data() + 4 * h_ * in_; }
  double* b() { return params_.data() + 4 * h_ * in_ + 4 * h_ * h_; }
  double* gwx() { return grads_.data(); }
  double* gwh() { return grads_.data() + 4 * h_ * in_; }
  double* gb() { return grads_.data() + 4 * h_ * in_ + 4 * h_ * h_; }

  std::size_t in_, h_;
  bool last_only_;
  std::vector<double> params_, grads_;
  Tensor x_, hs_, cs_, gates_, tanh_c_;
};

// ---------------------------------------------------------- activations

class ElementwiseLayer : public Layer {
public:
  Tensor forward(const Tensor& x) override {
    y_ = x;
    apply(y_);
    return y_;
  }
  Tensor backward(const Tensor& g) override {
    Tensor gx = g;
    for (std::size_t i = 0; i < gx.size(); ++i) gx.v[i] = g.v[i] * deriv_from_output(y_.v[i]);
    return gx;
  }

protected:
  virtual void apply(Tensor& t) const = 0;
  virtual double deriv_from_output(double y) const = 0;
  Tensor y_;
};

class SigmoidLayer : public ElementwiseLayer {
public:
  std::string kind() const override { return "sigmoid"; }
  json spec() const override { return {{"kind", "sigmoid"}}; }

protected:
  void apply(Tensor& t) const override {
    for (double& x : t.v) x = sigmoid_fn(x);
  }
  double deriv_from_output(double y) const override { return y * (1.0 - y); }
};

class TanhLayer : public ElementwiseLayer {
public:
  std::string kind() const override { return "tanh"; }
  json spec() const override { return {{"kind", "tanh"}}; }

protected:
  void apply(Tensor& t) const override {
    for (double& x : t.v) x = std::tanh(x);
  }
  double deriv_from_output(double y) const override { return 1.0 - y * y; }
};

class ReluLayer : public ElementwiseLayer {
public:
  std::string kind() const override { return "relu"; }
  json spec() const override { return {{"kind", "relu"}}; }

protected:
  void apply(Tensor& t) const override {
    for (double& x : t.v) x = x > 0.0 ? x : 0.0;
  }
  double deriv_from_output(double y) const override { return y > 0.0 ? 1.0 : 0.0; }
};

class ExpLayer : public ElementwiseLayer {
public:
  std::string kind() const override { return "exp"; }
  json spec() const override { return {{"kind", "exp"}}; }

protected:
  void apply(Tensor& t) const override {
    for (double& x : t.v) x = std::exp(x);
  }
  double deriv_from_output(double y) const override { return y; }
};

class SoftmaxLayer : public Layer {
public:
  std::string kind() const override { return "softmax"; }

  Tensor forward(const Tensor& x) override {
    require(x.rank() == 1, "softmax: expected rank-1 input");
    y_ = x;
    const double mx = *std::max_element(x.v.begin(), x.v.end());
    double total = 0.0;
    for (double& e : y_.v) {
      e = std::exp(e - mx);
      total += e;
    }
    for (double& e : y_.v) e /= total;
    return y_;
  }

  Tensor backward(const Tensor& g) override {
    const double gy = kern::dot(g.v.data(), y_.v.data(), g.size());
    Tensor gx = g;
    for (std::size_t i = 0; i < gx.size(); ++i) gx.v[i] = y_.v[i] * (g.v[i] - gy);
    return gx;
  }

  json spec() const override { return {{"kind", "softmax"}}; }

private:
  Tensor y_;
};

// Mixture-density head: splits a raw (K + 2*K*m) vector into softmaxed
// weights, identity means and exp variances. Validates the simplex and
// positivity invariants on every forward.
class MdnHeadLayer : public Layer {
public:
  static constexpr double kVarFloor = 1e-6;

  MdnHeadLayer(std::size_t components, std::size_t dim) : k_(components), m_(dim) {
    require(k_ > 0 && m_ > 0, "mdn_head: K and m must be positive");
  }

  std::string kind() const override { return "mdn_head"; }

  Tensor forward(const Tensor& x) override {
    require(x.rank() == 1 && x.size() == k_ + 2 * k_ * m_,
            "mdn_head: expected {" + std::to_string(k_ + 2 * k_ * m_) + "}, got " + x.shape_str());
    y_ = x;
    // weights: softmax over the first K entries
    const double mx = *std::max_element(x.v.begin(), x.v.begin() + k_);
    double total = 0.0;
    for (std::size_t i = 0; i < k_; ++i) {
      y_.v[i] = std::exp(x.v[i] - mx);
      total += y_.v[i];
    }
    double wsum = 0.0;
    for (std::size_t i = 0; i < k_; ++i) {
      y_.v[i] /= total;
      wsum += y_.v[i];
    }
    // variances: exp with a floor
    for (std::size_t i = k_ + k_ * m_; i < y_.size(); ++i) y_.v[i] = std::exp(x.v[i]) + kVarFloor;
    require(std::abs(wsum - 1.0) <= 1e-6, "mdn_head: weights do not sum to 1");
    for (std::size_t i = k_ + k_ * m_; i < y_.size(); ++i)
      require(y_.v[i] > 0.0, "mdn_head: non-positive variance");
    return y_;
  }

  Tensor backward(const Tensor& g) override {
    Tensor gx = g;
    double gy = 0.0;
    for (std::size_t i = 0; i < k_; ++i) gy += g.v[i] * y_.v[i];
    for (std::size_t i = 0; i < k_; ++i) gx.v[i] = y_.v[i] * (g.v[i] - gy);
    for (std::size_t i = k_ + k_ * m_; i < g.size(); ++i) gx.v[i] = g.v[i] * (y_.v[i] - kVarFloor);
    return gx;
  }

  json spec() const override { return {{"kind", "mdn_head"}, {"components", k_}, {"dim", m_}}; }

private:
  std::size_t k_, m_;
  Tensor y_;
};

// ------------------------------------------------------- shape plumbing

class FlattenLayer : public Layer {
public:
  std::string kind() const override { return "flatten"; }
  Tensor forward(const Tensor& x) override {
    in_shape_ = x.shape;
    Tensor y = x;
    y.shape = {x.size()};
    return y;
  }
  Tensor backward(const Tensor& g) override {
    Tensor gx = g;
    gx.shape = in_shape_;
    return gx;
  }
  json spec() const override { return {{"kind", "flatten"}}; }

private:
  std::vector<std::size_t> in_shape_;
};

class ReshapeLayer : public Layer {
public:
  ReshapeLayer(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols) {}
  std::string kind() const override { return "reshape"; }
  Tensor forward(const Tensor& x) override {
    require(x.size() == rows_ * cols_, "reshape: element count mismatch");
    in_shape_ = x.shape;
    Tensor y = x;
    y.shape = {rows_, cols_};
    return y;
  }
  Tensor backward(const Tensor& g) override {
    Tensor gx = g;
    gx.shape = in_shape_;
    return gx;
  }
  json spec() const override { return {{"kind", "reshape"}, {"rows", rows_}, {"cols", cols_}}; }

private:
  std::size_t rows_, cols_;
  std::vector<std::size_t> in_shape_;
};

}  // namespace

// ------------------------------------------------------------ factories

json dense(std::size_t in, std::size_t out) { return {{"kind", "dense"}, {"in", in}, {"out", out}}; }
json conv1d(std::size_t in_ch, std::size_t out_ch, std::size_t kernel) {
  return {{"kind", "conv1d"}, {"in_ch", in_ch}, {"out_ch", out_ch}, {"kernel", kernel}};
}
json downsample2() { return {{"kind", "downsample2"}}; }
json upsample2() { return {{"kind", "upsample2"}}; }
json lstm(std::size_t in, std::size_t hidden, bool last_only) {
  return {{"kind", "lstm"}, {"in", in}, {"hidden", hidden}, {"last_only", last_only}};
}
json sigmoid() { return {{"kind", "sigmoid"}}; }
json tanh_act() { return {{"kind", "tanh"}}; }
json relu() { return {{"kind", "relu"}}; }
json softmax() { return {{"kind", "softmax"}}; }
json exp_head() { return {{"kind", "exp"}}; }
json mdn_head(std::size_t components, std::size_t dim) {
  return {{"kind", "mdn_head"}, {"components", components}, {"dim", dim}};
}
json flatten() { return {{"kind", "flatten"}}; }
json reshape(std::size_t rows, std::size_t cols) {
  return {{"kind", "reshape"}, {"rows", rows}, {"cols", cols}};
}

std::unique_ptr<Layer> make_layer(const json& s) {
  const std::string kind = s.at("kind").get<std::string>();
  if (kind == "dense") return std::make_unique<DenseLayer>(s.at("in"), s.at("out"));
  if (kind == "conv1d")
    return std::make_unique<Conv1dLayer>(s.at("in_ch"), s.at("out_ch"), s.at("kernel"));
  if (kind == "downsample2") return std::make_unique<Downsample2Layer>();
  if (kind == "upsample2") return std::make_unique<Upsample2Layer>();
  if (kind == "lstm") return std::make_unique<LstmLayer>(s.at("in"), s.at("hidden"), s.at("last_only"));
  if (kind == "sigmoid") return std::make_unique<SigmoidLayer>();
  if (kind == "tanh") return std::make_unique<TanhLayer>();
  if (kind == "relu") return std::make_unique<ReluLayer>();
  if (kind == "softmax") return std::make_unique<SoftmaxLayer>();
  if (kind == "exp") return std::make_unique<ExpLayer>();
  if (kind == "mdn_head") return std::make_unique<MdnHeadLayer>(s.at("components"), s.at("dim"));
  if (kind == "flatten") return std::make_unique<FlattenLayer>();
  if (kind == "reshape") return std::make_unique<ReshapeLayer>(s.at("rows"), s.at("cols"));
  throw ConfigError("unknown layer kind: " + kind);
}

// -------------------------------------------------------------- network

Network::Network(const json& spec_array) {
  if (!spec_array.is_array()) throw ConfigError("network spec must be a json array");
  for (const auto& s : spec_array) layers_.push_back(make_layer(s));
}

Network::Network(const Network& o) {
  for (const auto& l : o.layers_) layers_.push_back(make_layer(l->spec()));
  set_params(o.get_params());
}

Network& Network::operator=(const Network& o) {
  if (this != &o) {
    layers_.clear();
    for (const auto& l : o.layers_) layers_.push_back(make_layer(l->spec()));
    set_params(o.get_params());
  }
  return *this;
}

void Network::init_params(std::uint64_t seed) {
  Rng rng(seed);
  for (auto& l : layers_) l->init_params(rng);
}

Tensor Network::forward_range(const Tensor& x, std::size_t from, std::size_t to) {
  if (from > to || to > layers_.size()) throw Error("forward_range: bad layer range");
  Tensor cur = x;
  for (std::size_t i = from; i < to; ++i) {
    cur = layers_[i]->forward(cur);
    if (!cur.all_finite())
      throw Error("non-finite values after " + layers_[i]->kind() + " forward");
  }
  return cur;
}

Tensor Network::backward(const Tensor& loss_grad) {
  Tensor g = loss_grad;
  for (std::size_t i = layers_.size(); i-- > 0;) g = layers_[i]->backward(g);
  return g;
}

void Network::zero_grad() {
  for (auto& l : layers_) {
    if (l->param_count() > 0) std::fill_n(l->grad_data(), l->param_count(), 0.0);
  }
}

std::size_t Network::param_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l->param_count();
  return n;
}

std::vector<double> Network::get_params() const {
  std::vector<double> flat;
  flat.reserve(param_count());
  for (const auto& l : layers_) {
    auto* mut = const_cast<Layer*>(l.get());
    if (mut->param_count() > 0)
      flat.insert(flat.end(), mut->param_data(), mut->param_data() + mut->param_count());
  }
  return flat;
}

void Network::set_params(std::span<const double> flat) {
  if (flat.size() != param_count()) throw ValidationError("set_params: size mismatch");
  std::size_t off = 0;
  for (auto& l : layers_) {
    if (l->param_count() > 0) {
      std::copy_n(flat.data() + off, l->param_count(), l->param_data());
      off += l->param_count();
    }
  }
}

std::vector<double> Network::get_grads() const {
  std::vector<double> flat;
  flat.reserve(param_count());
  for (const auto& l : layers_) {
    auto* mut = const_cast<Layer*>(l.get());
    if (mut->param_count() > 0)
      flat.insert(flat.end(), mut->grad_data(), mut->grad_data() + mut->param_count());
  }
  return flat;
}

void Network::for_each_param(const std::function<void(double*, double*, std::size_t)>& fn) {
  for (auto& l : layers_) {
    if (l->param_count() > 0) fn(l->param_data(), l->grad_data(), l->param_count());
  }
}

double Network::grad_norm() const {
  double total = 0.0;
  for (const auto& l : layers_) {
    auto* mut = const_cast<Layer*>(l.get());
    if (mut->param_count() > 0) total += kern::sumsq(mut->grad_data(), mut->param_count());
  }
  return std::sqrt(total);
}

void Network::clip_grad_norm(double max_norm) {
  if (max_norm <= 0.0) return;
  const double norm = grad_norm();
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for_each_param([&](double*, double* g, std::size_t n) { kern::scal(scale, g, n); });
  }
}

json Network::spec() const {
  json arr = json::array();
  for (const auto& l : layers_) arr.push_back(l->spec());
  return arr;
}

// --------------------------------------------------------------- losses

double MseLoss::value(const Tensor& pred, const Tensor& target) const {
  if (!pred.same_shape(target)) throw ValidationError("mse: shape mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred.v[i] - target.v[i];
    total += d * d;
  }
  return total / static_cast<double>(pred.size());
}

Tensor MseLoss::grad(const Tensor& pred, const Tensor& target) const {
  Tensor g = pred;
  const double scale = 2.0 / static_cast<double>(pred.size());
  for (std::size_t i = 0; i < g.size(); ++i) g.v[i] = scale * (pred.v[i] - target.v[i]);
  return g;
}

double CrossEntropyLoss::value(const Tensor& pred, const Tensor& target) const {
  const auto cls = static_cast<std::size_t>(target.v.at(0));
  if (cls >= pred.size()) throw ValidationError("cross_entropy: class index out of range");
  return -std::log(std::max(pred.v[cls], 1e-12));
}

Tensor CrossEntropyLoss::grad(const Tensor& pred, const Tensor& target) const {
  const auto cls = static_cast<std::size_t>(target.v.at(0));
  Tensor g = Tensor::zeros(pred.shape);
  g.v[cls] = -1.0 / std::max(pred.v[cls], 1e-12);
  return g;
}

namespace {

// Shared by value/grad: per-component log densities and the stabilized total.
struct MdnEval {
  std::vector<double> comp_log;  // log w_k + log N_k
  double log_prob;
};

MdnEval mdn_eval(const Tensor& pred, const Tensor& z, std::size_t k, std::size_t m) {
  if (pred.size() != k + 2 * k * m) throw ValidationError("mdn_nll: bad prediction size");
  if (z.size() != m) throw ValidationError("mdn_nll: bad target size");
  const double* w = pred.v.data();
  const double* mu = pred.v.data() + k;
  const double* var = pred.v.data() + k + k * m;
  MdnEval ev;
  ev.comp_log.resize(k);
  for (std::size_t c = 0; c < k; ++c) {
    double lg = std::log(std::max(w[c], 1e-300));
    for (std::size_t d = 0; d < m; ++d) {
      const double v = var[c * m + d];
      const double diff = z.v[d] - mu[c * m + d];
      lg += -0.5 * (std::log(2.0 * M_PI * v) + diff * diff / v);
    }
    ev.comp_log[c] = lg;
  }
  const double mx = *std::max_element(ev.comp_log.begin(), ev.comp_log.end());
  double acc = 0.0;
  for (double lg : ev.comp_log) acc += std::exp(lg - mx);
  ev.log_prob = mx + std::log(acc);
  return ev;
}

}  // namespace

double MdnNllLoss::value(const Tensor& pred, const Tensor& target) const {
  return -mdn_eval(pred, target, k_, m_).log_prob;
}

Tensor MdnNllLoss::grad(const Tensor& pred, const Tensor& target) const {
  const MdnEval ev = mdn_eval(pred, target, k_, m_);
  const double* w = pred.v.data();
  const double* mu = pred.v.data() + k_;
  const double* var = pred.v.data() + k_ + k_ * m_;
  Tensor g = Tensor::zeros(pred.shape);
  for (std::size_t c = 0; c < k_; ++c) {
    const double resp = std::exp(ev.comp_log[c] - ev.log_prob);
    if (resp == 0.0) continue;
    g.v[c] = -resp / std::max(w[c], 1e-300);
    for (std::size_t d = 0; d < m_; ++d) {
      const double v = var[c * m_ + d];
      const double diff = target.v[d] - mu[c * m_ + d];
      g.v[k_ + c * m_ + d] = -resp * diff / v;
      g.v[k_ + k_ * m_ + c * m_ + d] = resp * 0.5 * (1.0 / v - diff * diff / (v * v));
    }
  }
  return g;
}

std::unique_ptr<Loss> make_loss(const std::string& kind, std::size_t components, std::size_t dim) {
  if (kind == "mse") return std::make_unique<MseLoss>();
  if (kind == "cross_entropy") return std::make_unique<CrossEntropyLoss>();
  if (kind == "mdn_nll") return std::make_unique<MdnNllLoss>(components, dim);
  throw ConfigError("unknown loss kind: " + kind);
}

// ------------------------------------------------------------ optimizers

void SgdMomentum::step(Network& net) {
  if (velocity_.empty()) velocity_.assign(net.param_count(), 0.0);
  std::size_t off = 0;
  net.for_each_param([&](double* p, double* g, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
      velocity_[off + i] = mu_ * velocity_[off + i] - lr_ * g[i];
      p[i] += velocity_[off + i];
    }
    off += n;
  });
}

void Adam::step(Network& net) {
  if (m_.empty()) {
    m_.assign(net.param_count(), 0.0);
    v_.assign(net.param_count(), 0.0);
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(b1_, t_);
  const double bc2 = 1.0 - std::pow(b2_, t_);
  std::size_t off = 0;
  net.for_each_param([&](double* p, double* g, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
      m_[off + i] = b1_ * m_[off + i] + (1.0 - b1_) * g[i];
      v_[off + i] = b2_ * v_[off + i] + (1.0 - b2_) * g[i] * g[i];
      p[i] -= lr_ * (m_[off + i] / bc1) / (std::sqrt(v_[off + i] / bc2) + eps_);
    }
    off += n;
  });
}

std::unique_ptr<Optimizer> make_optimizer(const std::string& kind, double lr) {
  if (kind == "adam") return std::make_unique<Adam>(lr);
  if (kind == "sgd") return std::make_unique<SgdMomentum>(lr);
  throw ConfigError("unknown optimizer kind: " + kind);
}

// -------------------------------------------------------------- training

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("train: lr must be positive");
  if (batch_size == 0) throw ConfigError("train: batch_size must be positive");
  if (clip_norm < 0.0) throw ConfigError("train: clip_norm must be non-negative");
}

FitResult fit(Network& net, const std::vector<Sample>& train, const std::vector<Sample>& val,
              const Loss& loss, const TrainConfig& cfg) {
  cfg.validate();
  FitResult res;
  if (cfg.epochs == 0) return res;
  if (train.empty()) throw ConfigError("fit: empty training set");

  Rng rng(cfg.seed);
  auto opt = make_optimizer(cfg.optimizer, cfg.lr);
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::vector<double> best_params = net.get_params();
  double best = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(start + cfg.batch_size, order.size());
      net.zero_grad();
      double batch_loss = 0.0;
      for (std::size_t i = start; i < end; ++i) {
        const auto& [input, target] = train[order[i]];
        const Tensor pred = net.forward(input);
        batch_loss += loss.value(pred, target);
        net.backward(loss.grad(pred, target));
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      if (!std::isfinite(batch_loss))
        throw TrainError("training diverged: non-finite loss", static_cast<long>(epoch));
      net.for_each_param([&](double*, double* g, std::size_t n) { kern::scal(inv, g, n); });
      if (cfg.clip_norm > 0.0) net.clip_grad_norm(cfg.clip_norm);
      opt->step(net);
      epoch_loss += batch_loss;
    }
    epoch_loss /= static_cast<double>(train.size());

    double vloss = epoch_loss;
    if (!val.empty()) {
      vloss = 0.0;
      for (const auto& [input, target] : val) vloss += loss.value(net.forward(input), target);
      vloss /= static_cast<double>(val.size());
    }
    if (!std::isfinite(vloss))
      throw TrainError("training diverged: non-finite validation loss", static_cast<long>(epoch));

    res.train_loss.push_back(epoch_loss);
    res.val_loss.push_back(vloss);
    if (vloss < best) {
      best = vloss;
      best_params = net.get_params();
      res.best_epoch = epoch;
      since_best = 0;
    } else {
      ++since_best;
    }
    res.best_val_loss.push_back(best);
    res.epochs_run = epoch + 1;
    if (cfg.patience > 0 && since_best > cfg.patience) break;
  }

  net.set_params(best_params);
  res.best_val = best;
  return res;
}

std::pair<std::vector<Sample>, std::vector<Sample>> split_train_val(std::vector<Sample> samples,
                                                                    double val_fraction,
                                                                    std::uint64_t seed) {
  if (val_fraction < 0.0 || val_fraction >= 1.0)
    throw ConfigError("split_train_val: fraction must be in [0,1)");
  Rng rng(seed);
  rng.shuffle(samples);
  const auto n_val = static_cast<std::size_t>(std::floor(val_fraction * samples.size()));
  std::vector<Sample> val(samples.end() - n_val, samples.end());
  samples.resize(samples.size() - n_val);
  return {std::move(samples), std::move(val)};
}

// -------------------------------------------------------- gradient check

double grad_check(Network& net, const Loss& loss, const Tensor& input, const Tensor& target,
                  double epsilon) {
  net.zero_grad();
  const Tensor pred = net.forward(input);
  net.backward(loss.grad(pred, target));
  const std::vector<double> analytic = net.get_grads();

  std::vector<double*> slots;
  net.for_each_param([&](double* p, double*, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) slots.push_back(p + i);
  });

  double worst = 0.0;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const double orig = *slots[i];
    *slots[i] = orig + epsilon;
    const double up = loss.value(net.forward(input), target);
    *slots[i] = orig - epsilon;
    const double down = loss.value(net.forward(input), target);
    *slots[i] = orig;
    const double fd = (up - down) / (2.0 * epsilon);
    const double rel = std::abs(analytic[i] - fd) / (std::abs(analytic[i]) + std::abs(fd) + 1e-12);
    worst = std::max(worst, rel);
  }
  return worst;
}

// ------------------------------------------------------------ checkpoints

void save_network(const Network& net, const std::string& path, const json& meta) {
  json j;
  j["version"] = 1;
  j["format"] = "lobwm-network";
  j["spec"] = net.spec();
  j["params"] = net.get_params();
  j["meta"] = meta;
  std::ofstream out(path);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path);
  out << j.dump(1) << "\n";
  if (!out) throw IoError("failed writing checkpoint: " + path);
}

LoadedNetwork load_network(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw IoError("malformed checkpoint " + path + ": " + e.what());
  }
  if (!j.contains("version")) throw IoError("checkpoint missing version field: " + path);
  if (j.at("version").get<int>() != 1)
    throw IoError("unsupported checkpoint version in " + path);
  LoadedNetwork out;
  out.net = Network(j.at("spec"));
  const auto params = j.at("params").get<std::vector<double>>();
  out.net.set_params(params);
  out.meta = j.value("meta", json::object());
  return out;
}

}  // namespace lobwm::nn
