#include "sfm/nn.hpp"

#include <cmath>

namespace sfm {

void validate(const TrainConfig& c) {
  if (!(c.learning_rate > 0.0))
    throw InvalidParameterError("train config: learning_rate must be > 0");
  if (c.adam_beta1 < 0.0 || c.adam_beta1 >= 1.0 || c.adam_beta2 < 0.0 ||
      c.adam_beta2 >= 1.0)
    throw InvalidParameterError("train config: betas must be in [0, 1)");
  if (c.batch_size < 1) throw InvalidParameterError("train config: batch_size must be >= 1");
  if (c.max_epochs < 0) throw InvalidParameterError("train config: max_epochs must be >= 0");
  if (!(c.adam_eps > 0.0)) throw InvalidParameterError("train config: adam_eps must be > 0");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},
          {"adam_eps", c.adam_eps},
          {"batch_size", c.batch_size},
          {"max_epochs", c.max_epochs},
          {"early_stop_patience", c.early_stop_patience},
          {"seed", c.seed},
          {"kl_weight", c.kl_weight}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.learning_rate = j.at("learning_rate").get<double>();
  c.adam_beta1 = j.at("adam_beta1").get<double>();
  c.adam_beta2 = j.at("adam_beta2").get<double>();
  c.adam_eps = j.at("adam_eps").get<double>();
  c.batch_size = j.at("batch_size").get<int>();
  c.max_epochs = j.at("max_epochs").get<int>();
  c.early_stop_patience = j.at("early_stop_patience").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.kl_weight = j.at("kl_weight").get<double>();
  validate(c);
  return c;
}

namespace {

std::vector<double> json_to_vec(const nlohmann::json& j) {
  return j.get<std::vector<double>>();
}

class DenseLayer final : public Layer {
 public:
  DenseLayer(int fan_in, int fan_out, Rng& rng, bool with_bias)
      : w_(fan_out, fan_in), b_(1, fan_out), dw_(fan_out, fan_in), db_(1, fan_out),
        with_bias_(with_bias) {
    // He-style uniform init scaled by fan-in.
    const double a = std::sqrt(6.0 / fan_in);
    for (double& v : w_.a) v = rng.uniform(-a, a);
  }

  explicit DenseLayer(const nlohmann::json& j)
      : w_(j.at("fan_out").get<int>(), j.at("fan_in").get<int>()),
        b_(1, j.at("fan_out").get<int>()),
        dw_(w_.rows, w_.cols),
        db_(1, b_.cols),
        with_bias_(j.value("with_bias", true)) {
    w_.a = json_to_vec(j.at("w"));
    b_.a = json_to_vec(j.at("b"));
    if (w_.a.size() != static_cast<std::size_t>(w_.rows) * w_.cols ||
        b_.a.size() != static_cast<std::size_t>(b_.cols))
      throw InvalidInputError("dense layer: parameter arrays do not match shape");
  }

  Mat forward(const Mat& x, bool) override {
    if (x.cols != w_.cols)
      throw ShapeError("dense: input width " + std::to_string(x.cols) + ", expected " +
                       std::to_string(w_.cols));
    x_ = x;
    Mat y;
    matmul_bt(x, w_, y);
    if (with_bias_) add_row_bias(y, b_.a);
    return y;
  }

  Mat backward(const Mat& dy) override {
    if (dy.cols != w_.rows || dy.rows != x_.rows)
      throw ShapeError("dense backward: gradient shape mismatch");
    Mat dw;
    matmul_at(dy, x_, dw);
    for (std::size_t i = 0; i < dw_.size(); ++i) dw_.a[i] += dw.a[i];
    if (with_bias_) {
      std::vector<double> db;
      col_sums(dy, db);
      for (int c = 0; c < db_.cols; ++c) db_.a[c] += db[c];
    }
    Mat dx;
    matmul(dy, w_, dx);
    return dx;
  }

  std::vector<ParamRef> params() override {
    if (!with_bias_) return {{"W", &w_, &dw_}};
    return {{"W", &w_, &dw_}, {"b", &b_, &db_}};
  }

  std::string kind() const override { return "dense"; }

  nlohmann::json to_json() const override {
    return {{"kind", "dense"}, {"fan_in", w_.cols},    {"fan_out", w_.rows},
            {"w", w_.a},       {"b", b_.a},            {"with_bias", with_bias_}};
  }

 private:
  Mat w_, b_, dw_, db_, x_;
  bool with_bias_ = true;
};

class ReluLayer final : public Layer {
 public:
  Mat forward(const Mat& x, bool) override {
    x_ = x;
    Mat y;
    relu_forward(x, y);
    return y;
  }

  Mat backward(const Mat& dy) override {
    Mat dx;
    relu_backward(x_, dy, dx);
    return dx;
  }

  std::vector<ParamRef> params() override { return {}; }
  std::string kind() const override { return "relu"; }
  nlohmann::json to_json() const override { return {{"kind", "relu"}}; }

 private:
  Mat x_;
};

class BatchNormLayer final : public Layer {
 public:
  explicit BatchNormLayer(int dim)
      : gamma_(1, dim), beta_(1, dim), dgamma_(1, dim), dbeta_(1, dim),
        running_mean_(dim, 0.0), running_var_(dim, 1.0) {
    gamma_.fill(1.0);
  }

  explicit BatchNormLayer(const nlohmann::json& j) : BatchNormLayer(j.at("dim").get<int>()) {
    gamma_.a = json_to_vec(j.at("gamma"));
    beta_.a = json_to_vec(j.at("beta"));
    running_mean_ = json_to_vec(j.at("running_mean"));
    running_var_ = json_to_vec(j.at("running_var"));
    const auto dim = static_cast<std::size_t>(gamma_.cols);
    if (gamma_.a.size() != dim || beta_.a.size() != dim || running_mean_.size() != dim ||
        running_var_.size() != dim)
      throw InvalidInputError("batchnorm layer: parameter arrays do not match shape");
  }

  Mat forward(const Mat& x, bool training) override {
    if (x.cols != gamma_.cols) throw ShapeError("batchnorm: input width mismatch");
    const int n = x.rows, d = x.cols;
    Mat y(n, d);
    if (training) {
      if (n < 2)
        throw InvalidParameterError("batchnorm: training forward needs batch size >= 2");
      x_ = x;
      mean_.assign(d, 0.0);
      var_.assign(d, 0.0);
      for (int r = 0; r < n; ++r)
        for (int c = 0; c < d; ++c) mean_[c] += x.at(r, c);
      for (int c = 0; c < d; ++c) mean_[c] /= n;
      for (int r = 0; r < n; ++r)
        for (int c = 0; c < d; ++c) {
          const double t = x.at(r, c) - mean_[c];
          var_[c] += t * t;
        }
      for (int c = 0; c < d; ++c) var_[c] /= n;  // biased, as used for normalization
      xhat_ = Mat(n, d);
      for (int c = 0; c < d; ++c) {
        const double inv = 1.0 / std::sqrt(var_[c] + kEps);
        for (int r = 0; r < n; ++r) {
          const double h = (x.at(r, c) - mean_[c]) * inv;
          xhat_.at(r, c) = h;
          y.at(r, c) = gamma_.a[c] * h + beta_.a[c];
        }
      }
      for (int c = 0; c < d; ++c) {
        running_mean_[c] = kMomentum * running_mean_[c] + (1.0 - kMomentum) * mean_[c];
        running_var_[c] = kMomentum * running_var_[c] + (1.0 - kMomentum) * var_[c];
      }
    } else {
      xhat_ = Mat(n, d);
      for (int c = 0; c < d; ++c) {
        const double inv = 1.0 / std::sqrt(running_var_[c] + kEps);
        for (int r = 0; r < n; ++r) {
          const double h = (x.at(r, c) - running_mean_[c]) * inv;
          xhat_.at(r, c) = h;
          y.at(r, c) = gamma_.a[c] * h + beta_.a[c];
        }
      }
    }
    train_forward_ = training;
    return y;
  }

  Mat backward(const Mat& dy) override {
    if (!dy.same_shape(xhat_)) throw ShapeError("batchnorm backward: shape mismatch");
    const int n = dy.rows, d = dy.cols;
    Mat dx(n, d);
    for (int c = 0; c < d; ++c) {
      double sum_dy = 0.0, sum_dy_h = 0.0;
      for (int r = 0; r < n; ++r) {
        sum_dy += dy.at(r, c);
        sum_dy_h += dy.at(r, c) * xhat_.at(r, c);
      }
      dbeta_.a[c] += sum_dy;
      dgamma_.a[c] += sum_dy_h;
      if (train_forward_) {
        const double inv = 1.0 / std::sqrt(var_[c] + kEps);
        const double g = gamma_.a[c] * inv / n;
        for (int r = 0; r < n; ++r)
          dx.at(r, c) = g * (n * dy.at(r, c) - sum_dy - xhat_.at(r, c) * sum_dy_h);
      } else {
        // Inference normalization is a fixed affine map: no batch coupling.
        const double g = gamma_.a[c] / std::sqrt(running_var_[c] + kEps);
        for (int r = 0; r < n; ++r) dx.at(r, c) = g * dy.at(r, c);
      }
    }
    return dx;
  }

  std::vector<ParamRef> params() override {
    return {{"gamma", &gamma_, &dgamma_}, {"beta", &beta_, &dbeta_}};
  }

  std::string kind() const override { return "batchnorm"; }

  nlohmann::json to_json() const override {
    return {{"kind", "batchnorm"},       {"dim", gamma_.cols},
            {"gamma", gamma_.a},         {"beta", beta_.a},
            {"running_mean", running_mean_}, {"running_var", running_var_}};
  }

 private:
  static constexpr double kEps = 1e-5;
  static constexpr double kMomentum = 0.9;
  Mat gamma_, beta_, dgamma_, dbeta_;
  std::vector<double> running_mean_, running_var_;
  Mat x_, xhat_;
  std::vector<double> mean_, var_;
  bool train_forward_ = true;
};

class SoftmaxLayer final : public Layer {
 public:
  Mat forward(const Mat& x, bool) override {
    softmax_rows(x, p_);
    return p_;
  }

  Mat backward(const Mat& dy) override {
    if (!dy.same_shape(p_)) throw ShapeError("softmax backward: shape mismatch");
    Mat dx(dy.rows, dy.cols);
    for (int r = 0; r < dy.rows; ++r) {
      double dot = 0.0;
      for (int c = 0; c < dy.cols; ++c) dot += dy.at(r, c) * p_.at(r, c);
      for (int c = 0; c < dy.cols; ++c)
        dx.at(r, c) = p_.at(r, c) * (dy.at(r, c) - dot);
    }
    return dx;
  }

  std::vector<ParamRef> params() override { return {}; }
  std::string kind() const override { return "softmax"; }
  nlohmann::json to_json() const override { return {{"kind", "softmax"}}; }

 private:
  Mat p_;
};

}  // namespace

std::unique_ptr<Layer> make_dense(int fan_in, int fan_out, Rng& rng, bool with_bias) {
  if (fan_in < 1 || fan_out < 1)
    throw InvalidParameterError("dense layer: fan sizes must be >= 1");
  return std::make_unique<DenseLayer>(fan_in, fan_out, rng, with_bias);
}

std::unique_ptr<Layer> make_relu() { return std::make_unique<ReluLayer>(); }

std::unique_ptr<Layer> make_batchnorm(int dim) {
  if (dim < 1) throw InvalidParameterError("batchnorm layer: dim must be >= 1");
  return std::make_unique<BatchNormLayer>(dim);
}

std::unique_ptr<Layer> make_softmax() { return std::make_unique<SoftmaxLayer>(); }

std::unique_ptr<Layer> layer_from_json(const nlohmann::json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "dense") return std::make_unique<DenseLayer>(j);
  if (kind == "relu") return std::make_unique<ReluLayer>();
  if (kind == "batchnorm") return std::make_unique<BatchNormLayer>(j);
  if (kind == "softmax") return std::make_unique<SoftmaxLayer>();
  throw InvalidInputError("unknown layer kind: " + kind);
}

Mat Network::forward(const Mat& x, bool training) {
  Mat cur = x;
  for (auto& l : layers_) cur = l->forward(cur, training);
  return cur;
}

Mat Network::backward(const Mat& dy) {
  Mat cur = dy;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) cur = (*it)->backward(cur);
  return cur;
}

std::vector<ParamRef> Network::params() {
  std::vector<ParamRef> out;
  for (std::size_t i = 0; i < layers_.size(); ++i)
    for (ParamRef p : layers_[i]->params()) {
      p.name = "L" + std::to_string(i) + "." + p.name;
      out.push_back(p);
    }
  return out;
}

void Network::zero_grads() {
  for (ParamRef p : params()) p.grad->fill(0.0);
}

nlohmann::json Network::to_json() const {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : layers_) layers.push_back(l->to_json());
  return {{"layers", layers}};
}

Network Network::from_json(const nlohmann::json& j) {
  Network net;
  for (const auto& lj : j.at("layers")) net.add(layer_from_json(lj));
  return net;
}

double mse(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ShapeError("mse: length mismatch");
  if (a.empty()) throw InvalidInputError("mse: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s / static_cast<double>(a.size());
}

LossValue mse_loss(const Mat& pred, const Mat& target) {
  if (!pred.same_shape(target)) throw ShapeError("mse_loss: shape mismatch");
  LossValue out;
  out.grad = Mat(pred.rows, pred.cols);
  const double n = static_cast<double>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred.a[i] - target.a[i];
    out.value += d * d / n;
    out.grad.a[i] = 2.0 * d / n;
  }
  return out;
}

LossValue cross_entropy_loss(const Mat& probs, const std::vector<int>& targets) {
  if (probs.rows != static_cast<int>(targets.size()))
    throw ShapeError("cross_entropy: batch size mismatch");
  LossValue out;
  out.grad = Mat(probs.rows, probs.cols);
  const double n = probs.rows;
  for (int r = 0; r < probs.rows; ++r) {
    const int t = targets[r];
    if (t < 0 || t >= probs.cols)
      throw InvalidInputError("cross_entropy: target out of range");
    const double p = std::max(probs.at(r, t), 1e-12);
    out.value += -std::log(p) / n;
    out.grad.at(r, t) = -1.0 / (p * n);
  }
  return out;
}

Adam::Adam(std::vector<ParamRef> params, const TrainConfig& config)
    : params_(std::move(params)), cfg_(config) {
  validate(cfg_);
  for (const ParamRef& p : params_) {
    m_.emplace_back(p.value->rows, p.value->cols);
    v_.emplace_back(p.value->rows, p.value->cols);
  }
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.adam_beta1, t_);
  const double bc2 = 1.0 - std::pow(cfg_.adam_beta2, t_);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Mat& val = *params_[i].value;
    Mat& grad = *params_[i].grad;
    for (std::size_t k = 0; k < val.size(); ++k) {
      const double g = grad.a[k];
      if (!std::isfinite(g))
        throw NumericError("adam: non-finite gradient in " + params_[i].name);
      m_[i].a[k] = cfg_.adam_beta1 * m_[i].a[k] + (1.0 - cfg_.adam_beta1) * g;
      v_[i].a[k] = cfg_.adam_beta2 * v_[i].a[k] + (1.0 - cfg_.adam_beta2) * g * g;
      const double mhat = m_[i].a[k] / bc1;
      const double vhat = v_[i].a[k] / bc2;
      val.a[k] -= cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.adam_eps);
    }
    grad.fill(0.0);
  }
}

double grad_check_fn(const std::vector<ParamRef>& params,
                     const std::function<double(bool)>& eval, double h) {
  if (!(h > 0.0)) throw InvalidParameterError("grad_check: h must be > 0");

  eval(true);
  std::vector<Mat> analytic;
  analytic.reserve(params.size());
  for (const ParamRef& p : params) analytic.push_back(*p.grad);

  double max_rel = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Mat& val = *params[i].value;
    for (std::size_t k = 0; k < val.size(); ++k) {
      const double keep = val.a[k];
      val.a[k] = keep + h;
      const double up = eval(false);
      val.a[k] = keep - h;
      const double down = eval(false);
      val.a[k] = keep;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[i].a[k];
      const double rel =
          std::fabs(a - numeric) / std::max(1e-8, std::fabs(a) + std::fabs(numeric));
      if (rel > max_rel) max_rel = rel;
    }
  }
  return max_rel;
}

double grad_check(Network& net, const Mat& x, const LossFn& loss, double h,
                  const GradCheckOptions& opts) {
  const std::vector<ParamRef> params = net.params();
  std::vector<Mat*> grads;
  for (const ParamRef& p : params) grads.push_back(p.grad);

  auto eval = [&](bool with_grads) -> double {
    if (with_grads) net.zero_grads();
    const Mat out = net.forward(x, true);
    const LossValue lv = loss(out);
    if (with_grads) {
      net.backward(lv.grad);
      if (opts.corrupt_index >= 0) {
        long idx = opts.corrupt_index;
        for (Mat* g : grads) {
          if (idx < static_cast<long>(g->size())) {
            g->a[idx] = g->a[idx] * 2.0 + 1.0;
            break;
          }
          idx -= static_cast<long>(g->size());
        }
      }
    }
    return lv.value;
  };
  return grad_check_fn(params, eval, h);
}

}  // namespace sfm
