#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "sfm/kernels.hpp"
#include "sfm/rng.hpp"

#include "json.hpp"

namespace sfm {

struct TrainConfig {
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch_size = 64;
  int max_epochs = 200;
  int early_stop_patience = 20;
  std::uint64_t seed = 1;
  double kl_weight = 1.0;
};

void validate(const TrainConfig& c);
nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

// Named view of one parameter tensor and its gradient accumulator.
struct ParamRef {
  std::string name;
  Mat* value;
  Mat* grad;
};

// Fixed layer vocabulary; no general autodiff graph. Backward accumulates
// into the gradient tensors, so calling it twice without zero_grads sums
// both contributions.
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Mat forward(const Mat& x, bool training) = 0;
  virtual Mat backward(const Mat& dy) = 0;
  virtual std::vector<ParamRef> params() = 0;
  virtual std::string kind() const = 0;
  virtual nlohmann::json to_json() const = 0;
};

// Layers feeding a batchnorm should be bias-free: the normalizer's shift
// parameter absorbs the bias, and a redundant bias has an exactly-zero
// gradient direction that finite-difference checks cannot resolve.
std::unique_ptr<Layer> make_dense(int fan_in, int fan_out, Rng& rng, bool with_bias = true);
std::unique_ptr<Layer> make_relu();
std::unique_ptr<Layer> make_batchnorm(int dim);
std::unique_ptr<Layer> make_softmax();
std::unique_ptr<Layer> layer_from_json(const nlohmann::json& j);

class Network {
 public:
  Network() = default;
  Network(Network&&) = default;
  Network& operator=(Network&&) = default;

  void add(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }
  std::size_t depth() const { return layers_.size(); }
  Layer& layer(std::size_t i) { return *layers_[i]; }
  const Layer& layer(std::size_t i) const { return *layers_[i]; }

  Mat forward(const Mat& x, bool training);
  // dy is the loss gradient at the output; returns the gradient at the input.
  Mat backward(const Mat& dy);
  std::vector<ParamRef> params();
  void zero_grads();

  nlohmann::json to_json() const;
  static Network from_json(const nlohmann::json& j);

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

// Losses return the scalar and the gradient with respect to their first
// argument. Values are means over every element (mse) or over rows
// (cross-entropy), matching the documented contracts.
struct LossValue {
  double value = 0.0;
  Mat grad;
};

double mse(const std::vector<double>& a, const std::vector<double>& b);
LossValue mse_loss(const Mat& pred, const Mat& target);
// probs are post-softmax rows; targets are class indices per row. Probability
// is clamped at 1e-12 inside the log.
LossValue cross_entropy_loss(const Mat& probs, const std::vector<int>& targets);

class Adam {
 public:
  Adam(std::vector<ParamRef> params, const TrainConfig& config);
  // Applies one update from the accumulated gradients, then zeroes them.
  void step();

 private:
  std::vector<ParamRef> params_;
  std::vector<Mat> m_;
  std::vector<Mat> v_;
  TrainConfig cfg_;
  long t_ = 0;
};

// Central finite differences over every parameter in `params` against the
// analytic gradients produced by `eval(true)`. eval(false) must return the
// scalar without touching gradients; eval(true) must zero, then fill them.
// Returns max |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
double grad_check_fn(const std::vector<ParamRef>& params,
                     const std::function<double(bool)>& eval, double h);

struct GradCheckOptions {
  // Negative control: corrupt this flat parameter index's analytic gradient.
  long corrupt_index = -1;
};

using LossFn = std::function<LossValue(const Mat& out)>;
double grad_check(Network& net, const Mat& x, const LossFn& loss, double h,
                  const GradCheckOptions& opts = {});

}  // namespace sfm
