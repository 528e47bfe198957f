#include "sfm/vae.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sfm/eval.hpp"

namespace sfm {

namespace {

void check_bins(std::size_t got, const char* who) {
  if (got != static_cast<std::size_t>(kInputBins))
    throw ShapeError(std::string(who) + ": expected " + std::to_string(kInputBins) +
                     " bins, got " + std::to_string(got));
}

Network build_encoder(Rng& rng) {
  Network net;
  net.add(make_dense(kInputBins, 25, rng, /*with_bias=*/false));
  net.add(make_relu());
  net.add(make_batchnorm(25));
  net.add(make_dense(25, 2 * kLatentDim, rng));
  return net;
}

Network build_decoder(Rng& rng) {
  Network net;
  net.add(make_dense(kLatentDim, 25, rng));
  net.add(make_relu());
  net.add(make_dense(25, kInputBins, rng));
  return net;
}

Network build_classifier(Rng& rng, int n_classes) {
  Network net;
  net.add(make_dense(kLatentDim, 16, rng));
  net.add(make_relu());
  net.add(make_dense(16, n_classes, rng));
  net.add(make_softmax());
  return net;
}

Mat cols(const Mat& m, int lo, int hi) {
  Mat out(m.rows, hi - lo);
  for (int r = 0; r < m.rows; ++r)
    for (int c = lo; c < hi; ++c) out.at(r, c - lo) = m.at(r, c);
  return out;
}

std::vector<int> batch_starts(int n, int batch_size) {
  std::vector<int> starts;
  for (int s = 0; s < n; s += batch_size) starts.push_back(s);
  // A trailing single-record batch cannot be batch-normalized; fold it into
  // the previous batch.
  if (starts.size() > 1 && n - starts.back() == 1) starts.pop_back();
  return starts;
}

Mat gather_rows(const Mat& m, const std::vector<int>& order, int lo, int hi) {
  Mat out(hi - lo, m.cols);
  for (int r = lo; r < hi; ++r)
    for (int c = 0; c < m.cols; ++c) out.at(r - lo, c) = m.at(order[r], c);
  return out;
}

std::vector<ParamRef> concat_params(std::vector<ParamRef> a, const std::vector<ParamRef>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

// Shared forward/backward of the training objective on one batch of
// standardized rows. eps has one row per record. Returns the mean loss;
// when backprop is true the parameter gradients of encoder (and decoder)
// are accumulated.
double elbo_batch(Network& encoder, Network& decoder, const Mat& xb, const Mat& eps,
                  double kl_weight, bool training_mode, bool backprop) {
  const int b = xb.rows;
  const Mat h = encoder.forward(xb, training_mode);
  if (h.cols % 2 != 0)
    throw ShapeError("elbo: encoder output width must be even (mean | half-log-var)");
  const int latent = h.cols / 2;
  if (eps.rows != b || eps.cols != latent)
    throw ShapeError("elbo: eps shape must be records x latent");
  Mat z(b, latent);
  Mat sigma(b, latent);
  for (int r = 0; r < b; ++r)
    for (int i = 0; i < latent; ++i) {
      const double s = std::exp(h.at(r, latent + i));
      sigma.at(r, i) = s;
      z.at(r, i) = h.at(r, i) + s * eps.at(r, i);
    }
  const Mat xhat = decoder.forward(z, training_mode);

  double loss = 0.0;
  for (int r = 0; r < b; ++r) {
    double recon = 0.0;
    for (int c = 0; c < xb.cols; ++c) {
      const double d = xhat.at(r, c) - xb.at(r, c);
      recon += 0.5 * d * d;
    }
    double kl = 0.0;
    for (int i = 0; i < latent; ++i) {
      const double mu = h.at(r, i);
      const double hlv = h.at(r, latent + i);
      kl += -0.5 * (1.0 + 2.0 * hlv - mu * mu - std::exp(2.0 * hlv));
    }
    loss += recon + kl_weight * kl;
  }
  loss /= b;

  if (backprop) {
    Mat dxhat(b, xb.cols);
    for (int r = 0; r < b; ++r)
      for (int c = 0; c < xb.cols; ++c)
        dxhat.at(r, c) = (xhat.at(r, c) - xb.at(r, c)) / b;
    const Mat dz = decoder.backward(dxhat);
    Mat dh(b, 2 * latent);
    for (int r = 0; r < b; ++r)
      for (int i = 0; i < latent; ++i) {
        const double mu = h.at(r, i);
        const double hlv = h.at(r, latent + i);
        dh.at(r, i) = dz.at(r, i) + kl_weight * mu / b;
        dh.at(r, latent + i) = dz.at(r, i) * sigma.at(r, i) * eps.at(r, i) +
                               kl_weight * (std::exp(2.0 * hlv) - 1.0) / b;
      }
    encoder.backward(dh);
  }
  return loss;
}

void require_clean(const Dataset& ds, const char* who) {
  for (const Spectrum& rec : ds.records)
    if (rec.label.cls != FailureClass::None)
      throw InvalidInputError(std::string(who) + ": dataset contains a " +
                              to_string(rec.label.cls) +
                              " record; training is on clean spectra only");
}

}  // namespace

Standardization compute_standardization(const Dataset& clean_train) {
  if (clean_train.records.empty())
    throw InvalidInputError("standardization: empty dataset");
  const std::size_t n = clean_train.records.size();
  check_bins(clean_train.records.front().power_dbm.size(), "standardization");

  Standardization s;
  s.mean.assign(kInputBins, 0.0);
  s.std.assign(kInputBins, 0.0);
  for (const Spectrum& rec : clean_train.records) {
    check_bins(rec.power_dbm.size(), "standardization");
    for (int b = 0; b < kInputBins; ++b) s.mean[b] += rec.power_dbm[b];
  }
  for (int b = 0; b < kInputBins; ++b) s.mean[b] /= static_cast<double>(n);
  for (const Spectrum& rec : clean_train.records)
    for (int b = 0; b < kInputBins; ++b) {
      const double d = rec.power_dbm[b] - s.mean[b];
      s.std[b] += d * d;
    }
  for (int b = 0; b < kInputBins; ++b)
    s.std[b] = std::max(std::sqrt(s.std[b] / static_cast<double>(n)), kStdFloorDb);
  return s;
}

std::vector<double> standardize(const Standardization& s, const std::vector<double>& power_dbm) {
  check_bins(power_dbm.size(), "standardize");
  if (s.mean.size() != static_cast<std::size_t>(kInputBins) || s.std.size() != s.mean.size())
    throw ShapeError("standardize: statistics have wrong length");
  std::vector<double> out(kInputBins);
  for (int b = 0; b < kInputBins; ++b) out[b] = (power_dbm[b] - s.mean[b]) / s.std[b];
  return out;
}

std::vector<double> destandardize(const Standardization& s, const std::vector<double>& x_std) {
  check_bins(x_std.size(), "destandardize");
  std::vector<double> out(kInputBins);
  for (int b = 0; b < kInputBins; ++b) out[b] = x_std[b] * s.std[b] + s.mean[b];
  return out;
}

Mat standardized_matrix(const Standardization& s, const Dataset& ds) {
  Mat x(static_cast<int>(ds.records.size()), kInputBins);
  for (std::size_t r = 0; r < ds.records.size(); ++r) {
    const std::vector<double> row = standardize(s, ds.records[r].power_dbm);
    for (int b = 0; b < kInputBins; ++b) x.at(static_cast<int>(r), b) = row[b];
  }
  return x;
}

nlohmann::json VaeModel::to_json() const {
  return {{"schema_version", 1},
          {"kind", "vae"},
          {"encoder", encoder.to_json()},
          {"decoder", decoder.to_json()},
          {"standardization", {{"mean", standardization.mean}, {"std", standardization.std}}},
          {"config", sfm::to_json(config)}};
}

VaeModel VaeModel::from_json(const nlohmann::json& j) {
  if (j.value("kind", "") != "vae")
    throw InvalidInputError("vae model file: kind tag is not 'vae'");
  VaeModel m;
  m.encoder = Network::from_json(j.at("encoder"));
  m.decoder = Network::from_json(j.at("decoder"));
  m.standardization.mean = j.at("standardization").at("mean").get<std::vector<double>>();
  m.standardization.std = j.at("standardization").at("std").get<std::vector<double>>();
  m.config = train_config_from_json(j.at("config"));
  return m;
}

VaeModel make_vae(std::uint64_t seed) {
  Rng rng(seed);
  VaeModel m;
  m.encoder = build_encoder(rng);
  m.decoder = build_decoder(rng);
  m.standardization.mean.assign(kInputBins, 0.0);
  m.standardization.std.assign(kInputBins, 1.0);
  m.config.seed = seed;
  return m;
}

std::pair<std::vector<double>, std::vector<double>> encode(VaeModel& model,
                                                           const std::vector<double>& x_std) {
  check_bins(x_std.size(), "encode");
  Mat x(1, kInputBins);
  x.a = x_std;
  const Mat h = model.encoder.forward(x, false);
  std::vector<double> mu(kLatentDim), sigma(kLatentDim);
  for (int i = 0; i < kLatentDim; ++i) {
    mu[i] = h.at(0, i);
    sigma[i] = std::exp(h.at(0, kLatentDim + i));
  }
  return {mu, sigma};
}

std::vector<double> reparameterize(const std::vector<double>& mu, const std::vector<double>& sigma,
                                   const std::vector<double>& eps) {
  if (mu.size() != sigma.size() || mu.size() != eps.size())
    throw ShapeError("reparameterize: component lengths differ");
  std::vector<double> z(mu.size());
  for (std::size_t i = 0; i < mu.size(); ++i) z[i] = mu[i] + sigma[i] * eps[i];
  return z;
}

std::vector<double> decode(VaeModel& model, const std::vector<double>& z) {
  if (z.size() != static_cast<std::size_t>(kLatentDim))
    throw ShapeError("decode: expected a " + std::to_string(kLatentDim) + "-vector");
  Mat zm(1, kLatentDim);
  zm.a = z;
  const Mat xhat = model.decoder.forward(zm, false);
  return destandardize(model.standardization, xhat.a);
}

double kl_divergence(const std::vector<double>& mu, const std::vector<double>& sigma) {
  if (mu.size() != sigma.size()) throw ShapeError("kl_divergence: lengths differ");
  double kl = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    if (!(sigma[i] > 0.0)) throw InvalidInputError("kl_divergence: sigma must be > 0");
    kl += -0.5 * (1.0 + 2.0 * std::log(sigma[i]) - mu[i] * mu[i] - sigma[i] * sigma[i]);
  }
  return kl;
}

Mat encode_mu(VaeModel& model, const Mat& x_std) {
  const Mat h = model.encoder.forward(x_std, false);
  return cols(h, 0, kLatentDim);
}

std::pair<Mat, Mat> encode_mu_sigma(VaeModel& model, const Mat& x_std) {
  const Mat h = model.encoder.forward(x_std, false);
  Mat sigma = cols(h, kLatentDim, 2 * kLatentDim);
  for (double& v : sigma.a) v = std::exp(v);
  return {cols(h, 0, kLatentDim), std::move(sigma)};
}

Mat decode_batch_std(VaeModel& model, const Mat& z) {
  return model.decoder.forward(z, false);
}

Mat decode_batch(VaeModel& model, const Mat& z) {
  Mat xhat = decode_batch_std(model, z);
  for (int r = 0; r < xhat.rows; ++r)
    for (int b = 0; b < kInputBins; ++b)
      xhat.at(r, b) =
          xhat.at(r, b) * model.standardization.std[b] + model.standardization.mean[b];
  return xhat;
}

VaeModel train_vae(const Dataset& clean_train, const Dataset& clean_val,
                   const TrainConfig& config) {
  validate(config);
  require_clean(clean_train, "train_vae");
  require_clean(clean_val, "train_vae");
  const int n = static_cast<int>(clean_train.records.size());
  if (n < 2) throw InvalidInputError("train_vae: need at least 2 clean records");
  if (clean_val.records.empty()) throw InvalidInputError("train_vae: empty validation set");

  VaeModel model;
  model.standardization = compute_standardization(clean_train);
  model.config = config;
  Rng rng(config.seed);
  model.encoder = build_encoder(rng);
  model.decoder = build_decoder(rng);

  const Mat x_train = standardized_matrix(model.standardization, clean_train);
  const Mat x_val = standardized_matrix(model.standardization, clean_val);
  const Mat eps_val(x_val.rows, kLatentDim);  // zeros: validate at the latent mean

  Adam opt(concat_params(model.encoder.params(), model.decoder.params()), config);

  auto val_loss = [&]() {
    return elbo_batch(model.encoder, model.decoder, x_val, eps_val, config.kl_weight, false,
                      false);
  };

  double best = val_loss();
  nlohmann::json best_encoder = model.encoder.to_json();
  nlohmann::json best_decoder = model.decoder.to_json();
  int since_best = 0;

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    rng.shuffle(order);
    for (int start : batch_starts(n, config.batch_size)) {
      const int stop = std::min(start + config.batch_size, n);
      const int b = stop - start;
      const Mat xb = gather_rows(x_train, order, start, stop);
      Mat eps(b, kLatentDim);
      for (double& v : eps.a) v = rng.normal();
      model.encoder.zero_grads();
      model.decoder.zero_grads();
      elbo_batch(model.encoder, model.decoder, xb, eps, config.kl_weight, true, true);
      opt.step();
    }
    const double v = val_loss();
    if (v < best) {
      best = v;
      best_encoder = model.encoder.to_json();
      best_decoder = model.decoder.to_json();
      since_best = 0;
    } else if (++since_best > config.early_stop_patience) {
      break;
    }
  }

  model.encoder = Network::from_json(best_encoder);
  model.decoder = Network::from_json(best_decoder);
  return model;
}

nlohmann::json VaeNnHybrid::to_json() const {
  return {{"schema_version", 1},
          {"kind", "vae-nn"},
          {"vae", vae.to_json()},
          {"classifier", classifier.to_json()},
          {"n_classes", n_classes}};
}

VaeNnHybrid VaeNnHybrid::from_json(const nlohmann::json& j) {
  if (j.value("kind", "") != "vae-nn")
    throw InvalidInputError("hybrid model file: kind tag is not 'vae-nn'");
  VaeNnHybrid h;
  h.vae = VaeModel::from_json(j.at("vae"));
  h.classifier = Network::from_json(j.at("classifier"));
  h.n_classes = j.at("n_classes").get<int>();
  return h;
}

VaeNnHybrid train_vae_nn_with_labels(const VaeModel& pretrained, const Dataset& train,
                                     const std::vector<int>& y_train, const Dataset& val,
                                     const std::vector<int>& y_val, int n_classes,
                                     const TrainConfig& config) {
  validate(config);
  if (n_classes < 1) throw InvalidParameterError("hybrid training: n_classes must be >= 1");
  if (y_train.size() != train.records.size() || y_val.size() != val.records.size())
    throw ShapeError("hybrid training: label count does not match record count");
  if (train.records.empty()) throw InvalidInputError("hybrid training: empty training set");
  for (int y : y_train)
    if (y < 0 || y >= n_classes)
      throw InvalidInputError("hybrid training: label " + std::to_string(y) +
                              " outside [0, " + std::to_string(n_classes) + ")");
  for (int y : y_val)
    if (y < 0 || y >= n_classes)
      throw InvalidInputError("hybrid training: label " + std::to_string(y) +
                              " outside [0, " + std::to_string(n_classes) + ")");

  VaeNnHybrid hybrid;
  hybrid.vae = pretrained.clone();
  hybrid.n_classes = n_classes;
  Rng rng(config.seed);
  hybrid.classifier = build_classifier(rng, n_classes);

  const Mat x_train = standardized_matrix(hybrid.vae.standardization, train);
  const Mat x_val = standardized_matrix(hybrid.vae.standardization, val);
  const int n = x_train.rows;

  Adam opt(concat_params(hybrid.vae.encoder.params(), hybrid.classifier.params()), config);

  auto val_f1 = [&]() {
    const Mat mu = encode_mu(hybrid.vae, x_val);
    const Mat probs = hybrid.classifier.forward(mu, false);
    std::vector<int> preds(probs.rows);
    for (int r = 0; r < probs.rows; ++r) {
      int arg = 0;
      for (int c = 1; c < probs.cols; ++c)
        if (probs.at(r, c) > probs.at(r, arg)) arg = c;
      preds[r] = arg;
    }
    return f1(preds, y_val, Averaging::Macro);
  };

  double best = val_f1();
  nlohmann::json best_encoder = hybrid.vae.encoder.to_json();
  nlohmann::json best_classifier = hybrid.classifier.to_json();
  int since_best = 0;

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    rng.shuffle(order);
    for (int start : batch_starts(n, config.batch_size)) {
      const int stop = std::min(start + config.batch_size, n);
      const int b = stop - start;
      const Mat xb = gather_rows(x_train, order, start, stop);
      std::vector<int> yb(b);
      for (int r = start; r < stop; ++r) yb[r - start] = y_train[order[r]];

      hybrid.vae.encoder.zero_grads();
      hybrid.classifier.zero_grads();
      const Mat h = hybrid.vae.encoder.forward(xb, true);
      const Mat mu = cols(h, 0, kLatentDim);
      const Mat probs = hybrid.classifier.forward(mu, true);
      const LossValue lv = cross_entropy_loss(probs, yb);
      const Mat dmu = hybrid.classifier.backward(lv.grad);
      Mat dh(b, 2 * kLatentDim);
      dh.fill(0.0);
      for (int r = 0; r < b; ++r)
        for (int i = 0; i < kLatentDim; ++i) dh.at(r, i) = dmu.at(r, i);
      hybrid.vae.encoder.backward(dh);
      opt.step();
    }
    const double v = val_f1();
    if (v > best) {
      best = v;
      best_encoder = hybrid.vae.encoder.to_json();
      best_classifier = hybrid.classifier.to_json();
      since_best = 0;
    } else if (++since_best > config.early_stop_patience) {
      break;
    }
  }

  hybrid.vae.encoder = Network::from_json(best_encoder);
  hybrid.classifier = Network::from_json(best_classifier);
  return hybrid;
}

VaeNnHybrid train_vae_nn(const VaeModel& pretrained, const Dataset& labeled_train,
                         const Dataset& labeled_val, const TrainConfig& config) {
  auto labels_of = [](const Dataset& ds) {
    std::vector<int> y(ds.records.size());
    for (std::size_t i = 0; i < ds.records.size(); ++i) {
      const FailureClass cls = ds.records[i].label.cls;
      if (cls == FailureClass::UnknownMisalignment)
        throw InvalidInputError(
            "hybrid training: unknown-misalignment records carry no known class label");
      y[i] = static_cast<int>(cls);
    }
    return y;
  };
  return train_vae_nn_with_labels(pretrained, labeled_train, labels_of(labeled_train),
                                  labeled_val, labels_of(labeled_val), 6, config);
}

int classify(VaeNnHybrid& hybrid, const std::vector<double>& power_dbm) {
  const std::vector<double> x = standardize(hybrid.vae.standardization, power_dbm);
  Mat xm(1, kInputBins);
  xm.a = x;
  const Mat mu = encode_mu(hybrid.vae, xm);
  const Mat probs = hybrid.classifier.forward(mu, false);
  int arg = 0;
  for (int c = 1; c < probs.cols; ++c)
    if (probs.at(0, c) > probs.at(0, arg)) arg = c;
  return arg;
}

std::vector<int> predict(VaeNnHybrid& hybrid, const Dataset& ds) {
  const Mat x = standardized_matrix(hybrid.vae.standardization, ds);
  const Mat mu = encode_mu(hybrid.vae, x);
  const Mat probs = hybrid.classifier.forward(mu, false);
  std::vector<int> preds(probs.rows);
  for (int r = 0; r < probs.rows; ++r) {
    int arg = 0;
    for (int c = 1; c < probs.cols; ++c)
      if (probs.at(r, c) > probs.at(r, arg)) arg = c;
    preds[r] = arg;
  }
  return preds;
}

double elbo_grad_check(VaeModel& model, const Mat& x_std, const Mat& eps, double kl_weight,
                       double h) {
  if (eps.rows != x_std.rows)
    throw ShapeError("elbo_grad_check: eps must have one row per record");
  const std::vector<ParamRef> params =
      concat_params(model.encoder.params(), model.decoder.params());
  auto eval = [&](bool with_grads) {
    if (with_grads) {
      model.encoder.zero_grads();
      model.decoder.zero_grads();
    }
    return elbo_batch(model.encoder, model.decoder, x_std, eps, kl_weight, false, with_grads);
  };
  return grad_check_fn(params, eval, h);
}

}  // namespace sfm
