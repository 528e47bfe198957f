#include "sfm/sfgan.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>

#include "sfm/eval.hpp"

namespace sfm {

namespace {

double logsumexp(const std::vector<double>& v) {
  double top = -std::numeric_limits<double>::infinity();
  for (double x : v) top = std::max(top, x);
  double s = 0.0;
  for (double x : v) s += std::exp(x - top);
  return top + std::log(s);
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
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
    for (int c = 0; c < m.cols; ++c) out.at(r - lo, c) = m.at(order[static_cast<std::size_t>(r)], c);
  return out;
}

Mat cols(const Mat& m, int lo, int hi) {
  Mat out(m.rows, hi - lo);
  for (int r = 0; r < m.rows; ++r)
    for (int c = lo; c < hi; ++c) out.at(r, c - lo) = m.at(r, c);
  return out;
}

std::vector<ParamRef> concat_params(std::vector<ParamRef> a, const std::vector<ParamRef>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

Network build_discriminator(Rng& rng) {
  Network net;
  net.add(make_dense(kInputBins, 85, rng));
  net.add(make_relu());
  net.add(make_dense(85, 42, rng));
  net.add(make_relu());
  net.add(make_dense(42, kGanClasses, rng));
  return net;
}

// Supervised class index of a faulty record: 0..4 over the known classes.
int gan_class_index(FailureClass cls) {
  const int k = static_cast<int>(cls) - 1;
  if (k < 0 || k >= kGanClasses)
    throw InvalidInputError("adversarial training takes labeled known-faulty records; got " +
                            to_string(cls));
  return k;
}

struct RealnessRows {
  std::vector<double> value;  // sigmoid(logsumexp) per row
};

RealnessRows realness_rows(const Mat& logits) {
  RealnessRows out;
  out.value.resize(static_cast<std::size_t>(logits.rows));
  std::vector<double> row(static_cast<std::size_t>(logits.cols));
  for (int r = 0; r < logits.rows; ++r) {
    std::copy(logits.row(r), logits.row(r) + logits.cols, row.begin());
    out.value[static_cast<std::size_t>(r)] = sigmoid(logsumexp(row));
  }
  return out;
}

}  // namespace

double lambda_realness(const std::vector<double>& logits) {
  if (logits.empty()) throw ShapeError("realness needs at least one logit");
  for (double l : logits)
    if (!std::isfinite(l)) throw NumericError("non-finite logit in realness computation");
  return sigmoid(logsumexp(logits));
}

void validate(const GanConfig& c) {
  if (c.learning_rate <= 0.0) throw InvalidParameterError("learning_rate must be > 0");
  if (c.batch_size < 2) throw InvalidParameterError("batch_size must be >= 2");
  if (c.max_epochs < 0) throw InvalidParameterError("max_epochs must be >= 0");
  if (c.lambda_rec < 0.0) throw InvalidParameterError("lambda_rec must be >= 0");
  if (!(c.balance_lo >= 0.0 && c.balance_lo < c.balance_hi && c.balance_hi <= 1.0))
    throw InvalidParameterError("balance band must satisfy 0 <= lo < hi <= 1");
  if (c.balance_patience < 1) throw InvalidParameterError("balance_patience must be >= 1");
}

nlohmann::json to_json(const GanConfig& c) {
  return {{"seed", c.seed},
          {"max_epochs", c.max_epochs},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"lambda_rec", c.lambda_rec},
          {"balance_lo", c.balance_lo},
          {"balance_hi", c.balance_hi},
          {"balance_patience", c.balance_patience}};
}

GanConfig gan_config_from_json(const nlohmann::json& j) {
  GanConfig c;
  c.seed = j.at("seed").get<std::uint64_t>();
  c.max_epochs = j.at("max_epochs").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.lambda_rec = j.at("lambda_rec").get<double>();
  c.balance_lo = j.at("balance_lo").get<double>();
  c.balance_hi = j.at("balance_hi").get<double>();
  c.balance_patience = j.at("balance_patience").get<int>();
  return c;
}

nlohmann::json to_json(const GanTrainingLog& log) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : log.epochs)
    epochs.push_back({{"epoch", e.epoch},
                      {"disc_loss", e.disc_loss},
                      {"gen_loss", e.gen_loss},
                      {"fake_accuracy", e.fake_accuracy}});
  return {{"epochs", epochs},
          {"stop_reason", log.stop_reason},
          {"calibrated", log.calibrated},
          {"realness_high_for_known", log.realness_high_for_known},
          {"realness_threshold", log.realness_threshold},
          {"calibration_f1", log.calibration_f1}};
}

GanTrainingLog gan_log_from_json(const nlohmann::json& j) {
  GanTrainingLog log;
  for (const auto& ej : j.at("epochs")) {
    GanEpochLog e;
    e.epoch = ej.at("epoch").get<int>();
    e.disc_loss = ej.at("disc_loss").get<double>();
    e.gen_loss = ej.at("gen_loss").get<double>();
    e.fake_accuracy = ej.at("fake_accuracy").get<double>();
    log.epochs.push_back(e);
  }
  log.stop_reason = j.at("stop_reason").get<std::string>();
  log.calibrated = j.at("calibrated").get<bool>();
  log.realness_high_for_known = j.at("realness_high_for_known").get<bool>();
  log.realness_threshold = j.at("realness_threshold").get<double>();
  log.calibration_f1 = j.at("calibration_f1").get<double>();
  return log;
}

nlohmann::json GanModel::to_json() const {
  return {{"kind", "gan"},
          {"schema_version", 1},
          {"vae", vae.to_json()},
          {"discriminator", discriminator.to_json()},
          {"log", sfm::to_json(log)}};
}

GanModel GanModel::from_json(const nlohmann::json& j) {
  if (j.value("kind", "") != "gan")
    throw InvalidInputError("model file does not hold an adversarial model");
  GanModel gan;
  gan.vae = VaeModel::from_json(j.at("vae"));
  gan.discriminator = Network::from_json(j.at("discriminator"));
  gan.log = gan_log_from_json(j.at("log"));
  return gan;
}

GanModel make_gan(const VaeModel& vae, std::uint64_t seed) {
  GanModel gan;
  gan.vae = vae.clone();
  Rng rng(seed);
  gan.discriminator = build_discriminator(rng);
  return gan;
}

Mat discriminate_logits(GanModel& gan, const Mat& x_std) {
  if (x_std.cols != kInputBins) throw ShapeError("discriminator input must have 501 bins");
  return gan.discriminator.forward(x_std, false);
}

DiscriminatorOutput discriminate(GanModel& gan, const std::vector<double>& x_std) {
  Mat x(1, kInputBins);
  if (static_cast<int>(x_std.size()) != kInputBins)
    throw ShapeError("discriminator input must have 501 bins");
  std::copy(x_std.begin(), x_std.end(), x.a.begin());
  const Mat logits = discriminate_logits(gan, x);

  DiscriminatorOutput out;
  out.logits.assign(logits.row(0), logits.row(0) + logits.cols);
  Mat probs;
  softmax_rows(logits, probs);
  out.class_probs.assign(probs.row(0), probs.row(0) + probs.cols);
  out.realness = lambda_realness(out.logits);
  out.z = 0.0;
  for (double l : out.logits) out.z += std::exp(l);
  return out;
}

GanModel train_gan(const Dataset& labeled_faulty, const VaeModel& vae, const GanConfig& config) {
  validate(config);
  const int n = static_cast<int>(labeled_faulty.records.size());
  if (n < 2) throw InvalidInputError("adversarial training needs at least two records");

  std::vector<int> targets;
  targets.reserve(labeled_faulty.records.size());
  std::set<int> seen;
  for (const auto& rec : labeled_faulty.records) {
    targets.push_back(gan_class_index(rec.label.cls));
    seen.insert(targets.back());
  }
  for (int k = 0; k < kGanClasses; ++k)
    if (!seen.count(k))
      throw InvalidInputError("adversarial training set is missing class " +
                              to_string(static_cast<FailureClass>(k + 1)));

  GanModel gan;
  gan.vae = vae.clone();
  Rng rng(config.seed);
  gan.discriminator = build_discriminator(rng);

  Network& enc = gan.vae.encoder;
  Network& dec = gan.vae.decoder;
  Network& disc = gan.discriminator;

  TrainConfig adam_cfg;
  adam_cfg.learning_rate = config.learning_rate;
  Adam adam_disc(disc.params(), adam_cfg);
  Adam adam_gen(concat_params(enc.params(), dec.params()), adam_cfg);

  const Mat x_std = standardized_matrix(gan.vae.standardization, labeled_faulty);
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  const auto starts = batch_starts(n, config.batch_size);

  int balance_streak = 0;
  gan.log.stop_reason = "max_epochs";
  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    rng.shuffle(order);
    double disc_loss_sum = 0.0, gen_loss_sum = 0.0;
    double fake_hits = 0.0;
    for (std::size_t bi = 0; bi < starts.size(); ++bi) {
      const int lo = starts[bi];
      const int hi = bi + 1 < starts.size() ? starts[bi + 1] : n;
      const int m = hi - lo;
      const Mat xb = gather_rows(x_std, order, lo, hi);
      std::vector<int> kb(static_cast<std::size_t>(m));
      for (int r = 0; r < m; ++r)
        kb[static_cast<std::size_t>(r)] = targets[static_cast<std::size_t>(order[static_cast<std::size_t>(lo + r)])];

      // Discriminator step: supervised cross-entropy on real records plus
      // realness BCE pushing real records toward 1 and decoded fakes
      // toward 0.
      const Mat logits_r = disc.forward(xb, true);
      Mat probs_r;
      softmax_rows(logits_r, probs_r);
      const auto real_r = realness_rows(logits_r);
      double ce = 0.0, bce_real = 0.0;
      Mat dlog_r(m, kGanClasses);
      for (int r = 0; r < m; ++r) {
        const int t = kb[static_cast<std::size_t>(r)];
        ce -= std::log(std::max(probs_r.at(r, t), 1e-12));
        const double rr = real_r.value[static_cast<std::size_t>(r)];
        bce_real -= std::log(std::max(rr, 1e-300));
        for (int c = 0; c < kGanClasses; ++c)
          dlog_r.at(r, c) =
              (probs_r.at(r, c) - (c == t ? 1.0 : 0.0) + (rr - 1.0) * probs_r.at(r, c)) / m;
      }
      ce /= m;
      bce_real /= m;
      disc.backward(dlog_r);

      Mat z(m, kLatentDim);
      for (double& v : z.a) v = rng.normal();
      const Mat xf = dec.forward(z, false);
      const Mat logits_f = disc.forward(xf, true);
      Mat probs_f;
      softmax_rows(logits_f, probs_f);
      const auto real_f = realness_rows(logits_f);
      double bce_fake = 0.0;
      Mat dlog_f(m, kGanClasses);
      for (int r = 0; r < m; ++r) {
        const double rf = real_f.value[static_cast<std::size_t>(r)];
        bce_fake -= std::log(std::max(1.0 - rf, 1e-300));
        if (rf < 0.5) fake_hits += 1.0;
        for (int c = 0; c < kGanClasses; ++c) dlog_f.at(r, c) = rf * probs_f.at(r, c) / m;
      }
      bce_fake /= m;
      disc.backward(dlog_f);
      adam_disc.step();
      disc_loss_sum += (ce + bce_real + bce_fake) * m;

      // Generator/VAE step: non-saturating realness on fresh fakes plus the
      // reconstruction regularizer, through one shared set of decoder
      // weights.
      Mat z2(m, kLatentDim);
      for (double& v : z2.a) v = rng.normal();
      const Mat xg = dec.forward(z2, true);
      const Mat logits_g = disc.forward(xg, true);
      Mat probs_g;
      softmax_rows(logits_g, probs_g);
      const auto real_g = realness_rows(logits_g);
      double ns = 0.0;
      Mat dlog_g(m, kGanClasses);
      for (int r = 0; r < m; ++r) {
        const double rg = real_g.value[static_cast<std::size_t>(r)];
        ns -= std::log(std::max(rg, 1e-300));
        for (int c = 0; c < kGanClasses; ++c)
          dlog_g.at(r, c) = (rg - 1.0) * probs_g.at(r, c) / m;
      }
      ns /= m;
      const Mat dxg = disc.backward(dlog_g);
      dec.backward(dxg);

      const Mat h = enc.forward(xb, true);
      const Mat mu = cols(h, 0, kLatentDim);
      const Mat xr = dec.forward(mu, true);
      double rec = 0.0;
      Mat dxr(m, kInputBins);
      for (std::size_t i = 0; i < xr.a.size(); ++i) {
        const double diff = xr.a[i] - xb.a[i];
        rec += 0.5 * diff * diff;
        dxr.a[i] = config.lambda_rec * diff / m;
      }
      rec /= m;
      const Mat dmu = dec.backward(dxr);
      Mat dh(m, 2 * kLatentDim);
      for (int r = 0; r < m; ++r)
        for (int c = 0; c < kLatentDim; ++c) dh.at(r, c) = dmu.at(r, c);
      enc.backward(dh);
      adam_gen.step();
      disc.zero_grads();
      gen_loss_sum += (ns + config.lambda_rec * rec) * m;
    }

    GanEpochLog entry;
    entry.epoch = epoch;
    entry.disc_loss = disc_loss_sum / n;
    entry.gen_loss = gen_loss_sum / n;
    entry.fake_accuracy = fake_hits / n;
    gan.log.epochs.push_back(entry);

    if (!std::isfinite(entry.disc_loss) || !std::isfinite(entry.gen_loss)) {
      gan.log.stop_reason = "divergence";
      throw TrainingFailureError("adversarial training diverged; log: " +
                                 sfm::to_json(gan.log).dump());
    }
    if (entry.fake_accuracy >= config.balance_lo && entry.fake_accuracy <= config.balance_hi) {
      if (++balance_streak >= config.balance_patience) {
        gan.log.stop_reason = "balance";
        break;
      }
    } else {
      balance_streak = 0;
    }
  }
  return gan;
}

std::pair<FailureClass, double> classify_failure(GanModel& gan, const std::vector<double>& x_std) {
  const auto out = discriminate(gan, x_std);
  int best = 0;
  for (int c = 1; c < kGanClasses; ++c)
    if (out.class_probs[static_cast<std::size_t>(c)] >
        out.class_probs[static_cast<std::size_t>(best)])
      best = c;
  return {static_cast<FailureClass>(best + 1), out.class_probs[static_cast<std::size_t>(best)]};
}

namespace {

std::vector<double> batch_realness(GanModel& gan, const Dataset& ds) {
  const Mat x = standardized_matrix(gan.vae.standardization, ds);
  const Mat logits = discriminate_logits(gan, x);
  return realness_rows(logits).value;
}

}  // namespace

void calibrate_unknown(GanModel& gan, const Dataset& val_known_faulty, const Dataset& val_unknown) {
  if (val_known_faulty.records.empty() || val_unknown.records.empty())
    throw InvalidInputError("calibration needs both known-faulty and unknown records");
  const auto known = batch_realness(gan, val_known_faulty);
  const auto unknown = batch_realness(gan, val_unknown);

  std::vector<double> all(known);
  all.insert(all.end(), unknown.begin(), unknown.end());
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  std::vector<double> candidates{0.0, 1.0};
  for (std::size_t i = 0; i + 1 < all.size(); ++i) candidates.push_back(0.5 * (all[i] + all[i + 1]));
  std::sort(candidates.begin(), candidates.end());

  std::vector<int> truth(known.size(), 0);
  truth.insert(truth.end(), unknown.size(), 1);

  double best_f1 = -1.0;
  bool best_polarity = true;
  double best_threshold = 0.5;
  for (bool high_for_known : {true, false}) {
    for (double t : candidates) {
      std::vector<int> pred;
      pred.reserve(truth.size());
      for (double r : known) pred.push_back((high_for_known ? r < t : r > t) ? 1 : 0);
      for (double r : unknown) pred.push_back((high_for_known ? r < t : r > t) ? 1 : 0);
      const double score = f1(truth, pred, Averaging::Binary);
      if (score > best_f1) {
        best_f1 = score;
        best_polarity = high_for_known;
        best_threshold = t;
      }
    }
  }
  gan.log.calibrated = true;
  gan.log.realness_high_for_known = best_polarity;
  gan.log.realness_threshold = best_threshold;
  gan.log.calibration_f1 = best_f1;
}

bool flag_unknown(GanModel& gan, const DetectionScore& detect_verdict,
                  const std::vector<double>& x_std, std::optional<double> realness_threshold) {
  if (detect_verdict.verdict != Verdict::Anomaly) return false;
  const double t = realness_threshold.value_or(gan.log.realness_threshold);
  const double r = discriminate(gan, x_std).realness;
  return gan.log.realness_high_for_known ? r < t : r > t;
}

FrameworkVerdict run_framework(VaeModel& vae, const DetectorConfig& detector_cfg, GanModel& gan,
                               const BaselineModel& localizer,
                               const std::vector<double>& power_dbm) {
  FrameworkVerdict v;
  v.detection = detect(vae, detector_cfg, power_dbm);
  v.detected = v.detection.verdict == Verdict::Anomaly;
  if (!v.detected) return v;

  const auto x_std = standardize(gan.vae.standardization, power_dbm);
  v.discriminator = discriminate(gan, x_std);
  v.unknown = flag_unknown(gan, v.detection, x_std);
  if (v.unknown) return v;

  v.failure_class = classify_failure(gan, x_std).first;
  v.location = localizer.predict(x_std);
  return v;
}

nlohmann::json FrameworkVerdict::to_json() const {
  nlohmann::json scores{{"euclidean", detection.euclidean},
                        {"mse", detection.mse},
                        {"verdict", to_string(detection.verdict)}};
  if (!discriminator.logits.empty()) {
    scores["realness"] = discriminator.realness;
    scores["class_probs"] = discriminator.class_probs;
  }
  nlohmann::json j{{"detected", detected}, {"unknown", unknown}, {"scores", scores}};
  if (failure_class) j["failure_class"] = to_string(*failure_class);
  if (location) j["location"] = *location;
  return j;
}

void write_verdicts_jsonl(const std::string& path, const Dataset& ds,
                          const std::vector<FrameworkVerdict>& verdicts) {
  if (ds.records.size() != verdicts.size())
    throw ShapeError("verdict dump: record and verdict counts differ");
  std::ofstream out(path);
  if (!out) throw IoError("verdict dump: cannot open " + path);
  for (std::size_t i = 0; i < verdicts.size(); ++i) {
    nlohmann::json j = verdicts[i].to_json();
    j["id"] = i;
    j["true_class"] = to_string(ds.records[i].label.cls);
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("verdict dump: write failed for " + path);
}

}  // namespace sfm
