#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sfm/baselines.hpp"
#include "sfm/detect.hpp"

namespace sfm {

inline constexpr int kGanClasses = 5;  // the known failure classes

// Logistic of log-sum-exp: equals Z/(Z+1) with Z = sum_k exp(logit_k),
// computed in stabilized form. Strictly increasing in every coordinate,
// always inside (0,1).
double lambda_realness(const std::vector<double>& logits);

struct DiscriminatorOutput {
  std::vector<double> logits;       // one per failure class
  std::vector<double> class_probs;  // softmax of the logits
  double realness = 0.0;            // Z/(Z+1)
  double z = 0.0;                   // sum of exp(logits)
};

struct GanConfig {
  std::uint64_t seed = 1;
  int max_epochs = 120;
  int batch_size = 32;
  double learning_rate = 1e-3;
  double lambda_rec = 0.1;
  // Training stops early once discriminator accuracy on fakes has stayed
  // inside [balance_lo, balance_hi] this many consecutive epochs.
  double balance_lo = 0.4;
  double balance_hi = 0.6;
  int balance_patience = 10;
};

void validate(const GanConfig& c);
nlohmann::json to_json(const GanConfig& c);
GanConfig gan_config_from_json(const nlohmann::json& j);

struct GanEpochLog {
  int epoch = 0;
  double disc_loss = 0.0;
  double gen_loss = 0.0;
  double fake_accuracy = 0.0;
};

struct GanTrainingLog {
  std::vector<GanEpochLog> epochs;
  std::string stop_reason;  // "max_epochs" or "balance"
  // Unknown-flagging calibration; defaults apply until calibrate_unknown
  // runs. realness_high_for_known = true means unknowns sit BELOW the
  // threshold.
  bool calibrated = false;
  bool realness_high_for_known = true;
  double realness_threshold = 0.5;
  double calibration_f1 = 0.0;
};

nlohmann::json to_json(const GanTrainingLog& log);
GanTrainingLog gan_log_from_json(const nlohmann::json& j);

// The generator is not a separate network: it IS the companion VAE's
// decoder, so adversarial updates and reconstruction updates move the same
// weights.
struct GanModel {
  VaeModel vae;
  Network discriminator;  // 501 -> 85 (ReLU) -> 42 (ReLU) -> 5 logits
  GanTrainingLog log;

  Network& generator() { return vae.decoder; }

  nlohmann::json to_json() const;
  static GanModel from_json(const nlohmann::json& j);
};

// Untrained model: cloned companion VAE plus freshly initialized
// discriminator.
GanModel make_gan(const VaeModel& vae, std::uint64_t seed);

// x_std is a standardized 501-vector; one shared forward pass feeds both the
// class branch and the realness branch.
DiscriminatorOutput discriminate(GanModel& gan, const std::vector<double>& x_std);
// Batch variant returning raw logit rows.
Mat discriminate_logits(GanModel& gan, const Mat& x_std);

// Semi-supervised adversarial training. Labeled faulty records only (all
// five known classes must appear); the VAE is cloned and fine-tuned. Each
// batch takes one discriminator step (supervised cross-entropy on real
// records + realness binary cross-entropy on real and prior-decoded fake
// records) and one generator/VAE step (non-saturating realness loss on
// fresh fakes + lambda_rec * reconstruction).
GanModel train_gan(const Dataset& labeled_faulty, const VaeModel& vae, const GanConfig& config);

// Maps the class-branch argmax back to a failure class with its softmax
// probability; ties take the lowest class index.
std::pair<FailureClass, double> classify_failure(GanModel& gan, const std::vector<double>& x_std);

// Picks the (polarity, threshold) pair maximizing known-vs-unknown binary
// F1 on the given validation records and stores it in gan.log.
void calibrate_unknown(GanModel& gan, const Dataset& val_known_faulty, const Dataset& val_unknown);

// True iff the detector said ANOMALY and the realness score falls on the
// unknown side of the threshold (strictly). Without an explicit threshold
// the calibrated/log values apply.
bool flag_unknown(GanModel& gan, const DetectionScore& detect_verdict,
                  const std::vector<double>& x_std,
                  std::optional<double> realness_threshold = std::nullopt);

struct FrameworkVerdict {
  bool detected = false;
  bool unknown = false;
  std::optional<FailureClass> failure_class;  // present iff detected and known
  std::optional<int> location;                // present iff failure_class is
  DetectionScore detection;
  DiscriminatorOutput discriminator;  // populated once the second stage ran

  nlohmann::json to_json() const;
};

// Full pipeline for one raw spectrum: detection, unknown check,
// identification, localization, with each stage short-circuiting the rest.
FrameworkVerdict run_framework(VaeModel& vae, const DetectorConfig& detector_cfg, GanModel& gan,
                               const BaselineModel& localizer,
                               const std::vector<double>& power_dbm);

// One JSON object per record (JSON-lines).
void write_verdicts_jsonl(const std::string& path, const Dataset& ds,
                          const std::vector<FrameworkVerdict>& verdicts);

}  // namespace sfm
