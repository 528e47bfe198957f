#pragma once

#include <string>
#include <vector>

#include "sfm/vae.hpp"

namespace sfm {

enum class Verdict { Normal, Anomaly };

std::string to_string(Verdict v);

struct DetectionScore {
  double euclidean = 0.0;
  double mse = 0.0;
  Verdict verdict = Verdict::Normal;
};

enum class Calibration { Percentile, Manual };

// Percentile calibration derives the threshold from clean validation scores;
// manual mode reproduces a fixed-threshold regime.
struct DetectorConfig {
  double threshold = 0.0;
  Calibration calibration = Calibration::Percentile;
  double percentile = 99.9;
  double margin = 2.0;
};

void validate(const DetectorConfig& c);

// Linear interpolation between order statistics; p in (0, 100].
double percentile(std::vector<double> values, double p);

// Distance between the latent mean of the input and the latent mean of its
// own reconstruction; deterministic (encoder means, no sampling).
double euclidean_score(VaeModel& vae, const std::vector<double>& power_dbm);
// Mean squared reconstruction residual per bin, in standardized space.
double mse_score(VaeModel& vae, const std::vector<double>& power_dbm);

inline constexpr std::size_t kMinCalibrationScores = 50;

// Percentile mode: percentile(scores) x margin. Manual mode: the configured
// threshold unchanged. Scores come from clean validation records.
double calibrate_threshold(const std::vector<double>& clean_scores, const DetectorConfig& config);

// Verdict is ANOMALY iff the Euclidean score strictly exceeds the threshold.
DetectionScore detect(VaeModel& vae, const DetectorConfig& config,
                      const std::vector<double>& power_dbm);
std::vector<DetectionScore> detect_dataset(VaeModel& vae, const DetectorConfig& config,
                                           const Dataset& ds);

// Columns: id, euclidean, mse, verdict, true_class.
void write_score_csv(const std::string& path, const Dataset& ds,
                     const std::vector<DetectionScore>& scores);

}  // namespace sfm
