#include "sfm/detect.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "sfm/dataset_io.hpp"

namespace sfm {

std::string to_string(Verdict v) { return v == Verdict::Normal ? "NORMAL" : "ANOMALY"; }

void validate(const DetectorConfig& c) {
  if (!(c.percentile > 0.0 && c.percentile <= 100.0))
    throw InvalidParameterError("detector: percentile must be in (0, 100]");
  if (!(c.margin >= 1.0)) throw InvalidParameterError("detector: margin must be >= 1");
}

double percentile(std::vector<double> values, double p) {
  if (values.empty()) throw InvalidInputError("percentile: no values");
  if (!(p > 0.0 && p <= 100.0)) throw InvalidParameterError("percentile: p must be in (0, 100]");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * p / 100.0;
  const std::size_t lo = static_cast<std::size_t>(h);
  if (lo + 1 >= values.size()) return values.back();
  return values[lo] + (h - static_cast<double>(lo)) * (values[lo + 1] - values[lo]);
}

namespace {

// Latent means of the input and of its reconstruction, plus the standardized
// per-record residual, shared by both scores.
struct ScorePieces {
  std::vector<double> mu_in, mu_rec;
  std::vector<double> row_mse;
};

ScorePieces score_pieces(VaeModel& vae, const Mat& x_std) {
  ScorePieces out;
  Mat mu1 = encode_mu(vae, x_std);
  const Mat xhat = decode_batch_std(vae, mu1);
  const Mat mu2 = encode_mu(vae, xhat);
  out.mu_in.assign(mu1.a.begin(), mu1.a.end());
  out.mu_rec.assign(mu2.a.begin(), mu2.a.end());
  out.row_mse.resize(x_std.rows);
  for (int r = 0; r < x_std.rows; ++r) {
    double sse = 0.0;
    for (int c = 0; c < x_std.cols; ++c) {
      const double d = x_std.at(r, c) - xhat.at(r, c);
      sse += d * d;
    }
    out.row_mse[r] = sse / static_cast<double>(x_std.cols);
  }
  return out;
}

Mat one_row(VaeModel& vae, const std::vector<double>& power_dbm) {
  Mat x(1, static_cast<int>(power_dbm.size()));
  x.a = standardize(vae.standardization, power_dbm);
  return x;
}

double euclidean_of(const ScorePieces& p, int row, int latent) {
  double s = 0.0;
  for (int i = 0; i < latent; ++i) {
    const double d = p.mu_in[static_cast<std::size_t>(row) * latent + i] -
                     p.mu_rec[static_cast<std::size_t>(row) * latent + i];
    s += d * d;
  }
  return std::sqrt(s);
}

}  // namespace

double euclidean_score(VaeModel& vae, const std::vector<double>& power_dbm) {
  const Mat x = one_row(vae, power_dbm);
  return euclidean_of(score_pieces(vae, x), 0, kLatentDim);
}

double mse_score(VaeModel& vae, const std::vector<double>& power_dbm) {
  const Mat x = one_row(vae, power_dbm);
  return score_pieces(vae, x).row_mse[0];
}

double calibrate_threshold(const std::vector<double>& clean_scores,
                           const DetectorConfig& config) {
  validate(config);
  if (config.calibration == Calibration::Manual) {
    if (!(config.threshold > 0.0))
      throw InvalidParameterError("detector: manual calibration needs a threshold > 0");
    return config.threshold;
  }
  if (clean_scores.size() < kMinCalibrationScores)
    throw InvalidInputError("calibration: need at least " +
                            std::to_string(kMinCalibrationScores) + " clean scores, got " +
                            std::to_string(clean_scores.size()));
  return percentile(clean_scores, config.percentile) * config.margin;
}

DetectionScore detect(VaeModel& vae, const DetectorConfig& config,
                      const std::vector<double>& power_dbm) {
  validate(config);
  if (!(config.threshold > 0.0))
    throw InvalidParameterError("detector: threshold must be calibrated (> 0) before use");
  DetectionScore s;
  const Mat x = one_row(vae, power_dbm);
  const ScorePieces p = score_pieces(vae, x);
  s.euclidean = euclidean_of(p, 0, kLatentDim);
  s.mse = p.row_mse[0];
  s.verdict = s.euclidean > config.threshold ? Verdict::Anomaly : Verdict::Normal;
  return s;
}

std::vector<DetectionScore> detect_dataset(VaeModel& vae, const DetectorConfig& config,
                                           const Dataset& ds) {
  validate(config);
  if (!(config.threshold > 0.0))
    throw InvalidParameterError("detector: threshold must be calibrated (> 0) before use");
  const Mat x = standardized_matrix(vae.standardization, ds);
  const ScorePieces p = score_pieces(vae, x);
  std::vector<DetectionScore> out(ds.records.size());
  for (std::size_t r = 0; r < out.size(); ++r) {
    out[r].euclidean = euclidean_of(p, static_cast<int>(r), kLatentDim);
    out[r].mse = p.row_mse[r];
    out[r].verdict = out[r].euclidean > config.threshold ? Verdict::Anomaly : Verdict::Normal;
  }
  return out;
}

void write_score_csv(const std::string& path, const Dataset& ds,
                     const std::vector<DetectionScore>& scores) {
  if (ds.records.size() != scores.size())
    throw ShapeError("score csv: record and score counts differ");
  std::ofstream out(path);
  if (!out) throw IoError("score csv: cannot open " + path);
  out << "id,euclidean,mse,verdict,true_class\n";
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out << i << ',' << format_double(scores[i].euclidean) << ','
        << format_double(scores[i].mse) << ',' << to_string(scores[i].verdict) << ','
        << to_string(ds.records[i].label.cls) << '\n';
  }
  if (!out) throw IoError("score csv: write failed for " + path);
}

}  // namespace sfm
