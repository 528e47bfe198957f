#pragma once

#include <utility>
#include <vector>

#include "sfm/nn.hpp"
#include "sfm/specgen.hpp"

namespace sfm {

inline constexpr int kInputBins = 501;
inline constexpr int kLatentDim = 12;

// Per-bin z-score statistics taken from clean training spectra. The std is
// floored at 0.5 dB so near-constant bins (deep inter-channel notches) do
// not amplify measurement noise.
struct Standardization {
  std::vector<double> mean;
  std::vector<double> std;
};

inline constexpr double kStdFloorDb = 0.5;

Standardization compute_standardization(const Dataset& clean_train);
std::vector<double> standardize(const Standardization& s, const std::vector<double>& power_dbm);
std::vector<double> destandardize(const Standardization& s, const std::vector<double>& x_std);
// Rows = records, standardized.
Mat standardized_matrix(const Standardization& s, const Dataset& ds);

struct LatentSample {
  std::vector<double> mu, sigma, eps, z;
};

// Encoder 501 -> 25 (ReLU) -> batchnorm -> 24 outputs holding the 12 mean
// components and the 12 half-log-variance components side by side; decoder
// mirrors it back, 12 -> 25 (ReLU) -> 501 linear, and is shared verbatim as
// the adversarial generator.
struct VaeModel {
  Network encoder;
  Network decoder;
  Standardization standardization;
  TrainConfig config;

  nlohmann::json to_json() const;
  static VaeModel from_json(const nlohmann::json& j);
  VaeModel clone() const { return from_json(to_json()); }
};

// Freshly initialized (untrained) model with identity standardization.
VaeModel make_vae(std::uint64_t seed);

// x_std must already be standardized; inference mode, deterministic.
std::pair<std::vector<double>, std::vector<double>> encode(VaeModel& model,
                                                           const std::vector<double>& x_std);
std::vector<double> reparameterize(const std::vector<double>& mu, const std::vector<double>& sigma,
                                   const std::vector<double>& eps);
// Returns the reconstruction in dBm space (de-standardized).
std::vector<double> decode(VaeModel& model, const std::vector<double>& z);
double kl_divergence(const std::vector<double>& mu, const std::vector<double>& sigma);

// Batched counterparts (rows = records); inference mode.
Mat encode_mu(VaeModel& model, const Mat& x_std);
std::pair<Mat, Mat> encode_mu_sigma(VaeModel& model, const Mat& x_std);
Mat decode_batch_std(VaeModel& model, const Mat& z);  // standardized space
Mat decode_batch(VaeModel& model, const Mat& z);      // dBm space

// Trains on clean spectra only (any faulty record is an input error).
// Objective per record: 1/2 * sum of squared standardized reconstruction
// residuals + kl_weight * KL; mean over the batch. Returns the model with
// the best validation loss (validation uses the latent mean, no sampling).
VaeModel train_vae(const Dataset& clean_train, const Dataset& clean_val,
                   const TrainConfig& config);

struct VaeNnHybrid {
  VaeModel vae;
  Network classifier;  // kLatentDim -> 16 (ReLU) -> n_classes softmax
  int n_classes = 0;

  nlohmann::json to_json() const;
  static VaeNnHybrid from_json(const nlohmann::json& j);
};

// Two-step hybrid: starting from a trained VAE, jointly fine-tunes the
// encoder and a latent-space classifier head with cross-entropy (decoder
// untouched). Labels are class indices in [0, n_classes). Returns the model
// with the best validation macro-F1.
VaeNnHybrid train_vae_nn_with_labels(const VaeModel& pretrained, const Dataset& train,
                                     const std::vector<int>& y_train, const Dataset& val,
                                     const std::vector<int>& y_val, int n_classes,
                                     const TrainConfig& config);

// Identification variant: labels are the six known record classes (clean +
// five failure kinds); an unknown-misalignment record is an input error.
VaeNnHybrid train_vae_nn(const VaeModel& pretrained, const Dataset& labeled_train,
                         const Dataset& labeled_val, const TrainConfig& config);

int classify(VaeNnHybrid& hybrid, const std::vector<double>& power_dbm);
std::vector<int> predict(VaeNnHybrid& hybrid, const Dataset& ds);

// Finite-difference validation of the full training objective (frozen eps,
// inference-mode normalization) over all encoder + decoder parameters.
// Shapes are taken from the networks themselves, so reduced-width models can
// be checked; the summed per-bin reconstruction makes the loss magnitude —
// and with it the finite-difference noise floor — grow with input width.
double elbo_grad_check(VaeModel& model, const Mat& x_std, const Mat& eps, double kl_weight,
                       double h);

}  // namespace sfm
