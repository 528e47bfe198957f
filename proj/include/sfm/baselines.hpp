#pragma once

#include <memory>
#include <string>
#include <vector>

#include "sfm/vae.hpp"

namespace sfm {

enum class BaselineKind { Linear, Knn, SvcRbf, Tree, Forest };

std::string to_string(BaselineKind k);
BaselineKind baseline_kind_from_string(const std::string& s);

// Feature rows plus labels. The flag records that standardization has been
// applied, so it cannot silently happen twice: every classifier consumes
// features standardized exactly once at ingestion.
struct FeatureBlock {
  Mat x;
  std::vector<int> y;
  bool standardized = false;
};

// Raw standardized 501-vectors with the record's failure class as label.
FeatureBlock features_for_identification(const Standardization& s, const Dataset& ds);
// Location labels in one flat element-id space: span index for amplifier
// faults, n_spans + channel index for channel faults (laser/filter). Clean
// or unknown records have no location and are rejected.
FeatureBlock features_for_localization(const Standardization& s, const Dataset& ds);
std::vector<int> localization_labels(const Dataset& ds);
// 12-dimensional latent means from the trained VAE (the reduced space the
// density-based detector operates in).
FeatureBlock latent_features(VaeModel& vae, const Dataset& ds);

// Re-standardizing an already-standardized block is a contract violation.
FeatureBlock standardize_features(const Standardization& s, const FeatureBlock& raw);

struct Hyperparams {
  double l2 = 0.0;          // LINEAR ridge penalty
  int k = 5;                // KNN neighbors
  double svc_c = 1.0;       // SVC box constraint
  double svc_gamma = 0.0;   // SVC RBF width; <= 0 means 1/d
  int max_depth = -1;       // TREE/FOREST; -1 = unlimited
  int n_trees = 100;        // FOREST
};

nlohmann::json to_json(const Hyperparams& h);
Hyperparams hyperparams_from_json(const nlohmann::json& j);

// Documented default search grids (one Hyperparams per cell).
std::vector<Hyperparams> default_grid(BaselineKind kind, int feature_dim);

class BaselineModel {
 public:
  struct SvcBinary {
    int positive_class = 0;
    std::vector<double> alpha;  // one per training point, 0 <= alpha <= C
    std::vector<int> sv_index;  // indices with alpha > 0
    double bias = 0.0;
  };

  struct TreeNode {
    int feature = -1;       // -1 marks a leaf
    double threshold = 0.0;
    int left = -1, right = -1;
    int label = 0;          // leaf prediction (class index)
  };

  struct Fields {
    BaselineKind kind = BaselineKind::Linear;
    Hyperparams hp;
    std::vector<int> classes;
    bool constant = false;
    int constant_label = 0;
    int dim = 0;

    Mat w;                   // LINEAR: classes x dim
    std::vector<double> b;   // LINEAR: per class
    Mat x;                   // KNN / SVC training features
    std::vector<int> yi;     // KNN / SVC training labels as class indices
    double gamma = 0.0;      // SVC resolved gamma
    std::vector<SvcBinary> svc;
    // FOREST stores one node vector per tree; TREE stores exactly one.
    std::vector<std::vector<TreeNode>> trees;
  };

  BaselineKind kind() const { return f_.kind; }
  const Hyperparams& hyperparams() const { return f_.hp; }
  const std::vector<int>& classes() const { return f_.classes; }
  bool is_constant() const { return f_.constant; }
  const Fields& fields() const { return f_; }

  int predict(const std::vector<double>& x) const;
  std::vector<int> predict_all(const Mat& x) const;

  nlohmann::json to_json() const;
  static BaselineModel from_json(const nlohmann::json& j);

 private:
  friend BaselineModel fit(BaselineKind, const FeatureBlock&, const Hyperparams&, std::uint64_t,
                           ExecMode);
  friend BaselineModel train_localizer(BaselineKind, const FeatureBlock&, const Hyperparams&,
                                       std::uint64_t, ExecMode);

  Fields f_;
};

// Multinomial logistic regression (gradient descent to tolerance), exact
// nearest-neighbor voting, one-vs-rest RBF-kernel SVMs solved by sequential
// minimal optimization, CART with Gini impurity, or a bagged CART ensemble
// with per-node feature subsampling. Needs >= 2 classes.
BaselineModel fit(BaselineKind kind, const FeatureBlock& train, const Hyperparams& hp,
                  std::uint64_t seed, ExecMode mode = exec_mode());

// Same contracts with location labels; a single-location dataset yields the
// trivial constant classifier instead of an error.
BaselineModel train_localizer(BaselineKind kind, const FeatureBlock& train,
                              const Hyperparams& hp, std::uint64_t seed,
                              ExecMode mode = exec_mode());

// Grid search on validation macro-F1; ties keep the earlier grid cell. Cells
// use seeds derived per cell index, so any execution order gives the result
// of the serial scan.
struct GridSearchResult {
  Hyperparams best;
  double val_f1 = 0.0;
  BaselineModel model;
};
GridSearchResult grid_search(BaselineKind kind, const FeatureBlock& train,
                             const FeatureBlock& val, std::uint64_t seed,
                             ExecMode mode = exec_mode());
GridSearchResult grid_search_localizer(BaselineKind kind, const FeatureBlock& train,
                                       const FeatureBlock& val, std::uint64_t seed,
                                       ExecMode mode = exec_mode());

// --------------------------------------------------------------------------
// Density-based clustering

inline constexpr int kDbscanNoise = -1;

// Reachability-closure DBSCAN. Core points (>= min_pts neighbors within eps,
// self included) form clusters via density connectivity; border points join
// the lowest-id cluster among their core neighbors; the rest are noise.
// Independent of point order.
std::vector<int> dbscan(const Mat& points, double eps, int min_pts);

struct DbscanUnknownConfig {
  std::vector<double> eps_grid;   // empty: derived from pairwise distances
  std::vector<int> min_pts_grid = {3, 5, 10};
  int expected_clusters = 5;
};

struct DbscanUnknownDetector {
  double eps = 0.0;
  int min_pts = 0;
  int val_clusters = 0;
  double val_f1 = 0.0;
};

// Grid search preferring the configuration whose cluster count on the
// validation latents is closest to the expected count; ties resolved by
// validation F1 of the induced known/unknown labeling (1 = unknown).
DbscanUnknownDetector calibrate_dbscan_unknown(const Mat& val_latents,
                                               const std::vector<int>& val_is_unknown,
                                               const DbscanUnknownConfig& cfg);
// Clusters the given latents with the calibrated parameters; noise points
// are flagged unknown (1), clustered points known (0).
std::vector<int> dbscan_unknown_apply(const DbscanUnknownDetector& d, const Mat& latents);

}  // namespace sfm
