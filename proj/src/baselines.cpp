#include "sfm/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>

#include "sfm/detect.hpp"
#include "sfm/eval.hpp"

namespace sfm {

namespace {

void require_features(const FeatureBlock& f, const char* who) {
  if (!f.standardized)
    throw InvalidInputError(std::string(who) + ": features must be standardized at ingestion");
  if (f.x.rows != static_cast<int>(f.y.size()))
    throw ShapeError(std::string(who) + ": feature rows and labels disagree");
  if (f.x.rows == 0) throw InvalidInputError(std::string(who) + ": empty feature block");
}

std::vector<int> sorted_classes(const std::vector<int>& y) {
  std::set<int> s(y.begin(), y.end());
  return std::vector<int>(s.begin(), s.end());
}

int class_index(const std::vector<int>& classes, int label) {
  auto it = std::lower_bound(classes.begin(), classes.end(), label);
  return static_cast<int>(it - classes.begin());
}

nlohmann::json mat_to_json(const Mat& m) {
  return {{"rows", m.rows}, {"cols", m.cols}, {"a", m.a}};
}

Mat mat_from_json(const nlohmann::json& j) {
  Mat m(j.at("rows").get<int>(), j.at("cols").get<int>());
  m.a = j.at("a").get<std::vector<double>>();
  if (m.a.size() != static_cast<std::size_t>(m.rows) * m.cols)
    throw InvalidInputError("matrix payload size disagrees with its shape");
  return m;
}

void validate_hyperparams(BaselineKind kind, const Hyperparams& hp) {
  switch (kind) {
    case BaselineKind::Linear:
      if (hp.l2 < 0.0) throw InvalidParameterError("l2 penalty must be >= 0");
      break;
    case BaselineKind::Knn:
      if (hp.k < 1) throw InvalidParameterError("k must be >= 1");
      break;
    case BaselineKind::SvcRbf:
      if (hp.svc_c <= 0.0) throw InvalidParameterError("C must be > 0");
      break;
    case BaselineKind::Tree:
      if (hp.max_depth != -1 && hp.max_depth < 1)
        throw InvalidParameterError("max_depth must be >= 1 or -1 for unlimited");
      break;
    case BaselineKind::Forest:
      if (hp.n_trees < 1) throw InvalidParameterError("n_trees must be >= 1");
      if (hp.max_depth != -1 && hp.max_depth < 1)
        throw InvalidParameterError("max_depth must be >= 1 or -1 for unlimited");
      break;
  }
}

// ------------------------------------------------------------------ LINEAR

double linear_loss(const Mat& x, const std::vector<int>& yi, const Mat& w,
                   const std::vector<double>& b, double l2, Mat* probs) {
  Mat logits;
  matmul_bt(x, w, logits, ExecMode::Serial);
  add_row_bias(logits, b);
  Mat p;
  softmax_rows(logits, p);
  double ce = 0.0;
  for (int r = 0; r < x.rows; ++r)
    ce -= std::log(std::max(p.at(r, yi[static_cast<std::size_t>(r)]), 1e-300));
  ce /= x.rows;
  double reg = 0.0;
  for (double v : w.a) reg += v * v;
  if (probs) *probs = std::move(p);
  return ce + 0.5 * l2 * reg;
}

void fit_linear(BaselineModel::Fields& m, const Mat& x, const std::vector<int>& yi, double l2) {
  const int k = static_cast<int>(m.classes.size());
  const int d = x.cols;
  const int n = x.rows;
  Mat w(k, d);
  std::vector<double> b(static_cast<std::size_t>(k), 0.0);

  double step = 1.0;
  Mat probs;
  double loss = linear_loss(x, yi, w, b, l2, &probs);
  for (int iter = 0; iter < 5000; ++iter) {
    // dL/dlogits = (p - onehot) / n, so dW = dlogits^T X + l2 W.
    Mat dlog = probs;
    for (int r = 0; r < n; ++r) dlog.at(r, yi[static_cast<std::size_t>(r)]) -= 1.0;
    for (double& v : dlog.a) v /= n;
    Mat dw;
    matmul_at(dlog, x, dw, ExecMode::Serial);
    for (std::size_t i = 0; i < dw.a.size(); ++i) dw.a[i] += l2 * w.a[i];
    std::vector<double> db;
    col_sums(dlog, db);

    double next_loss = loss;
    Mat next_probs;
    bool moved = false;
    while (step > 1e-15) {
      Mat wt = w;
      std::vector<double> bt = b;
      for (std::size_t i = 0; i < wt.a.size(); ++i) wt.a[i] -= step * dw.a[i];
      for (int c = 0; c < k; ++c)
        bt[static_cast<std::size_t>(c)] -= step * db[static_cast<std::size_t>(c)];
      double trial = linear_loss(x, yi, wt, bt, l2, &next_probs);
      if (trial <= loss) {
        w = std::move(wt);
        b = std::move(bt);
        next_loss = trial;
        moved = true;
        break;
      }
      step *= 0.5;
    }
    if (!moved) break;
    probs = std::move(next_probs);
    step *= 1.1;
    if (loss - next_loss < 1e-6) {
      loss = next_loss;
      break;
    }
    loss = next_loss;
  }
  m.w = std::move(w);
  m.b = std::move(b);
}

// --------------------------------------------------------------------- KNN

int knn_vote(std::size_t n_classes, const std::vector<int>& yi, const double* d2_row, int n,
             int k) {
  std::vector<std::pair<double, int>> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = {d2_row[i], i};
  std::sort(order.begin(), order.end());
  const int k_eff = std::min(k, n);
  std::vector<int> votes(n_classes, 0);
  for (int i = 0; i < k_eff; ++i)
    ++votes[static_cast<std::size_t>(
        yi[static_cast<std::size_t>(order[static_cast<std::size_t>(i)].second)])];
  int best = 0;
  for (std::size_t c = 1; c < votes.size(); ++c)
    if (votes[c] > votes[static_cast<std::size_t>(best)]) best = static_cast<int>(c);
  return best;
}

// --------------------------------------------------------------------- SVC

// Platt's sequential minimal optimization for one binary soft-margin RBF
// machine. Pair selection scans in index order, so the run is deterministic.
struct SmoProblem {
  const Mat* kernel = nullptr;
  std::vector<double> y;  // +1 / -1
  double c = 1.0;
  double tol = 1e-3;

  std::vector<double> alpha;
  std::vector<double> err;  // f(x_i) - y_i
  double bias = 0.0;

  int n() const { return static_cast<int>(y.size()); }
  double k(int i, int j) const { return kernel->at(i, j); }

  double f(int i) const {
    double s = bias;
    for (int j = 0; j < n(); ++j)
      if (alpha[static_cast<std::size_t>(j)] > 0.0)
        s += alpha[static_cast<std::size_t>(j)] * y[static_cast<std::size_t>(j)] * k(j, i);
    return s;
  }

  bool take_step(int i1, int i2) {
    if (i1 == i2) return false;
    const auto u1 = static_cast<std::size_t>(i1);
    const auto u2 = static_cast<std::size_t>(i2);
    const double a1_old = alpha[u1], a2_old = alpha[u2];
    const double y1 = y[u1], y2 = y[u2];
    const double e1 = err[u1], e2 = err[u2];
    const double s = y1 * y2;
    double lo, hi;
    if (s < 0) {
      lo = std::max(0.0, a2_old - a1_old);
      hi = std::min(c, c + a2_old - a1_old);
    } else {
      lo = std::max(0.0, a1_old + a2_old - c);
      hi = std::min(c, a1_old + a2_old);
    }
    if (lo >= hi) return false;
    const double k11 = k(i1, i1), k12 = k(i1, i2), k22 = k(i2, i2);
    const double eta = k11 + k22 - 2.0 * k12;
    double a2;
    if (eta > 0.0) {
      a2 = a2_old + y2 * (e1 - e2) / eta;
      a2 = std::clamp(a2, lo, hi);
    } else {
      // Degenerate curvature (duplicate points): evaluate the restricted
      // dual objective at both clip ends and take the lower one.
      const double v1 = e1 + y1 - bias - a1_old * y1 * k11 - a2_old * y2 * k12;
      const double v2 = e2 + y2 - bias - a1_old * y1 * k12 - a2_old * y2 * k22;
      const auto obj = [&](double a2n) {
        const double a1n = a1_old + s * (a2_old - a2n);
        return 0.5 * k11 * a1n * a1n + 0.5 * k22 * a2n * a2n + s * k12 * a1n * a2n +
               y1 * v1 * a1n + y2 * v2 * a2n - a1n - a2n;
      };
      const double obj_lo = obj(lo), obj_hi = obj(hi);
      if (obj_lo < obj_hi - 1e-12)
        a2 = lo;
      else if (obj_hi < obj_lo - 1e-12)
        a2 = hi;
      else
        return false;
    }
    if (std::abs(a2 - a2_old) < 1e-10 * (a2 + a2_old + 1e-10)) return false;
    double a1 = a1_old + s * (a2_old - a2);
    a1 = std::clamp(a1, 0.0, c);

    const double b_old = bias;
    const double da1 = y1 * (a1 - a1_old), da2 = y2 * (a2 - a2_old);
    const double b1 = bias - e1 - da1 * k11 - da2 * k12;
    const double b2 = bias - e2 - da1 * k12 - da2 * k22;
    if (a1 > 0.0 && a1 < c)
      bias = b1;
    else if (a2 > 0.0 && a2 < c)
      bias = b2;
    else
      bias = 0.5 * (b1 + b2);

    alpha[u1] = a1;
    alpha[u2] = a2;
    const double db = bias - b_old;
    for (int j = 0; j < n(); ++j)
      err[static_cast<std::size_t>(j)] += da1 * k(i1, j) + da2 * k(i2, j) + db;
    return true;
  }

  bool examine(int i2) {
    const auto u2 = static_cast<std::size_t>(i2);
    const double y2 = y[u2], a2 = alpha[u2], e2 = err[u2];
    const double r2 = e2 * y2;
    if (!((r2 < -tol && a2 < c) || (r2 > tol && a2 > 0.0))) return false;

    int best = -1;
    double best_gap = 0.0;
    for (int i = 0; i < n(); ++i) {
      const auto u = static_cast<std::size_t>(i);
      if (alpha[u] <= 0.0 || alpha[u] >= c) continue;
      const double gap = std::abs(err[u] - e2);
      if (gap > best_gap) {
        best_gap = gap;
        best = i;
      }
    }
    if (best >= 0 && take_step(best, i2)) return true;
    for (int i = 0; i < n(); ++i) {
      const auto u = static_cast<std::size_t>(i);
      if (alpha[u] > 0.0 && alpha[u] < c && take_step(i, i2)) return true;
    }
    for (int i = 0; i < n(); ++i)
      if (take_step(i, i2)) return true;
    return false;
  }

  void solve() {
    alpha.assign(static_cast<std::size_t>(n()), 0.0);
    err.resize(static_cast<std::size_t>(n()));
    for (int i = 0; i < n(); ++i) err[static_cast<std::size_t>(i)] = -y[static_cast<std::size_t>(i)];
    bias = 0.0;

    int changed = 0;
    bool examine_all = true;
    int sweeps = 0;
    while ((changed > 0 || examine_all) && sweeps < 4000) {
      ++sweeps;
      changed = 0;
      if (examine_all) {
        for (int i = 0; i < n(); ++i) changed += examine(i) ? 1 : 0;
      } else {
        for (int i = 0; i < n(); ++i) {
          const auto u = static_cast<std::size_t>(i);
          if (alpha[u] > 0.0 && alpha[u] < c) changed += examine(i) ? 1 : 0;
        }
      }
      if (examine_all)
        examine_all = false;
      else if (changed == 0)
        examine_all = true;
    }
  }
};

void rbf_kernel_matrix(const Mat& a, const Mat& b, double gamma, Mat& out, ExecMode mode) {
  pairwise_sqdist(a, b, out, mode);
  for (double& v : out.a) v = std::exp(-gamma * v);
}

void fit_svc(BaselineModel::Fields& m, const Mat& x, const std::vector<int>& yi, double c,
             double gamma, ExecMode mode) {
  const int n = x.rows;
  Mat kernel;
  rbf_kernel_matrix(x, x, gamma, kernel, mode);
  m.gamma = gamma;
  m.svc.clear();
  for (std::size_t ci = 0; ci < m.classes.size(); ++ci) {
    SmoProblem p;
    p.kernel = &kernel;
    p.c = c;
    p.y.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
      p.y[static_cast<std::size_t>(i)] =
          yi[static_cast<std::size_t>(i)] == static_cast<int>(ci) ? 1.0 : -1.0;
    p.solve();
    BaselineModel::SvcBinary bin;
    bin.positive_class = m.classes[ci];
    bin.alpha = p.alpha;
    bin.bias = p.bias;
    for (int i = 0; i < n; ++i)
      if (p.alpha[static_cast<std::size_t>(i)] > 1e-12) bin.sv_index.push_back(i);
    m.svc.push_back(std::move(bin));
  }
}

// -------------------------------------------------------------------- CART

struct TreeBuilder {
  const Mat* x = nullptr;
  const std::vector<int>* yi = nullptr;
  int n_classes = 0;
  int max_depth = -1;
  int features_per_node = 0;  // 0 = all features
  Rng* rng = nullptr;
  std::vector<BaselineModel::TreeNode> nodes;

  double gini(const std::vector<int>& counts, int total) const {
    if (total == 0) return 0.0;
    double g = 1.0;
    for (int c : counts) {
      const double p = static_cast<double>(c) / total;
      g -= p * p;
    }
    return g;
  }

  int majority(const std::vector<int>& counts) const {
    int best = 0;
    for (std::size_t c = 1; c < counts.size(); ++c)
      if (counts[c] > counts[static_cast<std::size_t>(best)]) best = static_cast<int>(c);
    return best;
  }

  std::vector<int> node_features() {
    const int d = x->cols;
    if (features_per_node <= 0 || features_per_node >= d) {
      std::vector<int> all(static_cast<std::size_t>(d));
      std::iota(all.begin(), all.end(), 0);
      return all;
    }
    // Partial Fisher-Yates over feature ids, then sorted so the
    // lowest-feature tie rule matches the full scan.
    std::vector<int> pool(static_cast<std::size_t>(d));
    std::iota(pool.begin(), pool.end(), 0);
    for (int i = 0; i < features_per_node; ++i) {
      const auto j = i + static_cast<int>(rng->uniform_index(static_cast<std::uint64_t>(d - i)));
      std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
    }
    std::vector<int> chosen(pool.begin(), pool.begin() + features_per_node);
    std::sort(chosen.begin(), chosen.end());
    return chosen;
  }

  int build(std::vector<int>& idx, int depth) {
    std::vector<int> counts(static_cast<std::size_t>(n_classes), 0);
    for (int i : idx) ++counts[static_cast<std::size_t>((*yi)[static_cast<std::size_t>(i)])];
    const int total = static_cast<int>(idx.size());
    const double impurity = gini(counts, total);

    BaselineModel::TreeNode node;
    node.label = majority(counts);
    const int id = static_cast<int>(nodes.size());
    nodes.push_back(node);

    const bool depth_ok = max_depth < 0 || depth < max_depth;
    if (!depth_ok || impurity <= 0.0 || total < 2) return id;

    int best_feature = -1;
    double best_threshold = 0.0;
    double best_weighted = impurity - 1e-12;
    const auto features = node_features();
    std::vector<std::pair<double, int>> vals(idx.size());
    for (int f : features) {
      for (std::size_t i = 0; i < idx.size(); ++i) {
        const int r = idx[i];
        vals[i] = {x->at(r, f), (*yi)[static_cast<std::size_t>(r)]};
      }
      std::sort(vals.begin(), vals.end(),
                [](const auto& a, const auto& b) { return a.first < b.first; });
      std::vector<int> left_counts(static_cast<std::size_t>(n_classes), 0);
      int n_left = 0;
      for (std::size_t i = 0; i + 1 < vals.size(); ++i) {
        ++left_counts[static_cast<std::size_t>(vals[i].second)];
        ++n_left;
        if (vals[i].first == vals[i + 1].first) continue;
        std::vector<int> right_counts(counts);
        for (int c = 0; c < n_classes; ++c)
          right_counts[static_cast<std::size_t>(c)] -= left_counts[static_cast<std::size_t>(c)];
        const int n_right = total - n_left;
        const double weighted = (n_left * gini(left_counts, n_left) +
                                 n_right * gini(right_counts, n_right)) /
                                total;
        if (weighted < best_weighted) {
          best_weighted = weighted;
          best_feature = f;
          best_threshold = 0.5 * (vals[i].first + vals[i + 1].first);
        }
      }
    }
    if (best_feature < 0) return id;

    std::vector<int> left_idx, right_idx;
    for (int i : idx)
      (x->at(i, best_feature) <= best_threshold ? left_idx : right_idx).push_back(i);
    if (left_idx.empty() || right_idx.empty()) return id;

    nodes[static_cast<std::size_t>(id)].feature = best_feature;
    nodes[static_cast<std::size_t>(id)].threshold = best_threshold;
    const int left = build(left_idx, depth + 1);
    nodes[static_cast<std::size_t>(id)].left = left;
    const int right = build(right_idx, depth + 1);
    nodes[static_cast<std::size_t>(id)].right = right;
    return id;
  }
};

std::vector<BaselineModel::TreeNode> build_tree(const Mat& x, const std::vector<int>& yi,
                                                int n_classes, int max_depth,
                                                std::vector<int> idx, int features_per_node,
                                                Rng* rng) {
  TreeBuilder b;
  b.x = &x;
  b.yi = &yi;
  b.n_classes = n_classes;
  b.max_depth = max_depth;
  b.features_per_node = features_per_node;
  b.rng = rng;
  b.build(idx, 0);
  return std::move(b.nodes);
}

int tree_predict(const std::vector<BaselineModel::TreeNode>& nodes, const double* row) {
  int at = 0;
  while (nodes[static_cast<std::size_t>(at)].feature >= 0) {
    const auto& nd = nodes[static_cast<std::size_t>(at)];
    at = row[nd.feature] <= nd.threshold ? nd.left : nd.right;
  }
  return nodes[static_cast<std::size_t>(at)].label;
}

void fit_tree(BaselineModel::Fields& m, const Mat& x, const std::vector<int>& yi, int max_depth) {
  std::vector<int> idx(static_cast<std::size_t>(x.rows));
  std::iota(idx.begin(), idx.end(), 0);
  m.trees.clear();
  m.trees.push_back(
      build_tree(x, yi, static_cast<int>(m.classes.size()), max_depth, std::move(idx), 0, nullptr));
}

void fit_forest(BaselineModel::Fields& m, const Mat& x, const std::vector<int>& yi, int max_depth,
                int n_trees, std::uint64_t seed, ExecMode mode) {
  // A single-tree ensemble degenerates to plain CART: full sample, all
  // features, so FOREST(1) and TREE agree exactly.
  if (n_trees == 1) {
    fit_tree(m, x, yi, max_depth);
    return;
  }
  const int n = x.rows;
  const int d = x.cols;
  const int per_node = std::max(1, static_cast<int>(std::ceil(std::sqrt(static_cast<double>(d)))));
  m.trees.assign(static_cast<std::size_t>(n_trees), {});
  parallel_for(
      n_trees,
      [&](std::int64_t t) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(t)));
        std::vector<int> idx(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i)
          idx[static_cast<std::size_t>(i)] =
              static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(n)));
        std::sort(idx.begin(), idx.end());
        m.trees[static_cast<std::size_t>(t)] = build_tree(
            x, yi, static_cast<int>(m.classes.size()), max_depth, std::move(idx), per_node, &rng);
      },
      mode);
}

}  // namespace

// ----------------------------------------------------------------- public

std::string to_string(BaselineKind k) {
  switch (k) {
    case BaselineKind::Linear: return "LINEAR";
    case BaselineKind::Knn: return "KNN";
    case BaselineKind::SvcRbf: return "SVC_RBF";
    case BaselineKind::Tree: return "TREE";
    case BaselineKind::Forest: return "FOREST";
  }
  throw InvalidParameterError("unhandled baseline kind");
}

BaselineKind baseline_kind_from_string(const std::string& s) {
  if (s == "LINEAR") return BaselineKind::Linear;
  if (s == "KNN") return BaselineKind::Knn;
  if (s == "SVC_RBF") return BaselineKind::SvcRbf;
  if (s == "TREE") return BaselineKind::Tree;
  if (s == "FOREST") return BaselineKind::Forest;
  throw InvalidParameterError("unknown baseline kind: " + s);
}

FeatureBlock features_for_identification(const Standardization& s, const Dataset& ds) {
  FeatureBlock f;
  f.x = standardized_matrix(s, ds);
  f.y.reserve(ds.records.size());
  for (const auto& rec : ds.records) {
    if (rec.label.cls == FailureClass::UnknownMisalignment)
      throw InvalidInputError("identification features cannot carry unknown-failure records");
    f.y.push_back(static_cast<int>(rec.label.cls));
  }
  f.standardized = true;
  return f;
}

std::vector<int> localization_labels(const Dataset& ds) {
  std::vector<int> y;
  y.reserve(ds.records.size());
  for (const auto& rec : ds.records) {
    const auto cls = rec.label.cls;
    if (cls == FailureClass::None || cls == FailureClass::UnknownMisalignment)
      throw InvalidInputError("localization labels need a faulty record with a location");
    if (rec.label.location < 0) throw InvalidInputError("faulty record is missing its location");
    if (cls == FailureClass::EdfaNfIncrease)
      y.push_back(rec.label.location);
    else
      y.push_back(rec.scenario.n_spans + rec.label.location);
  }
  return y;
}

FeatureBlock features_for_localization(const Standardization& s, const Dataset& ds) {
  FeatureBlock f;
  f.x = standardized_matrix(s, ds);
  f.y = localization_labels(ds);
  f.standardized = true;
  return f;
}

FeatureBlock latent_features(VaeModel& vae, const Dataset& ds) {
  FeatureBlock f;
  Mat x_std = standardized_matrix(vae.standardization, ds);
  f.x = encode_mu(vae, x_std);
  f.y.reserve(ds.records.size());
  for (const auto& rec : ds.records) f.y.push_back(static_cast<int>(rec.label.cls));
  f.standardized = true;
  return f;
}

FeatureBlock standardize_features(const Standardization& s, const FeatureBlock& raw) {
  if (raw.standardized)
    throw InvalidInputError("features are already standardized; refusing to standardize twice");
  if (raw.x.cols != static_cast<int>(s.mean.size()))
    throw ShapeError("feature width disagrees with the standardization");
  FeatureBlock out;
  out.x = raw.x;
  for (int r = 0; r < out.x.rows; ++r) {
    double* row = out.x.row(r);
    for (int c = 0; c < out.x.cols; ++c)
      row[c] = (row[c] - s.mean[static_cast<std::size_t>(c)]) / s.std[static_cast<std::size_t>(c)];
  }
  out.y = raw.y;
  out.standardized = true;
  return out;
}

nlohmann::json to_json(const Hyperparams& h) {
  return {{"l2", h.l2},           {"k", h.k},
          {"svc_c", h.svc_c},     {"svc_gamma", h.svc_gamma},
          {"max_depth", h.max_depth}, {"n_trees", h.n_trees}};
}

Hyperparams hyperparams_from_json(const nlohmann::json& j) {
  Hyperparams h;
  h.l2 = j.at("l2").get<double>();
  h.k = j.at("k").get<int>();
  h.svc_c = j.at("svc_c").get<double>();
  h.svc_gamma = j.at("svc_gamma").get<double>();
  h.max_depth = j.at("max_depth").get<int>();
  h.n_trees = j.at("n_trees").get<int>();
  return h;
}

std::vector<Hyperparams> default_grid(BaselineKind kind, int feature_dim) {
  if (feature_dim < 1) throw InvalidParameterError("feature dimension must be >= 1");
  std::vector<Hyperparams> grid;
  Hyperparams h;
  switch (kind) {
    case BaselineKind::Linear:
      for (double l2 : {0.0, 1e-4, 1e-2}) {
        h.l2 = l2;
        grid.push_back(h);
      }
      break;
    case BaselineKind::Knn:
      for (int k : {1, 3, 5, 7, 11}) {
        h.k = k;
        grid.push_back(h);
      }
      break;
    case BaselineKind::SvcRbf:
      for (double c : {0.1, 1.0, 10.0, 100.0})
        for (double g : {1.0 / feature_dim, 0.01, 0.1}) {
          h.svc_c = c;
          h.svc_gamma = g;
          grid.push_back(h);
        }
      break;
    case BaselineKind::Tree:
      for (int depth : {4, 8, 16, -1}) {
        h.max_depth = depth;
        grid.push_back(h);
      }
      break;
    case BaselineKind::Forest:
      for (int trees : {50, 100, 200}) {
        h.n_trees = trees;
        grid.push_back(h);
      }
      break;
  }
  return grid;
}

int BaselineModel::predict(const std::vector<double>& x) const {
  Mat q(1, static_cast<int>(x.size()));
  std::copy(x.begin(), x.end(), q.a.begin());
  return predict_all(q)[0];
}

std::vector<int> BaselineModel::predict_all(const Mat& q) const {
  if (q.cols != f_.dim) throw ShapeError("query width disagrees with the fitted model");
  std::vector<int> out(static_cast<std::size_t>(q.rows), 0);
  if (f_.constant) {
    std::fill(out.begin(), out.end(), f_.constant_label);
    return out;
  }
  switch (f_.kind) {
    case BaselineKind::Linear: {
      Mat logits;
      matmul_bt(q, f_.w, logits, ExecMode::Serial);
      add_row_bias(logits, f_.b);
      for (int r = 0; r < q.rows; ++r) {
        const double* row = logits.row(r);
        int best = 0;
        for (int c = 1; c < logits.cols; ++c)
          if (row[c] > row[best]) best = c;
        out[static_cast<std::size_t>(r)] = f_.classes[static_cast<std::size_t>(best)];
      }
      break;
    }
    case BaselineKind::Knn: {
      Mat d2;
      pairwise_sqdist(q, f_.x, d2, ExecMode::Serial);
      for (int r = 0; r < q.rows; ++r)
        out[static_cast<std::size_t>(r)] = f_.classes[static_cast<std::size_t>(
            knn_vote(f_.classes.size(), f_.yi, d2.row(r), f_.x.rows, f_.hp.k))];
      break;
    }
    case BaselineKind::SvcRbf: {
      Mat kq;
      rbf_kernel_matrix(q, f_.x, f_.gamma, kq, ExecMode::Serial);
      for (int r = 0; r < q.rows; ++r) {
        const double* krow = kq.row(r);
        int best = 0;
        double best_val = -std::numeric_limits<double>::infinity();
        for (std::size_t ci = 0; ci < f_.svc.size(); ++ci) {
          const auto& bin = f_.svc[ci];
          double dec = bin.bias;
          for (int i : bin.sv_index) {
            const auto u = static_cast<std::size_t>(i);
            const double yb = f_.yi[u] == static_cast<int>(ci) ? 1.0 : -1.0;
            dec += bin.alpha[u] * yb * krow[i];
          }
          if (dec > best_val) {
            best_val = dec;
            best = static_cast<int>(ci);
          }
        }
        out[static_cast<std::size_t>(r)] = f_.classes[static_cast<std::size_t>(best)];
      }
      break;
    }
    case BaselineKind::Tree: {
      for (int r = 0; r < q.rows; ++r)
        out[static_cast<std::size_t>(r)] =
            f_.classes[static_cast<std::size_t>(tree_predict(f_.trees[0], q.row(r)))];
      break;
    }
    case BaselineKind::Forest: {
      for (int r = 0; r < q.rows; ++r) {
        std::vector<int> votes(f_.classes.size(), 0);
        for (const auto& tree : f_.trees)
          ++votes[static_cast<std::size_t>(tree_predict(tree, q.row(r)))];
        int best = 0;
        for (std::size_t c = 1; c < votes.size(); ++c)
          if (votes[c] > votes[static_cast<std::size_t>(best)]) best = static_cast<int>(c);
        out[static_cast<std::size_t>(r)] = f_.classes[static_cast<std::size_t>(best)];
      }
      break;
    }
  }
  return out;
}

BaselineModel fit(BaselineKind kind, const FeatureBlock& train, const Hyperparams& hp,
                  std::uint64_t seed, ExecMode mode) {
  require_features(train, "fit");
  validate_hyperparams(kind, hp);
  BaselineModel m;
  auto& f = m.f_;
  f.kind = kind;
  f.hp = hp;
  f.dim = train.x.cols;
  f.classes = sorted_classes(train.y);
  if (f.classes.size() < 2)
    throw InvalidInputError("fit needs at least two classes; got " +
                            std::to_string(f.classes.size()));
  std::vector<int> yi(train.y.size());
  for (std::size_t i = 0; i < train.y.size(); ++i)
    yi[i] = class_index(f.classes, train.y[i]);

  switch (kind) {
    case BaselineKind::Linear:
      fit_linear(f, train.x, yi, hp.l2);
      break;
    case BaselineKind::Knn:
      f.x = train.x;
      f.yi = yi;
      break;
    case BaselineKind::SvcRbf: {
      const double gamma = hp.svc_gamma > 0.0 ? hp.svc_gamma : 1.0 / train.x.cols;
      f.x = train.x;
      f.yi = yi;
      fit_svc(f, train.x, yi, hp.svc_c, gamma, mode);
      break;
    }
    case BaselineKind::Tree:
      fit_tree(f, train.x, yi, hp.max_depth);
      break;
    case BaselineKind::Forest:
      fit_forest(f, train.x, yi, hp.max_depth, hp.n_trees, seed, mode);
      break;
  }
  return m;
}

BaselineModel train_localizer(BaselineKind kind, const FeatureBlock& train, const Hyperparams& hp,
                              std::uint64_t seed, ExecMode mode) {
  require_features(train, "train_localizer");
  const auto classes = sorted_classes(train.y);
  if (classes.size() == 1) {
    // Every fault sits at the same element; the trivial constant localizer
    // is correct by construction.
    BaselineModel m;
    m.f_.kind = kind;
    m.f_.hp = hp;
    m.f_.dim = train.x.cols;
    m.f_.classes = classes;
    m.f_.constant = true;
    m.f_.constant_label = classes[0];
    return m;
  }
  return fit(kind, train, hp, seed, mode);
}

nlohmann::json BaselineModel::to_json() const {
  nlohmann::json j{{"kind", "baseline"},
                   {"schema_version", 1},
                   {"algorithm", sfm::to_string(f_.kind)},
                   {"hyperparams", sfm::to_json(f_.hp)},
                   {"classes", f_.classes},
                   {"dim", f_.dim},
                   {"constant", f_.constant},
                   {"constant_label", f_.constant_label}};
  switch (f_.kind) {
    case BaselineKind::Linear:
      j["w"] = mat_to_json(f_.w);
      j["b"] = f_.b;
      break;
    case BaselineKind::Knn:
      j["x"] = mat_to_json(f_.x);
      j["yi"] = f_.yi;
      break;
    case BaselineKind::SvcRbf: {
      j["x"] = mat_to_json(f_.x);
      j["yi"] = f_.yi;
      j["gamma"] = f_.gamma;
      nlohmann::json bins = nlohmann::json::array();
      for (const auto& bin : f_.svc)
        bins.push_back({{"positive_class", bin.positive_class},
                        {"alpha", bin.alpha},
                        {"sv_index", bin.sv_index},
                        {"bias", bin.bias}});
      j["binaries"] = bins;
      break;
    }
    case BaselineKind::Tree:
    case BaselineKind::Forest: {
      nlohmann::json trees = nlohmann::json::array();
      for (const auto& tree : f_.trees) {
        nlohmann::json nodes = nlohmann::json::array();
        for (const auto& nd : tree)
          nodes.push_back({{"feature", nd.feature},
                          {"threshold", nd.threshold},
                          {"left", nd.left},
                          {"right", nd.right},
                          {"label", nd.label}});
        trees.push_back(nodes);
      }
      j["trees"] = trees;
      break;
    }
  }
  return j;
}

BaselineModel BaselineModel::from_json(const nlohmann::json& j) {
  if (j.value("kind", "") != "baseline")
    throw InvalidInputError("model file does not hold a baseline classifier");
  BaselineModel m;
  auto& f = m.f_;
  f.kind = baseline_kind_from_string(j.at("algorithm").get<std::string>());
  f.hp = hyperparams_from_json(j.at("hyperparams"));
  f.classes = j.at("classes").get<std::vector<int>>();
  f.dim = j.at("dim").get<int>();
  f.constant = j.at("constant").get<bool>();
  f.constant_label = j.at("constant_label").get<int>();
  if (f.constant) return m;
  switch (f.kind) {
    case BaselineKind::Linear:
      f.w = mat_from_json(j.at("w"));
      f.b = j.at("b").get<std::vector<double>>();
      break;
    case BaselineKind::Knn:
      f.x = mat_from_json(j.at("x"));
      f.yi = j.at("yi").get<std::vector<int>>();
      break;
    case BaselineKind::SvcRbf: {
      f.x = mat_from_json(j.at("x"));
      f.yi = j.at("yi").get<std::vector<int>>();
      f.gamma = j.at("gamma").get<double>();
      for (const auto& bj : j.at("binaries")) {
        SvcBinary bin;
        bin.positive_class = bj.at("positive_class").get<int>();
        bin.alpha = bj.at("alpha").get<std::vector<double>>();
        bin.sv_index = bj.at("sv_index").get<std::vector<int>>();
        bin.bias = bj.at("bias").get<double>();
        f.svc.push_back(std::move(bin));
      }
      break;
    }
    case BaselineKind::Tree:
    case BaselineKind::Forest:
      for (const auto& tj : j.at("trees")) {
        std::vector<TreeNode> tree;
        for (const auto& nj : tj) {
          TreeNode nd;
          nd.feature = nj.at("feature").get<int>();
          nd.threshold = nj.at("threshold").get<double>();
          nd.left = nj.at("left").get<int>();
          nd.right = nj.at("right").get<int>();
          nd.label = nj.at("label").get<int>();
          tree.push_back(nd);
        }
        f.trees.push_back(std::move(tree));
      }
      break;
  }
  return m;
}

namespace {

GridSearchResult grid_search_impl(BaselineKind kind, const FeatureBlock& train,
                                  const FeatureBlock& val, std::uint64_t seed, ExecMode mode,
                                  bool localizer) {
  require_features(train, "grid_search");
  require_features(val, "grid_search");
  const auto grid = default_grid(kind, train.x.cols);
  std::vector<double> scores(grid.size(), 0.0);
  std::vector<BaselineModel> models(grid.size());
  parallel_for(
      static_cast<std::int64_t>(grid.size()),
      [&](std::int64_t ci) {
        const auto cell_seed = derive_seed(seed, static_cast<std::uint64_t>(ci));
        auto model = localizer
                         ? train_localizer(kind, train, grid[static_cast<std::size_t>(ci)],
                                           cell_seed, ExecMode::Serial)
                         : fit(kind, train, grid[static_cast<std::size_t>(ci)], cell_seed,
                               ExecMode::Serial);
        const auto pred = model.predict_all(val.x);
        scores[static_cast<std::size_t>(ci)] = f1(val.y, pred, Averaging::Macro);
        models[static_cast<std::size_t>(ci)] = std::move(model);
      },
      mode);
  std::size_t best = 0;
  for (std::size_t ci = 1; ci < grid.size(); ++ci)
    if (scores[ci] > scores[best]) best = ci;
  GridSearchResult out;
  out.best = grid[best];
  out.val_f1 = scores[best];
  out.model = std::move(models[best]);
  return out;
}

}  // namespace

GridSearchResult grid_search(BaselineKind kind, const FeatureBlock& train, const FeatureBlock& val,
                             std::uint64_t seed, ExecMode mode) {
  return grid_search_impl(kind, train, val, seed, mode, false);
}

GridSearchResult grid_search_localizer(BaselineKind kind, const FeatureBlock& train,
                                       const FeatureBlock& val, std::uint64_t seed,
                                       ExecMode mode) {
  return grid_search_impl(kind, train, val, seed, mode, true);
}

// ------------------------------------------------------------------ DBSCAN

std::vector<int> dbscan(const Mat& points, double eps, int min_pts) {
  if (eps <= 0.0) throw InvalidParameterError("eps must be > 0");
  if (min_pts < 1) throw InvalidParameterError("min_pts must be >= 1");
  const int n = points.rows;
  std::vector<int> labels(static_cast<std::size_t>(n), kDbscanNoise);
  if (n == 0) return labels;

  Mat d2;
  pairwise_sqdist(points, points, d2, ExecMode::Serial);
  const double eps2 = eps * eps;
  std::vector<std::vector<int>> neighbors(static_cast<std::size_t>(n));
  std::vector<bool> core(static_cast<std::size_t>(n), false);
  for (int i = 0; i < n; ++i) {
    auto& nb = neighbors[static_cast<std::size_t>(i)];
    const double* row = d2.row(i);
    for (int j = 0; j < n; ++j)
      if (row[j] <= eps2) nb.push_back(j);
    core[static_cast<std::size_t>(i)] = static_cast<int>(nb.size()) >= min_pts;
  }

  // Clusters are the connected components of the core points under the
  // eps-neighbor relation, numbered by their lowest-index core point.
  int next_cluster = 0;
  for (int i = 0; i < n; ++i) {
    if (!core[static_cast<std::size_t>(i)] || labels[static_cast<std::size_t>(i)] != kDbscanNoise)
      continue;
    const int cid = next_cluster++;
    std::vector<int> stack{i};
    labels[static_cast<std::size_t>(i)] = cid;
    while (!stack.empty()) {
      const int p = stack.back();
      stack.pop_back();
      for (int q : neighbors[static_cast<std::size_t>(p)]) {
        if (!core[static_cast<std::size_t>(q)] ||
            labels[static_cast<std::size_t>(q)] != kDbscanNoise)
          continue;
        labels[static_cast<std::size_t>(q)] = cid;
        stack.push_back(q);
      }
    }
  }

  for (int i = 0; i < n; ++i) {
    if (core[static_cast<std::size_t>(i)] || labels[static_cast<std::size_t>(i)] != kDbscanNoise)
      continue;
    int best = kDbscanNoise;
    for (int q : neighbors[static_cast<std::size_t>(i)]) {
      if (!core[static_cast<std::size_t>(q)]) continue;
      const int cid = labels[static_cast<std::size_t>(q)];
      if (best == kDbscanNoise || cid < best) best = cid;
    }
    labels[static_cast<std::size_t>(i)] = best;
  }
  return labels;
}

namespace {

int count_clusters(const std::vector<int>& labels) {
  int top = -1;
  for (int l : labels) top = std::max(top, l);
  return top + 1;
}

std::vector<double> derived_eps_grid(const Mat& latents) {
  Mat d2;
  pairwise_sqdist(latents, latents, d2, ExecMode::Serial);
  std::vector<double> dist;
  dist.reserve(static_cast<std::size_t>(latents.rows) * (latents.rows - 1) / 2);
  for (int i = 0; i < latents.rows; ++i)
    for (int j = i + 1; j < latents.rows; ++j) {
      const double v = d2.at(i, j);
      if (v > 0.0) dist.push_back(std::sqrt(v));
    }
  if (dist.empty()) return {1.0};
  std::vector<double> grid;
  for (double p : {2.0, 5.0, 10.0, 15.0, 20.0, 30.0, 40.0, 50.0}) {
    const double e = percentile(dist, p);
    if (e > 0.0 && (grid.empty() || e > grid.back())) grid.push_back(e);
  }
  return grid;
}

}  // namespace

DbscanUnknownDetector calibrate_dbscan_unknown(const Mat& val_latents,
                                               const std::vector<int>& val_is_unknown,
                                               const DbscanUnknownConfig& cfg) {
  if (val_latents.rows != static_cast<int>(val_is_unknown.size()))
    throw ShapeError("latent rows and unknown flags disagree");
  if (val_latents.rows == 0) throw InvalidInputError("no latents to calibrate on");
  if (cfg.expected_clusters < 1) throw InvalidParameterError("expected_clusters must be >= 1");
  if (cfg.min_pts_grid.empty()) throw InvalidParameterError("min_pts grid is empty");
  const auto eps_grid = cfg.eps_grid.empty() ? derived_eps_grid(val_latents) : cfg.eps_grid;

  DbscanUnknownDetector best;
  int best_diff = std::numeric_limits<int>::max();
  for (double eps : eps_grid)
    for (int min_pts : cfg.min_pts_grid) {
      const auto labels = dbscan(val_latents, eps, min_pts);
      const int clusters = count_clusters(labels);
      std::vector<int> pred(labels.size());
      for (std::size_t i = 0; i < labels.size(); ++i) pred[i] = labels[i] == kDbscanNoise ? 1 : 0;
      const double score = f1(val_is_unknown, pred, Averaging::Binary);
      const int diff = std::abs(clusters - cfg.expected_clusters);
      if (diff < best_diff || (diff == best_diff && score > best.val_f1)) {
        best_diff = diff;
        best.eps = eps;
        best.min_pts = min_pts;
        best.val_clusters = clusters;
        best.val_f1 = score;
      }
    }
  return best;
}

std::vector<int> dbscan_unknown_apply(const DbscanUnknownDetector& d, const Mat& latents) {
  if (d.eps <= 0.0 || d.min_pts < 1)
    throw InvalidParameterError("detector has not been calibrated");
  const auto labels = dbscan(latents, d.eps, d.min_pts);
  std::vector<int> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) out[i] = labels[i] == kDbscanNoise ? 1 : 0;
  return out;
}

}  // namespace sfm
