#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "doctest.h"
#include "sfm/baselines.hpp"
#include "sfm/eval.hpp"

using namespace sfm;

namespace {

// Gaussian blobs, one center per class, already on standardized scale.
FeatureBlock make_blobs(int n_per_class, int n_classes, int dim, double spread,
                        std::uint64_t seed) {
  Rng rng(seed);
  FeatureBlock f;
  f.x = Mat(n_per_class * n_classes, dim);
  for (int c = 0; c < n_classes; ++c)
    for (int i = 0; i < n_per_class; ++i) {
      const int r = c * n_per_class + i;
      for (int d = 0; d < dim; ++d)
        f.x.at(r, d) = (d == c % dim ? 4.0 + 2.0 * (c / dim) : 0.0) + spread * rng.normal();
      f.y.push_back(c);
    }
  f.standardized = true;
  return f;
}

FeatureBlock from_points(const std::vector<std::vector<double>>& pts, const std::vector<int>& y) {
  FeatureBlock f;
  const int dim = static_cast<int>(pts[0].size());
  f.x = Mat(static_cast<int>(pts.size()), dim);
  for (std::size_t r = 0; r < pts.size(); ++r)
    for (int c = 0; c < dim; ++c) f.x.at(static_cast<int>(r), c) = pts[r][static_cast<std::size_t>(c)];
  f.y = y;
  f.standardized = true;
  return f;
}

double sqdist(const double* a, const double* b, int dim) {
  double s = 0.0;
  for (int d = 0; d < dim; ++d) {
    const double diff = a[d] - b[d];
    s += diff * diff;
  }
  return s;
}

}  // namespace

TEST_CASE("feature blocks standardize exactly once") {
  FeatureBlock raw;
  raw.x = Mat(2, 3);
  raw.x.at(0, 0) = 1.0;
  raw.x.at(1, 2) = -2.0;
  raw.y = {0, 1};
  Standardization s;
  s.mean = {1.0, 0.0, -1.0};
  s.std = {2.0, 1.0, 0.5};

  const auto once = standardize_features(s, raw);
  CHECK(once.standardized);
  CHECK(once.x.at(0, 0) == doctest::Approx(0.0));
  CHECK(once.x.at(0, 2) == doctest::Approx(2.0));
  CHECK(once.x.at(1, 2) == doctest::Approx(-2.0));
  CHECK_THROWS_AS(standardize_features(s, once), InvalidInputError);

  CHECK_THROWS_AS(fit(BaselineKind::Knn, raw, Hyperparams{}, 1), InvalidInputError);
}

TEST_CASE("fit rejects degenerate label sets") {
  auto f = make_blobs(5, 2, 3, 0.1, 11);
  std::fill(f.y.begin(), f.y.end(), 4);
  for (auto kind : {BaselineKind::Linear, BaselineKind::Knn, BaselineKind::SvcRbf,
                    BaselineKind::Tree, BaselineKind::Forest})
    CHECK_THROWS_AS(fit(kind, f, Hyperparams{}, 1), InvalidInputError);

  FeatureBlock empty;
  empty.standardized = true;
  CHECK_THROWS_AS(fit(BaselineKind::Knn, empty, Hyperparams{}, 1), InvalidInputError);
}

TEST_CASE("all five classifiers separate well-spaced blobs") {
  const auto train = make_blobs(12, 3, 4, 0.15, 21);
  const auto test = make_blobs(6, 3, 4, 0.15, 22);
  for (auto kind : {BaselineKind::Linear, BaselineKind::Knn, BaselineKind::SvcRbf,
                    BaselineKind::Tree, BaselineKind::Forest}) {
    Hyperparams hp;
    hp.n_trees = 25;
    const auto model = fit(kind, train, hp, 7);
    const auto pred = model.predict_all(test.x);
    CHECK_MESSAGE(f1(test.y, pred, Averaging::Macro) == doctest::Approx(1.0),
                  to_string(kind));
  }
}

TEST_CASE("nearest-neighbor prediction equals the brute-force rule") {
  // Quantized coordinates force repeated distances, so the distance-then-index
  // ordering and the smallest-class vote tie rule both get exercised.
  Rng rng(314);
  FeatureBlock train;
  const int n = 60, dim = 3;
  train.x = Mat(n, dim);
  for (int r = 0; r < n; ++r) {
    for (int d = 0; d < dim; ++d)
      train.x.at(r, d) = 0.5 * static_cast<double>(rng.uniform_index(7));
    train.y.push_back(static_cast<int>(rng.uniform_index(4)) + 2);
  }
  train.standardized = true;

  for (int k : {1, 3, 5}) {
    Hyperparams hp;
    hp.k = k;
    const auto model = fit(BaselineKind::Knn, train, hp, 1);
    for (int q = 0; q < 200; ++q) {
      std::vector<double> query(dim);
      for (int d = 0; d < dim; ++d)
        query[static_cast<std::size_t>(d)] = 0.5 * static_cast<double>(rng.uniform_index(7));

      std::vector<std::pair<double, int>> order;
      for (int r = 0; r < n; ++r)
        order.emplace_back(sqdist(query.data(), train.x.row(r), dim), r);
      std::sort(order.begin(), order.end());
      std::map<int, int> votes;
      for (int i = 0; i < k; ++i) votes[train.y[static_cast<std::size_t>(order[static_cast<std::size_t>(i)].second)]]++;
      int best_class = 0, best_count = -1;
      for (const auto& [cls, count] : votes)
        if (count > best_count) {
          best_count = count;
          best_class = cls;
        }
      CHECK(model.predict(query) == best_class);
    }
  }
}

TEST_CASE("nearest-neighbor vote ties go to the smallest class") {
  const auto train = from_points({{0.0}, {2.0}}, {9, 4});
  Hyperparams hp;
  hp.k = 2;
  const auto model = fit(BaselineKind::Knn, train, hp, 1);
  CHECK(model.predict({1.0}) == 4);
  CHECK(model.predict({10.0}) == 4);

  // k larger than the training set falls back to voting over everything.
  hp.k = 50;
  CHECK(fit(BaselineKind::Knn, train, hp, 1).predict({0.1}) == 4);
}

TEST_CASE("rbf support-vector machine solves xor") {
  const auto train = from_points({{0.0, 0.0}, {1.0, 1.0}, {0.0, 1.0}, {1.0, 0.0}}, {0, 0, 1, 1});
  Hyperparams hp;
  hp.svc_c = 10.0;
  hp.svc_gamma = 1.0;
  const auto model = fit(BaselineKind::SvcRbf, train, hp, 1);
  const auto pred = model.predict_all(train.x);
  CHECK(f1(train.y, pred, Averaging::Macro) == doctest::Approx(1.0));

  // By symmetry the dual optimum has every multiplier equal; maximizing the
  // one-parameter dual gives alpha* = 4 / sum_ij y_i y_j K_ij.
  const double e1 = std::exp(-1.0), e2 = std::exp(-2.0);
  const double s = 4.0 + 4.0 * e2 - 8.0 * e1;
  const double a_star = 4.0 / s;
  for (const auto& bin : model.fields().svc) {
    REQUIRE(bin.alpha.size() == 4);
    double sum_ay = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(bin.alpha[i] == doctest::Approx(a_star).epsilon(5e-3));
      const double y = train.y[i] == bin.positive_class ? 1.0 : -1.0;
      sum_ay += bin.alpha[i] * y;
    }
    CHECK(std::abs(sum_ay) < 1e-6);
    CHECK(std::abs(bin.bias) < 1e-3);
  }
}

TEST_CASE("support-vector duals satisfy the optimality conditions") {
  // Overlapping blobs with a few flipped labels produce both free and
  // at-bound multipliers.
  auto train = make_blobs(20, 3, 2, 0.8, 99);
  Rng flip(5);
  for (int i = 0; i < 6; ++i)
    train.y[flip.uniform_index(train.y.size())] = static_cast<int>(flip.uniform_index(3));

  Hyperparams hp;
  hp.svc_c = 1.0;
  hp.svc_gamma = 0.5;
  const auto model = fit(BaselineKind::SvcRbf, train, hp, 1);
  const auto& fields = model.fields();
  const int n = fields.x.rows;

  for (const auto& bin : fields.svc) {
    double sum_ay = 0.0;
    double worst = 0.0;
    for (int i = 0; i < n; ++i) {
      const double ai = bin.alpha[static_cast<std::size_t>(i)];
      CHECK(ai >= -1e-12);
      CHECK(ai <= hp.svc_c + 1e-12);
      const double yi =
          fields.classes[static_cast<std::size_t>(fields.yi[static_cast<std::size_t>(i)])] ==
                  bin.positive_class
              ? 1.0
              : -1.0;
      sum_ay += ai * yi;

      double fi = bin.bias;
      for (int j = 0; j < n; ++j) {
        const double aj = bin.alpha[static_cast<std::size_t>(j)];
        if (aj == 0.0) continue;
        const double yj =
            fields.classes[static_cast<std::size_t>(fields.yi[static_cast<std::size_t>(j)])] ==
                    bin.positive_class
                ? 1.0
                : -1.0;
        fi += aj * yj * std::exp(-hp.svc_gamma * sqdist(fields.x.row(j), fields.x.row(i), 2));
      }
      const double margin = yi * fi - 1.0;
      double viol = 0.0;
      if (ai <= 1e-9)
        viol = std::max(0.0, -margin);
      else if (ai >= hp.svc_c - 1e-9)
        viol = std::max(0.0, margin);
      else
        viol = std::abs(margin);
      worst = std::max(worst, viol);
    }
    CHECK(std::abs(sum_ay) < 1e-6);
    CHECK(worst < 1e-3);
  }
}

TEST_CASE("support-vector decisions agree between expansions") {
  const auto train = make_blobs(15, 2, 3, 0.6, 55);
  Hyperparams hp;
  hp.svc_c = 10.0;
  hp.svc_gamma = 0.1;
  const auto model = fit(BaselineKind::SvcRbf, train, hp, 1);
  const auto& fields = model.fields();
  const auto query = make_blobs(5, 2, 3, 0.6, 56);

  for (const auto& bin : fields.svc) {
    for (int q = 0; q < query.x.rows; ++q) {
      double sparse = bin.bias, dense = bin.bias;
      for (int i : bin.sv_index) {
        const double yi =
            fields.classes[static_cast<std::size_t>(fields.yi[static_cast<std::size_t>(i)])] ==
                    bin.positive_class
                ? 1.0
                : -1.0;
        sparse += bin.alpha[static_cast<std::size_t>(i)] * yi *
                  std::exp(-hp.svc_gamma * sqdist(fields.x.row(i), query.x.row(q), 3));
      }
      for (int i = 0; i < fields.x.rows; ++i) {
        const double yi =
            fields.classes[static_cast<std::size_t>(fields.yi[static_cast<std::size_t>(i)])] ==
                    bin.positive_class
                ? 1.0
                : -1.0;
        dense += bin.alpha[static_cast<std::size_t>(i)] * yi *
                 std::exp(-hp.svc_gamma * sqdist(fields.x.row(i), query.x.row(q), 3));
      }
      CHECK(std::abs(sparse - dense) < 1e-9);
    }
  }
}

TEST_CASE("unbounded tree memorizes distinct training points") {
  Rng rng(808);
  FeatureBlock train;
  const int n = 40;
  train.x = Mat(n, 5);
  for (int r = 0; r < n; ++r) {
    for (int d = 0; d < 5; ++d) train.x.at(r, d) = rng.normal();
    train.y.push_back(static_cast<int>(rng.uniform_index(3)));
  }
  if (std::set<int>(train.y.begin(), train.y.end()).size() < 2) train.y[0] = 1;
  train.standardized = true;

  Hyperparams hp;
  hp.max_depth = -1;
  const auto model = fit(BaselineKind::Tree, train, hp, 1);
  CHECK(f1(train.y, model.predict_all(train.x), Averaging::Macro) == doctest::Approx(1.0));

  hp.max_depth = 1;
  const auto stump = fit(BaselineKind::Tree, train, hp, 1);
  int internal = 0;
  for (const auto& nd : stump.fields().trees[0])
    if (nd.feature >= 0) ++internal;
  CHECK(internal <= 1);
}

TEST_CASE("every tree split strictly lowers weighted impurity") {
  const auto train = make_blobs(15, 3, 3, 1.2, 4242);
  Hyperparams hp;
  const auto model = fit(BaselineKind::Tree, train, hp, 1);
  const auto& nodes = model.fields().trees[0];
  REQUIRE(!nodes.empty());

  // Route the training set through the tree, tallying class counts per node.
  const int n_classes = static_cast<int>(model.classes().size());
  std::vector<std::vector<int>> counts(nodes.size(), std::vector<int>(n_classes, 0));
  for (int r = 0; r < train.x.rows; ++r) {
    const int cls = train.y[static_cast<std::size_t>(r)];
    int at = 0;
    while (true) {
      ++counts[static_cast<std::size_t>(at)][static_cast<std::size_t>(cls)];
      const auto& nd = nodes[static_cast<std::size_t>(at)];
      if (nd.feature < 0) break;
      at = train.x.at(r, nd.feature) <= nd.threshold ? nd.left : nd.right;
    }
  }
  const auto gini = [&](const std::vector<int>& c) {
    int total = std::accumulate(c.begin(), c.end(), 0);
    if (total == 0) return 0.0;
    double g = 1.0;
    for (int v : c) {
      const double p = static_cast<double>(v) / total;
      g -= p * p;
    }
    return g;
  };
  int internal = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].feature < 0) continue;
    ++internal;
    const auto& parent = counts[i];
    const auto& left = counts[static_cast<std::size_t>(nodes[i].left)];
    const auto& right = counts[static_cast<std::size_t>(nodes[i].right)];
    const int np = std::accumulate(parent.begin(), parent.end(), 0);
    const int nl = std::accumulate(left.begin(), left.end(), 0);
    const int nr = std::accumulate(right.begin(), right.end(), 0);
    CHECK(nl + nr == np);
    CHECK(nl > 0);
    CHECK(nr > 0);
    const double weighted = (nl * gini(left) + nr * gini(right)) / np;
    CHECK(weighted < gini(parent));
  }
  CHECK(internal > 0);
}

TEST_CASE("a single-tree forest degenerates to the plain tree") {
  const auto train = make_blobs(10, 3, 4, 1.0, 77);
  Hyperparams tree_hp;
  tree_hp.max_depth = 8;
  Hyperparams forest_hp = tree_hp;
  forest_hp.n_trees = 1;

  const auto tree = fit(BaselineKind::Tree, train, tree_hp, 123);
  const auto forest = fit(BaselineKind::Forest, train, forest_hp, 456);
  CHECK(tree.to_json()["trees"] == forest.to_json()["trees"]);

  const auto probe = make_blobs(8, 3, 4, 1.0, 78);
  CHECK(tree.predict_all(probe.x) == forest.predict_all(probe.x));
}

TEST_CASE("forest training is reproducible and parallel-safe") {
  const auto train = make_blobs(12, 3, 4, 1.0, 31);
  Hyperparams hp;
  hp.n_trees = 12;
  const auto a = fit(BaselineKind::Forest, train, hp, 9, ExecMode::Serial);
  const auto b = fit(BaselineKind::Forest, train, hp, 9, ExecMode::Parallel);
  CHECK(a.to_json() == b.to_json());
  const auto c = fit(BaselineKind::Forest, train, hp, 10, ExecMode::Serial);
  CHECK(a.to_json() != c.to_json());
  CHECK(a.fields().trees.size() == 12);
}

TEST_CASE("models survive a serialization round trip") {
  const auto train = make_blobs(10, 3, 4, 0.5, 61);
  const auto probe = make_blobs(7, 3, 4, 0.7, 62);
  for (auto kind : {BaselineKind::Linear, BaselineKind::Knn, BaselineKind::SvcRbf,
                    BaselineKind::Tree, BaselineKind::Forest}) {
    Hyperparams hp;
    hp.n_trees = 8;
    const auto model = fit(kind, train, hp, 5);
    const auto back = BaselineModel::from_json(model.to_json());
    CHECK(back.kind() == kind);
    CHECK(back.predict_all(probe.x) == model.predict_all(probe.x));
    CHECK(back.to_json() == model.to_json());
  }
  nlohmann::json wrong{{"kind", "vae"}};
  CHECK_THROWS_AS(BaselineModel::from_json(wrong), InvalidInputError);
}

TEST_CASE("grid search picks by validation score and ignores execution order") {
  const auto train = make_blobs(10, 3, 4, 0.9, 17);
  const auto val = make_blobs(5, 3, 4, 0.9, 18);
  for (auto kind : {BaselineKind::Knn, BaselineKind::Tree}) {
    const auto serial = grid_search(kind, train, val, 3, ExecMode::Serial);
    const auto parallel = grid_search(kind, train, val, 3, ExecMode::Parallel);
    CHECK(serial.val_f1 == parallel.val_f1);
    CHECK(to_json(serial.best) == to_json(parallel.best));
    CHECK(serial.model.to_json() == parallel.model.to_json());
    CHECK(serial.val_f1 > 0.8);
  }
  CHECK(default_grid(BaselineKind::SvcRbf, 501).size() == 12);
  CHECK(default_grid(BaselineKind::SvcRbf, 100)[0].svc_gamma == doctest::Approx(0.01));
  CHECK(default_grid(BaselineKind::Linear, 10).size() == 3);
  CHECK(default_grid(BaselineKind::Knn, 10).size() == 5);
  CHECK(default_grid(BaselineKind::Forest, 10).size() == 3);
}

TEST_CASE("density clustering separates blobs and flags sparse points") {
  std::vector<std::vector<double>> pts;
  for (int i = 0; i < 6; ++i) pts.push_back({0.1 * i, 0.0});
  for (int i = 0; i < 6; ++i) pts.push_back({10.0 + 0.1 * i, 0.0});
  const auto labels = dbscan(from_points(pts, std::vector<int>(12, 0)).x, 0.6, 3);
  CHECK(*std::max_element(labels.begin(), labels.end()) == 1);
  for (int i = 0; i < 6; ++i) {
    CHECK(labels[static_cast<std::size_t>(i)] == 0);
    CHECK(labels[static_cast<std::size_t>(6 + i)] == 1);
  }

  // All-identical points form one dense cluster.
  const auto same = dbscan(from_points(std::vector<std::vector<double>>(5, {2.0, 2.0}),
                                       std::vector<int>(5, 0))
                               .x,
                           0.5, 3);
  for (int l : same) CHECK(l == 0);

  // min_pts beyond the point count leaves only noise.
  const auto noise = dbscan(from_points(pts, std::vector<int>(12, 0)).x, 0.6, 13);
  for (int l : noise) CHECK(l == kDbscanNoise);

  CHECK_THROWS_AS(dbscan(Mat(2, 2), 0.0, 3), InvalidParameterError);
  CHECK_THROWS_AS(dbscan(Mat(2, 2), 1.0, 0), InvalidParameterError);
}

TEST_CASE("border points between two clusters take the lower cluster id") {
  // Index order puts the right-hand blob first, so the border point at 1.0
  // sees core 1.8 (cluster 0) and core 0.2 (cluster 1); the tie rule keeps 0.
  const std::vector<std::vector<double>> pts = {{1.8}, {1.9}, {2.0}, {0.0}, {0.1}, {0.2}, {1.0}};
  const auto labels = dbscan(from_points(pts, std::vector<int>(7, 0)).x, 0.85, 4);
  CHECK(labels == std::vector<int>{0, 0, 0, 1, 1, 1, 0});
}

TEST_CASE("density clustering matches the reachability-closure oracle") {
  Rng rng(2718);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 8 + static_cast<int>(rng.uniform_index(13));
    Mat pts(n, 2);
    for (double& v : pts.a) v = 2.0 * rng.uniform();
    const double eps = 0.3 + 0.4 * rng.uniform();
    const int min_pts = 2 + static_cast<int>(rng.uniform_index(4));

    // Oracle: boolean closure of the eps-adjacency restricted to cores.
    std::vector<std::vector<bool>> adj(static_cast<std::size_t>(n),
                                       std::vector<bool>(static_cast<std::size_t>(n), false));
    std::vector<int> degree(static_cast<std::size_t>(n), 0);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        adj[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
            sqdist(pts.row(i), pts.row(j), 2) <= eps * eps;
        if (adj[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]) ++degree[static_cast<std::size_t>(i)];
      }
    std::vector<bool> core(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) core[static_cast<std::size_t>(i)] = degree[static_cast<std::size_t>(i)] >= min_pts;

    auto reach = adj;
    for (int k = 0; k < n; ++k) {
      if (!core[static_cast<std::size_t>(k)]) continue;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          if (core[static_cast<std::size_t>(i)] && reach[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] &&
              reach[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)])
            reach[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = true;
    }
    std::vector<int> expected(static_cast<std::size_t>(n), kDbscanNoise);
    int next = 0;
    for (int i = 0; i < n; ++i) {
      if (!core[static_cast<std::size_t>(i)] || expected[static_cast<std::size_t>(i)] != kDbscanNoise) continue;
      const int cid = next++;
      expected[static_cast<std::size_t>(i)] = cid;
      for (int j = 0; j < n; ++j)
        if (core[static_cast<std::size_t>(j)] && reach[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)])
          expected[static_cast<std::size_t>(j)] = cid;
    }
    for (int i = 0; i < n; ++i) {
      if (core[static_cast<std::size_t>(i)]) continue;
      int best = kDbscanNoise;
      for (int j = 0; j < n; ++j)
        if (core[static_cast<std::size_t>(j)] && adj[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] &&
            (best == kDbscanNoise || expected[static_cast<std::size_t>(j)] < best))
          best = expected[static_cast<std::size_t>(j)];
      expected[static_cast<std::size_t>(i)] = best;
    }

    CHECK(dbscan(pts, eps, min_pts) == expected);
  }
}

TEST_CASE("unknown detector calibration finds the dense structure") {
  // Five tight clusters of "known" latents plus scattered far-out unknowns.
  Rng rng(606);
  const int per = 12, n_known = 5 * per, n_unknown = 8;
  Mat latents(n_known + n_unknown, 3);
  std::vector<int> is_unknown;
  for (int c = 0; c < 5; ++c)
    for (int i = 0; i < per; ++i) {
      const int r = c * per + i;
      latents.at(r, 0) = 6.0 * c + 0.2 * rng.normal();
      latents.at(r, 1) = 0.2 * rng.normal();
      latents.at(r, 2) = 0.2 * rng.normal();
      is_unknown.push_back(0);
    }
  for (int i = 0; i < n_unknown; ++i) {
    const int r = n_known + i;
    latents.at(r, 0) = 3.0 + 6.0 * i;
    latents.at(r, 1) = 40.0 + 5.0 * i;
    latents.at(r, 2) = -30.0;
    is_unknown.push_back(1);
  }

  DbscanUnknownConfig cfg;
  const auto det = calibrate_dbscan_unknown(latents, is_unknown, cfg);
  CHECK(det.val_clusters == 5);
  CHECK(det.val_f1 == doctest::Approx(1.0));

  const auto flags = dbscan_unknown_apply(det, latents);
  CHECK(flags == is_unknown);

  CHECK_THROWS_AS(calibrate_dbscan_unknown(latents, std::vector<int>(3, 0), cfg), ShapeError);
  CHECK_THROWS_AS(dbscan_unknown_apply(DbscanUnknownDetector{}, latents), InvalidParameterError);
}

TEST_CASE("localization labels live in one flat element space") {
  FrequencyGrid grid = build_grid(1550.0, 10.0, 16);
  LinkScenario scen;
  scen.n_channels = 3;
  Dataset ds;
  Spectrum rec;
  rec.grid = grid;
  rec.scenario = scen;
  rec.power_dbm.assign(16, -20.0);

  rec.label.cls = FailureClass::EdfaNfIncrease;
  rec.label.location = 2;
  ds.records.push_back(rec);
  rec.label.cls = FailureClass::LaserDrift;
  rec.label.location = 1;
  ds.records.push_back(rec);
  rec.label.cls = FailureClass::FilterShift;
  rec.label.location = 0;
  ds.records.push_back(rec);

  CHECK(localization_labels(ds) == std::vector<int>{2, 3 + 1, 3 + 0});

  rec.label.cls = FailureClass::None;
  ds.records.push_back(rec);
  CHECK_THROWS_AS(localization_labels(ds), InvalidInputError);
}

TEST_CASE("single-site localization yields the trivial constant model") {
  auto train = make_blobs(6, 2, 3, 0.4, 404);
  std::fill(train.y.begin(), train.y.end(), 5);
  const auto model = train_localizer(BaselineKind::Knn, train, Hyperparams{}, 1);
  CHECK(model.is_constant());
  const auto probe = make_blobs(4, 2, 3, 0.4, 405);
  for (int pred : model.predict_all(probe.x)) CHECK(pred == 5);
  CHECK(f1(std::vector<int>(probe.x.rows, 5), model.predict_all(probe.x), Averaging::Macro) ==
        doctest::Approx(1.0));

  const auto back = BaselineModel::from_json(model.to_json());
  CHECK(back.is_constant());
  CHECK(back.predict_all(probe.x) == model.predict_all(probe.x));

  // With two sites the localizer behaves like the ordinary classifier.
  auto two = make_blobs(6, 2, 3, 0.2, 406);
  for (std::size_t i = 0; i < two.y.size(); ++i) two.y[i] = two.y[i] == 0 ? 3 : 8;
  const auto knn = train_localizer(BaselineKind::Knn, two, Hyperparams{}, 1);
  CHECK(!knn.is_constant());
  CHECK(f1(two.y, knn.predict_all(two.x), Averaging::Macro) == doctest::Approx(1.0));
}
