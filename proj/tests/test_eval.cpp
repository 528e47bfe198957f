#include "sfm/eval.hpp"

#include "doctest.h"

using namespace sfm;

TEST_CASE("binary f1 matches hand-tallied counts") {
  // 3 true positives, 1 false positive, 1 false negative.
  std::vector<int> truth = {1, 1, 1, 1, 0, 0};
  std::vector<int> preds = {1, 1, 1, 0, 1, 0};
  CHECK(f1(preds, truth, Averaging::Binary) == doctest::Approx(0.75).epsilon(1e-12));

  // Precision 3/5, recall 3/4.
  truth = {1, 0, 1, 1, 0, 1, 0};
  preds = {1, 1, 0, 1, 0, 1, 1};
  CHECK(f1(preds, truth, Averaging::Binary) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("binary f1 edge conventions") {
  CHECK(f1({1, 1, 0}, {1, 1, 0}, Averaging::Binary) == 1.0);
  CHECK(f1({0, 1}, {1, 0}, Averaging::Binary) == 0.0);
  // No positives anywhere: vacuously perfect.
  CHECK(f1({0, 0, 0}, {0, 0, 0}, Averaging::Binary) == 1.0);
  // Positives exist but none predicted (or vice versa): zero.
  CHECK(f1({0, 0}, {1, 0}, Averaging::Binary) == 0.0);
  CHECK(f1({1, 0}, {0, 0}, Averaging::Binary) == 0.0);
}

TEST_CASE("binary f1 rejects labels outside {0,1}") {
  CHECK_THROWS_AS(f1({0, 2}, {0, 1}, Averaging::Binary), InvalidInputError);
  CHECK_THROWS_AS(f1({0, 1}, {0, -1}, Averaging::Binary), InvalidInputError);
  CHECK_THROWS_AS(f1({0, 1, 0}, {0, 1}, Averaging::Binary), ShapeError);
}

TEST_CASE("macro f1 averages per-class scores over the label union") {
  // class 0: P=1, R=1/2 -> 2/3; class 1: P=1/2, R=1 -> 2/3; class 2: 1.
  std::vector<int> truth = {0, 0, 1, 2};
  std::vector<int> preds = {0, 1, 1, 2};
  CHECK(f1(preds, truth, Averaging::Macro) == doctest::Approx(7.0 / 9.0).epsilon(1e-12));

  // A label that only appears in predictions still enters the average.
  truth = {0, 0};
  preds = {0, 1};
  CHECK(f1(preds, truth, Averaging::Macro) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  CHECK(f1({3, 4, 5}, {3, 4, 5}, Averaging::Macro) == 1.0);
  CHECK(f1({1, 2, 0}, {0, 1, 2}, Averaging::Macro) == 0.0);
  CHECK(f1({}, {}, Averaging::Macro) == 1.0);
}

TEST_CASE("macro f1 is invariant under consistent relabeling") {
  const std::vector<int> truth = {0, 0, 1, 1, 2, 2, 2, 1};
  const std::vector<int> preds = {0, 1, 1, 1, 2, 0, 2, 2};
  const double base = f1(preds, truth, Averaging::Macro);

  auto remap = [](std::vector<int> v) {
    for (int& x : v) x = x == 0 ? 7 : (x == 1 ? 3 : 11);
    return v;
  };
  CHECK(f1(remap(preds), remap(truth), Averaging::Macro) == base);
}

TEST_CASE("confusion matrix tallies truth rows against prediction columns") {
  const std::vector<int> classes = {0, 1, 2};
  const std::vector<int> truth = {0, 1, 2, 0, 1};
  const std::vector<int> preds = {0, 2, 2, 0, 0};
  const ConfusionMatrix m = confusion(preds, truth, classes);

  REQUIRE(m.counts.size() == 3);
  CHECK(m.counts[0] == std::vector<long>{2, 0, 0});
  CHECK(m.counts[1] == std::vector<long>{1, 0, 1});
  CHECK(m.counts[2] == std::vector<long>{0, 0, 1});
  CHECK(m.total() == 5);
}

TEST_CASE("perfect predictions produce a diagonal confusion matrix") {
  const std::vector<int> classes = {4, 7, 9};
  const std::vector<int> y = {4, 7, 9, 9, 7, 4, 4};
  const ConfusionMatrix m = confusion(y, y, classes);
  for (std::size_t r = 0; r < m.counts.size(); ++r)
    for (std::size_t c = 0; c < m.counts.size(); ++c)
      if (r != c) CHECK(m.counts[r][c] == 0);
  CHECK(m.counts[0][0] == 3);
  CHECK(m.counts[1][1] == 2);
  CHECK(m.counts[2][2] == 2);
}

TEST_CASE("confusion matrix rejects malformed inputs") {
  CHECK_THROWS_AS(confusion({0, 3}, {0, 0}, {0, 1}), InvalidInputError);
  CHECK_THROWS_AS(confusion({0, 0}, {0, 3}, {0, 1}), InvalidInputError);
  CHECK_THROWS_AS(confusion({0}, {0}, {0, 1, 1}), InvalidInputError);
  CHECK_THROWS_AS(confusion({0, 1}, {0}, {0, 1}), ShapeError);
  CHECK(confusion({}, {}, {0, 1}).total() == 0);
}
