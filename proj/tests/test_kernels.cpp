#include <cmath>
#include <vector>

#include "doctest.h"
#include "sfm/kernels.hpp"
#include "sfm/rng.hpp"

using namespace sfm;

namespace {

Mat random_mat(int r, int c, std::uint64_t seed) {
  Mat m(r, c);
  Rng rng(seed);
  for (double& v : m.a) v = rng.normal();
  return m;
}

Mat transpose(const Mat& m) {
  Mat t(m.cols, m.rows);
  for (int r = 0; r < m.rows; ++r)
    for (int c = 0; c < m.cols; ++c) t.at(c, r) = m.at(r, c);
  return t;
}

}  // namespace

TEST_CASE("matmul 2x2 example") {
  Mat a(2, 2), b(2, 2), c(2, 2);
  a.a = {1, 2, 3, 4};
  b.a = {5, 6, 7, 8};
  matmul(a, b, c, ExecMode::Serial);
  CHECK(c.at(0, 0) == 19.0);
  CHECK(c.at(0, 1) == 22.0);
  CHECK(c.at(1, 0) == 43.0);
  CHECK(c.at(1, 1) == 50.0);
}

TEST_CASE("matmul rejects mismatched shapes") {
  Mat a(2, 3), b(2, 3), c;
  CHECK_THROWS_AS(matmul(a, b, c, ExecMode::Serial), ShapeError);
}

TEST_CASE("transposed products agree with explicit transpose") {
  const Mat a = random_mat(17, 9, 1);
  const Mat b = random_mat(17, 13, 2);
  Mat c1, c2;
  matmul_at(a, b, c1, ExecMode::Serial);
  matmul(transpose(a), b, c2, ExecMode::Serial);
  REQUIRE(c1.same_shape(c2));
  for (std::size_t i = 0; i < c1.size(); ++i)
    CHECK(c1.a[i] == doctest::Approx(c2.a[i]).epsilon(1e-12));

  const Mat d = random_mat(9, 17, 3);
  const Mat e = random_mat(13, 17, 4);
  Mat c3, c4;
  matmul_bt(d, e, c3, ExecMode::Serial);
  matmul(d, transpose(e), c4, ExecMode::Serial);
  REQUIRE(c3.same_shape(c4));
  for (std::size_t i = 0; i < c3.size(); ++i)
    CHECK(c3.a[i] == doctest::Approx(c4.a[i]).epsilon(1e-12));
}

TEST_CASE("parallel kernels match serial bit for bit") {
  const Mat a = random_mat(33, 29, 10);
  const Mat b = random_mat(29, 37, 11);
  Mat cs, cp;
  matmul(a, b, cs, ExecMode::Serial);
  matmul(a, b, cp, ExecMode::Parallel);
  CHECK(cs.a == cp.a);

  const Mat q = random_mat(21, 12, 12);
  const Mat x = random_mat(45, 12, 13);
  Mat ds, dp;
  pairwise_sqdist(q, x, ds, ExecMode::Serial);
  pairwise_sqdist(q, x, dp, ExecMode::Parallel);
  CHECK(ds.a == dp.a);
}

TEST_CASE("relu forward and backward") {
  Mat x(1, 4);
  x.a = {-1.0, 0.0, 2.0, -0.5};
  Mat y;
  relu_forward(x, y);
  CHECK(y.a == std::vector<double>{0.0, 0.0, 2.0, 0.0});

  Mat dy(1, 4);
  dy.a = {1.0, 2.0, 3.0, 4.0};
  Mat dx;
  relu_backward(x, dy, dx);
  CHECK(dx.a == std::vector<double>{0.0, 0.0, 3.0, 0.0});
}

TEST_CASE("softmax of (ln 2, 0) is (2/3, 1/3)") {
  Mat logits(1, 2), probs;
  logits.a = {std::log(2.0), 0.0};
  softmax_rows(logits, probs);
  CHECK(probs.at(0, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(probs.at(0, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(probs.at(0, 0) + probs.at(0, 1) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("softmax rejects non-finite input") {
  Mat logits(1, 2), probs;
  logits.a = {std::numeric_limits<double>::infinity(), 0.0};
  CHECK_THROWS_AS(softmax_rows(logits, probs), NumericError);
}

TEST_CASE("pairwise squared distance example") {
  Mat q(1, 2), x(2, 2), d2;
  q.a = {0.0, 0.0};
  x.a = {3.0, 4.0, 1.0, 1.0};
  pairwise_sqdist(q, x, d2, ExecMode::Serial);
  CHECK(d2.at(0, 0) == doctest::Approx(25.0).epsilon(1e-12));
  CHECK(d2.at(0, 1) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("bias and column sums") {
  Mat y(2, 3);
  y.a = {1, 2, 3, 4, 5, 6};
  add_row_bias(y, {10, 20, 30});
  CHECK(y.a == std::vector<double>{11, 22, 33, 14, 25, 36});

  std::vector<double> s;
  col_sums(y, s);
  CHECK(s == std::vector<double>{25, 47, 69});
}
