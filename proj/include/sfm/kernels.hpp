#pragma once

#include <vector>

#include "sfm/common.hpp"
#include "sfm/parallel.hpp"

namespace sfm {

// Dense row-major matrix of doubles. Small sizes throughout (<= 501 wide),
// so no blocking; the kernels below parallelize over rows.
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, 0.0) {}

  double& at(int r, int c) { return a[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return a[static_cast<std::size_t>(r) * cols + c]; }
  double* row(int r) { return a.data() + static_cast<std::size_t>(r) * cols; }
  const double* row(int r) const { return a.data() + static_cast<std::size_t>(r) * cols; }
  std::size_t size() const { return a.size(); }

  void fill(double v) { a.assign(a.size(), v); }

  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
};

// C = A * B. Accumulation order over k is fixed per output element, so the
// result is identical for Serial and Parallel modes.
void matmul(const Mat& a, const Mat& b, Mat& c, ExecMode mode);
// C = A^T * B (A is k x m, B is k x n, C is m x n).
void matmul_at(const Mat& a, const Mat& b, Mat& c, ExecMode mode);
// C = A * B^T (A is m x k, B is n x k, C is m x n).
void matmul_bt(const Mat& a, const Mat& b, Mat& c, ExecMode mode);

inline void matmul(const Mat& a, const Mat& b, Mat& c) { matmul(a, b, c, exec_mode()); }
inline void matmul_at(const Mat& a, const Mat& b, Mat& c) { matmul_at(a, b, c, exec_mode()); }
inline void matmul_bt(const Mat& a, const Mat& b, Mat& c) { matmul_bt(a, b, c, exec_mode()); }

// y(r, :) += bias for every row r.
void add_row_bias(Mat& y, const std::vector<double>& bias);
// out[c] = sum over rows of m(:, c).
void col_sums(const Mat& m, std::vector<double>& out);

void relu_forward(const Mat& x, Mat& y);
// dx = dy where x > 0 else 0.
void relu_backward(const Mat& x, const Mat& dy, Mat& dx);

// Row-wise softmax with max subtraction.
void softmax_rows(const Mat& logits, Mat& probs);

// Squared Euclidean distances between each row of q and each row of x.
// d2 is q.rows x x.rows. Parallel over query rows.
void pairwise_sqdist(const Mat& q, const Mat& x, Mat& d2, ExecMode mode);
inline void pairwise_sqdist(const Mat& q, const Mat& x, Mat& d2) {
  pairwise_sqdist(q, x, d2, exec_mode());
}

}  // namespace sfm
