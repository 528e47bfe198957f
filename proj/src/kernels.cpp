#include "sfm/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace sfm {

namespace {

void check(bool ok, const char* what) {
  if (!ok) throw ShapeError(std::string("kernel shape mismatch: ") + what);
}

}  // namespace

void matmul(const Mat& a, const Mat& b, Mat& c, ExecMode mode) {
  check(a.cols == b.rows, "matmul inner");
  c = Mat(a.rows, b.cols);
  const int n = b.cols;
  const int kk = a.cols;
  parallel_for(
      a.rows,
      [&](std::int64_t i) {
        double* crow = c.row(static_cast<int>(i));
        const double* arow = a.row(static_cast<int>(i));
        for (int k = 0; k < kk; ++k) {
          const double aik = arow[k];
          const double* brow = b.row(k);
          for (int j = 0; j < n; ++j) crow[j] += aik * brow[j];
        }
      },
      mode);
}

void matmul_at(const Mat& a, const Mat& b, Mat& c, ExecMode mode) {
  check(a.rows == b.rows, "matmul_at inner");
  c = Mat(a.cols, b.cols);
  const int n = b.cols;
  const int kk = a.rows;
  parallel_for(
      c.rows,
      [&](std::int64_t i) {
        double* crow = c.row(static_cast<int>(i));
        for (int k = 0; k < kk; ++k) {
          const double aki = a.at(k, static_cast<int>(i));
          const double* brow = b.row(k);
          for (int j = 0; j < n; ++j) crow[j] += aki * brow[j];
        }
      },
      mode);
}

void matmul_bt(const Mat& a, const Mat& b, Mat& c, ExecMode mode) {
  check(a.cols == b.cols, "matmul_bt inner");
  c = Mat(a.rows, b.rows);
  const int kk = a.cols;
  parallel_for(
      a.rows,
      [&](std::int64_t i) {
        double* crow = c.row(static_cast<int>(i));
        const double* arow = a.row(static_cast<int>(i));
        for (int j = 0; j < b.rows; ++j) {
          const double* brow = b.row(j);
          double acc = 0.0;
          for (int k = 0; k < kk; ++k) acc += arow[k] * brow[k];
          crow[j] = acc;
        }
      },
      mode);
}

void add_row_bias(Mat& y, const std::vector<double>& bias) {
  check(static_cast<int>(bias.size()) == y.cols, "bias length");
  for (int r = 0; r < y.rows; ++r) {
    double* row = y.row(r);
    for (int c = 0; c < y.cols; ++c) row[c] += bias[c];
  }
}

void col_sums(const Mat& m, std::vector<double>& out) {
  out.assign(m.cols, 0.0);
  for (int r = 0; r < m.rows; ++r) {
    const double* row = m.row(r);
    for (int c = 0; c < m.cols; ++c) out[c] += row[c];
  }
}

void relu_forward(const Mat& x, Mat& y) {
  y = Mat(x.rows, x.cols);
  for (std::size_t i = 0; i < x.size(); ++i) y.a[i] = x.a[i] > 0.0 ? x.a[i] : 0.0;
}

void relu_backward(const Mat& x, const Mat& dy, Mat& dx) {
  check(x.same_shape(dy), "relu_backward");
  dx = Mat(x.rows, x.cols);
  for (std::size_t i = 0; i < x.size(); ++i) dx.a[i] = x.a[i] > 0.0 ? dy.a[i] : 0.0;
}

void softmax_rows(const Mat& logits, Mat& probs) {
  probs = Mat(logits.rows, logits.cols);
  for (int r = 0; r < logits.rows; ++r) {
    const double* in = logits.row(r);
    double* out = probs.row(r);
    double mx = in[0];
    for (int c = 1; c < logits.cols; ++c) mx = std::max(mx, in[c]);
    if (!std::isfinite(mx)) throw NumericError("softmax: non-finite logit");
    double sum = 0.0;
    for (int c = 0; c < logits.cols; ++c) {
      out[c] = std::exp(in[c] - mx);
      sum += out[c];
    }
    for (int c = 0; c < logits.cols; ++c) out[c] /= sum;
  }
}

void pairwise_sqdist(const Mat& q, const Mat& x, Mat& d2, ExecMode mode) {
  check(q.cols == x.cols, "pairwise_sqdist dims");
  d2 = Mat(q.rows, x.rows);
  const int d = q.cols;
  parallel_for(
      q.rows,
      [&](std::int64_t i) {
        const double* qi = q.row(static_cast<int>(i));
        double* drow = d2.row(static_cast<int>(i));
        for (int j = 0; j < x.rows; ++j) {
          const double* xj = x.row(j);
          double acc = 0.0;
          for (int k = 0; k < d; ++k) {
            const double diff = qi[k] - xj[k];
            acc += diff * diff;
          }
          drow[j] = acc;
        }
      },
      mode);
}

}  // namespace sfm
