#pragma once

// Minimal dense row-major matrix type plus the three multiply kernels the
// networks need (forward, weight gradient, input gradient). Shapes here are
// tiny (a few hundred at most), so the kernels favour fixed summation order
// over cache blocking: results are bit-reproducible run to run.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace ffae {

using Vec = std::vector<double>;

struct Mat {
  std::size_t rows = 0, cols = 0;
  std::vector<double> a;

  Mat() = default;
  Mat(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), a(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return a[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return a[r * cols + c]; }
  double* row(std::size_t r) { return a.data() + r * cols; }
  const double* row(std::size_t r) const { return a.data() + r * cols; }

  void zero() { std::fill(a.begin(), a.end(), 0.0); }
  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
};

// Dot product with four independent partial sums. The fixed reassociation
// lets the compiler vectorize the loop without -ffast-math while keeping the
// result deterministic.
inline double dot(const double* x, const double* y, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += x[i] * y[i];
    s1 += x[i + 1] * y[i + 1];
    s2 += x[i + 2] * y[i + 2];
    s3 += x[i + 3] * y[i + 3];
  }
  double s = (s0 + s1) + (s2 + s3);
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

// C = A * B^T.  A: [m x k], B: [n x k], C: [m x n].
inline void matmul_nt(const Mat& A, const Mat& B, Mat& C) {
  if (A.cols != B.cols || C.rows != A.rows || C.cols != B.rows)
    throw std::invalid_argument("matmul_nt: shape mismatch");
  for (std::size_t i = 0; i < A.rows; ++i) {
    const double* ai = A.row(i);
    double* ci = C.row(i);
    for (std::size_t j = 0; j < B.rows; ++j) ci[j] = dot(ai, B.row(j), A.cols);
  }
}

// C += scale * A^T * B.  A: [k x m], B: [k x n], C: [m x n].
inline void matmul_tn_acc(const Mat& A, const Mat& B, double scale, Mat& C) {
  if (A.rows != B.rows || C.rows != A.cols || C.cols != B.cols)
    throw std::invalid_argument("matmul_tn_acc: shape mismatch");
  for (std::size_t r = 0; r < A.rows; ++r) {
    const double* ar = A.row(r);
    const double* br = B.row(r);
    for (std::size_t i = 0; i < A.cols; ++i) {
      const double s = scale * ar[i];
      double* ci = C.row(i);
      for (std::size_t j = 0; j < B.cols; ++j) ci[j] += s * br[j];
    }
  }
}

// C = A * B.  A: [m x k], B: [k x n], C: [m x n].
inline void matmul_nn(const Mat& A, const Mat& B, Mat& C) {
  if (A.cols != B.rows || C.rows != A.rows || C.cols != B.cols)
    throw std::invalid_argument("matmul_nn: shape mismatch");
  C.zero();
  for (std::size_t i = 0; i < A.rows; ++i) {
    const double* ai = A.row(i);
    double* ci = C.row(i);
    for (std::size_t l = 0; l < A.cols; ++l) {
      const double s = ai[l];
      const double* bl = B.row(l);
      for (std::size_t j = 0; j < B.cols; ++j) ci[j] += s * bl[j];
    }
  }
}

inline double l2_norm(const double* x, std::size_t n) {
  double s = dot(x, x, n);
  return s > 0.0 ? std::sqrt(s) : 0.0;
}

}  // namespace ffae
