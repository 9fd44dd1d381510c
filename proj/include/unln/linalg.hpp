#pragma once

#include <vector>

#include "unln/matrix.hpp"

namespace unln {

// Matrix product a*b. Throws ShapeError on inner dimension mismatch.
// Parallel over output rows; per-entry accumulation order is fixed, so the
// result is bitwise identical for any thread count.
Matrix matmul(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& a);

struct QrThin {
  Matrix q;  // d x k, orthonormal columns
  Matrix r;  // k x k, upper triangular, non-negative diagonal
  // Columns whose diagonal entry of R fell below 1e-12 * max|W|. They are
  // retained in Q (the projection then removes a smaller subspace); a warning
  // is printed when this list is non-empty.
  std::vector<int> deficient_columns;
};

// Thin QR by Householder reflections. Requires rows >= cols.
QrThin qr_thin(const Matrix& w);

// Removes the span of q's columns from each row of x:
//   x_r = x - (x q) q^T
// q must have orthonormal columns (d x k); x is n x d. k = 0 returns x.
Matrix project_out(const Matrix& q, const Matrix& x);

namespace ref {

// Serial reference kernels. These are the oracles for the parallel kernels
// above: plain loops, no OpenMP, kept deliberately naive.
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix project_out(const Matrix& q, const Matrix& x);

}  // namespace ref

}  // namespace unln
