#include "unln/linalg.hpp"

#include <cmath>
#include <cstdio>

#include "unln/error.hpp"

namespace unln {

bool Matrix::all_finite() const {
  for (double v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

double max_abs(const Matrix& m) {
  double r = 0.0;
  for (double v : m.data) r = std::max(r, std::fabs(v));
  return r;
}

namespace {

void require_finite(const Matrix& m, const char* op) {
  if (!m.all_finite())
    throw NumericalError(std::string(op) + ": non-finite entries in result");
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows)
    throw ShapeError("matmul: inner dimensions differ (" +
                     std::to_string(a.cols) + " vs " + std::to_string(b.rows) + ")");
  Matrix c(a.rows, b.cols);
#pragma omp parallel for schedule(static)
  for (long i = 0; i < static_cast<long>(a.rows); ++i) {
    double* ci = c.row(i);
    const double* ai = a.row(i);
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double aik = ai[k];
      const double* bk = b.row(k);
      for (std::size_t j = 0; j < b.cols; ++j) ci[j] += aik * bk[j];
    }
  }
  require_finite(c, "matmul");
  return c;
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols, a.rows);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < a.cols; ++j) t(j, i) = a(i, j);
  return t;
}

// Householder QR (Trefethen & Bau, Algorithm 10.1). Reflectors are
// accumulated explicitly into the thin Q afterwards. Chosen over
// Gram-Schmidt for orthogonality at large row counts (d ~ 3072).
QrThin qr_thin(const Matrix& w) {
  const std::size_t d = w.rows, k = w.cols;
  if (d < k)
    throw ShapeError("qr_thin: need rows >= cols, got " + std::to_string(d) +
                     " x " + std::to_string(k));

  Matrix a = w;
  // v[j] holds the j-th unit Householder vector (zero above row j).
  std::vector<std::vector<double>> v(k, std::vector<double>(d, 0.0));

  for (std::size_t j = 0; j < k; ++j) {
    double norm_x = 0.0;
    for (std::size_t i = j; i < d; ++i) norm_x += a(i, j) * a(i, j);
    norm_x = std::sqrt(norm_x);
    if (norm_x == 0.0) continue;  // zero column: no reflection, R(j,j) stays 0

    const double alpha = a(j, j) >= 0.0 ? -norm_x : norm_x;
    double norm_v = 0.0;
    for (std::size_t i = j; i < d; ++i) {
      double vi = a(i, j) - (i == j ? alpha : 0.0);
      v[j][i] = vi;
      norm_v += vi * vi;
    }
    norm_v = std::sqrt(norm_v);
    for (std::size_t i = j; i < d; ++i) v[j][i] /= norm_v;

    // A[j:d, j:k] -= 2 v (v^T A[j:d, j:k]); columns are independent.
#pragma omp parallel for schedule(static)
    for (long col = static_cast<long>(j); col < static_cast<long>(k); ++col) {
      double dot = 0.0;
      for (std::size_t i = j; i < d; ++i) dot += v[j][i] * a(i, col);
      dot *= 2.0;
      for (std::size_t i = j; i < d; ++i) a(i, col) -= dot * v[j][i];
    }
  }

  QrThin out;
  out.r = Matrix(k, k);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i; j < k; ++j) out.r(i, j) = a(i, j);

  // Q = (H_0 H_1 ... H_{k-1}) applied to the first k columns of I.
  out.q = Matrix(d, k);
  for (std::size_t j = 0; j < k; ++j) out.q(j, j) = 1.0;
  for (std::size_t step = k; step-- > 0;) {
#pragma omp parallel for schedule(static)
    for (long col = 0; col < static_cast<long>(k); ++col) {
      double dot = 0.0;
      for (std::size_t i = step; i < d; ++i) dot += v[step][i] * out.q(i, col);
      dot *= 2.0;
      for (std::size_t i = step; i < d; ++i) out.q(i, col) -= dot * v[step][i];
    }
  }

  // Fix signs so the diagonal of R is non-negative (matches the classical
  // Gram-Schmidt convention and makes the factorization unique).
  for (std::size_t i = 0; i < k; ++i) {
    if (out.r(i, i) < 0.0) {
      for (std::size_t j = i; j < k; ++j) out.r(i, j) = -out.r(i, j);
      for (std::size_t row = 0; row < d; ++row) out.q(row, i) = -out.q(row, i);
    }
  }

  const double threshold = 1e-12 * max_abs(w);
  for (std::size_t i = 0; i < k; ++i)
    if (std::fabs(out.r(i, i)) < threshold)
      out.deficient_columns.push_back(static_cast<int>(i));
  if (!out.deficient_columns.empty())
    std::fprintf(stderr,
                 "unln: warning: qr_thin: input is rank-deficient in %zu "
                 "column(s); columns retained\n",
                 out.deficient_columns.size());

  require_finite(out.q, "qr_thin");
  require_finite(out.r, "qr_thin");
  return out;
}

Matrix project_out(const Matrix& q, const Matrix& x) {
  const std::size_t d = x.cols, n = x.rows, k = q.cols;
  if (k == 0) return x;
  if (q.rows != d)
    throw ShapeError("project_out: q has " + std::to_string(q.rows) +
                     " rows, x has " + std::to_string(d) + " columns");

  const Matrix qt = transpose(q);  // k x d, rows contiguous
  Matrix xr = x;
#pragma omp parallel for schedule(static)
  for (long i = 0; i < static_cast<long>(n); ++i) {
    const double* xi = x.row(i);
    double* ri = xr.row(i);
    for (std::size_t t = 0; t < k; ++t) {
      const double* qrow = qt.row(t);
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) dot += xi[j] * qrow[j];
      for (std::size_t j = 0; j < d; ++j) ri[j] -= dot * qrow[j];
    }
  }
  require_finite(xr, "project_out");
  return xr;
}

namespace ref {

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows) throw ShapeError("ref::matmul: inner dimensions differ");
  Matrix c(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < b.cols; ++j) {
      double sum = 0.0;
      for (std::size_t k = 0; k < a.cols; ++k) sum += a(i, k) * b(k, j);
      c(i, j) = sum;
    }
  return c;
}

Matrix project_out(const Matrix& q, const Matrix& x) {
  if (q.cols == 0) return x;
  // Literal two-step form: x_r = x - (x q) q^T.
  Matrix coeff = ref::matmul(x, q);
  Matrix sub = ref::matmul(coeff, transpose(q));
  Matrix xr = x;
  for (std::size_t i = 0; i < xr.data.size(); ++i) xr.data[i] -= sub.data[i];
  return xr;
}

}  // namespace ref

}  // namespace unln
