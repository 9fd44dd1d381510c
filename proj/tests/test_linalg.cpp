#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "unln/error.hpp"
#include "unln/linalg.hpp"
#include "unln/rng.hpp"

using namespace unln;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  Matrix m(r, c);
  Rng rng(seed);
  for (double& v : m.data) v = rng.uniform(-1.0, 1.0);
  return m;
}

double max_diff(const Matrix& a, const Matrix& b) {
  REQUIRE(a.rows == b.rows);
  REQUIRE(a.cols == b.cols);
  double d = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i)
    d = std::max(d, std::fabs(a.data[i] - b.data[i]));
  return d;
}

// |Q^T Q - I|_inf
double orthonormality_residual(const Matrix& q) {
  const Matrix qtq = matmul(transpose(q), q);
  double r = 0.0;
  for (std::size_t i = 0; i < qtq.rows; ++i)
    for (std::size_t j = 0; j < qtq.cols; ++j)
      r = std::max(r, std::fabs(qtq(i, j) - (i == j ? 1.0 : 0.0)));
  return r;
}

}  // namespace

TEST_CASE("matmul: identity") {
  const Matrix a = random_matrix(3, 4, 42);
  const Matrix prod = matmul(Matrix::identity(3), a);
  CHECK(max_diff(prod, a) == 0.0);
}

TEST_CASE("matmul: hand arithmetic") {
  Matrix a(2, 2);
  a(0, 0) = 1;
  a(0, 1) = 2;
  a(1, 0) = 3;
  a(1, 1) = 4;
  Matrix b(2, 1);
  b(0, 0) = 0;
  b(1, 0) = 1;
  const Matrix c = matmul(a, b);
  CHECK(c(0, 0) == doctest::Approx(2.0));
  CHECK(c(1, 0) == doctest::Approx(4.0));
}

TEST_CASE("matmul: matches the triple-loop oracle") {
  const Matrix a = random_matrix(7, 5, 1);
  const Matrix b = random_matrix(5, 3, 2);
  CHECK(max_diff(matmul(a, b), ref::matmul(a, b)) <= 1e-12);
}

TEST_CASE("matmul: shape error") {
  CHECK_THROWS_AS(matmul(random_matrix(2, 3, 1), random_matrix(2, 3, 2)), ShapeError);
}

TEST_CASE("qr_thin: already-orthonormal columns") {
  Matrix w(4, 2);
  w(0, 0) = 1.0;
  w(1, 1) = 1.0;
  const QrThin qr = qr_thin(w);
  CHECK(max_diff(qr.q, w) <= 1e-14);
  CHECK(max_diff(qr.r, Matrix::identity(2)) <= 1e-14);
  CHECK(qr.deficient_columns.empty());
}

TEST_CASE("qr_thin: 2x1 Gram-Schmidt by hand") {
  Matrix w(2, 1);
  w(0, 0) = 3.0;
  w(1, 0) = 4.0;
  const QrThin qr = qr_thin(w);
  CHECK(qr.q(0, 0) == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(qr.q(1, 0) == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(qr.r(0, 0) == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("qr_thin: shape error when d < K") {
  CHECK_THROWS_AS(qr_thin(random_matrix(3, 5, 1)), ShapeError);
}

TEST_CASE("qr_thin: rank-deficient input warns and retains the column") {
  Matrix w(8, 3);
  Rng rng(5);
  for (std::size_t i = 0; i < 8; ++i) {
    w(i, 0) = rng.uniform(-1, 1);
    w(i, 1) = w(i, 0);  // duplicate column
    w(i, 2) = rng.uniform(-1, 1);
  }
  const QrThin qr = qr_thin(w);
  REQUIRE(qr.deficient_columns.size() == 1);
  CHECK(qr.deficient_columns[0] == 1);
  CHECK(qr.q.cols == 3);  // retained
  CHECK(orthonormality_residual(qr.q) <= 1e-10);
}

TEST_CASE("qr_thin: factorization tolerances on 100 seeded matrices") {
  const std::size_t dims[] = {50, 200, 768};
  const std::size_t ks[] = {2, 10};
  int count = 0;
  for (std::uint64_t round = 0; count < 100; ++round) {
    for (std::size_t d : dims) {
      for (std::size_t k : ks) {
        if (count >= 100) break;
        const Matrix w = random_matrix(d, k, 1000 + 17 * round + d + k);
        const QrThin qr = qr_thin(w);
        CHECK(orthonormality_residual(qr.q) <= 1e-10);
        CHECK(max_diff(matmul(qr.q, qr.r), w) <= 1e-8 * max_abs(w));
        // R upper-triangular with non-negative diagonal
        for (std::size_t i = 0; i < k; ++i) {
          CHECK(qr.r(i, i) >= 0.0);
          for (std::size_t j = 0; j < i; ++j) CHECK(qr.r(i, j) == 0.0);
        }
        ++count;
      }
    }
  }
  CHECK(count == 100);
}

TEST_CASE("project_out: zero columns leaves x unchanged") {
  const Matrix x = random_matrix(5, 7, 3);
  const Matrix q(7, 0);
  CHECK(max_diff(project_out(q, x), x) == 0.0);
}

TEST_CASE("project_out: a row inside span(q) projects to zero") {
  const Matrix w = random_matrix(12, 3, 4);
  const QrThin qr = qr_thin(w);
  Matrix x(2, 12);
  for (std::size_t j = 0; j < 12; ++j) {
    x(0, j) = qr.q(j, 1);               // equals a column of q
    x(1, j) = 0.25 * qr.q(j, 0) - 2.0 * qr.q(j, 2);
  }
  const Matrix xr = project_out(qr.q, x);
  CHECK(max_abs(xr) <= 1e-12);
}

TEST_CASE("project_out: idempotent, orthogonal residual, row norms shrink") {
  const Matrix x = random_matrix(40, 64, 6);
  const Matrix w = random_matrix(64, 5, 7);
  const QrThin qr = qr_thin(w);
  const Matrix once = project_out(qr.q, x);
  const Matrix twice = project_out(qr.q, once);
  CHECK(max_diff(once, twice) <= 1e-8);
  CHECK(max_abs(matmul(once, qr.q)) <= 1e-8);
  for (std::size_t i = 0; i < x.rows; ++i) {
    double before = 0.0, after = 0.0;
    for (std::size_t j = 0; j < x.cols; ++j) {
      before += x(i, j) * x(i, j);
      after += once(i, j) * once(i, j);
    }
    CHECK(std::sqrt(after) <= std::sqrt(before) + 1e-12);
  }
}

TEST_CASE("project_out: self-adjoint") {
  // (X P) Y^T == X (Y P)^T for the projector P = I - qq^T.
  const Matrix x = random_matrix(6, 20, 8);
  const Matrix y = random_matrix(9, 20, 9);
  const QrThin qr = qr_thin(random_matrix(20, 4, 10));
  const Matrix lhs = matmul(project_out(qr.q, x), transpose(y));
  const Matrix rhs = matmul(x, transpose(project_out(qr.q, y)));
  CHECK(max_diff(lhs, rhs) <= 1e-8);
}

TEST_CASE("project_out: agrees with the serial reference") {
  const Matrix x = random_matrix(33, 48, 11);
  const QrThin qr = qr_thin(random_matrix(48, 6, 12));
  CHECK(max_diff(project_out(qr.q, x), ref::project_out(qr.q, x)) <= 1e-12);
}

TEST_CASE("project_out: shape error") {
  CHECK_THROWS_AS(project_out(random_matrix(5, 2, 1), random_matrix(3, 4, 2)), ShapeError);
}
