#include <gtest/gtest.h>

#include <random>

#include "lsi/coeff.hpp"
#include "lsi/localsolve.hpp"
#include "lsi/specdiag.hpp"

using namespace lsi;

namespace {

SparseOperator sparse(const Matrix& d) {
  SparseOperator op;
  op.matrix = d.sparseView();
  return op;
}

Matrix random_spd(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Matrix r(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) r(i, j) = g(rng);
  return r * r.transpose() + n * Matrix::Identity(n, n);
}

Matrix random_matrix(int rows, int cols, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Matrix r(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) r(i, j) = g(rng);
  return r;
}

// Full KKT system [[A, B], [B^T, 0]] [phi; mu] = [0; e_k].
Vector dense_kkt(const Matrix& a, const Matrix& b, int k) {
  const int n = static_cast<int>(a.rows()), l = static_cast<int>(b.cols());
  Matrix kkt = Matrix::Zero(n + l, n + l);
  kkt.topLeftCorner(n, n) = a;
  kkt.topRightCorner(n, l) = b;
  kkt.bottomLeftCorner(l, n) = b.transpose();
  Vector rhs = Vector::Zero(n + l);
  rhs(n + k) = 1.0;
  return kkt.fullPivLu().solve(rhs);
}

PatchSystem field_patch(int nc, int nf, int element, int m, double contrast, std::uint64_t seed) {
  const auto pair = build_nested(nc, nf);
  const auto field = gen_inclusions(pair, 0.2, contrast, seed);
  return PatchSystem(pair, field, OperatorKind::diffusion, build_patch(pair, element, m));
}

}  // namespace

TEST(Saddle, IdentitySingleConstraint) {
  const int n = 7;
  PatchSystem sys(sparse(Matrix::Identity(n, n)), sparse(Matrix::Identity(n, n)));
  const Vector b = Vector::LinSpaced(n, 1.0, 3.0);
  const auto s = solve_saddle(sys, ConstraintSet{b}, 0);
  EXPECT_LE((s.phi - b / b.squaredNorm()).norm(), 1e-15);
}

TEST(Saddle, SingleConstraintClosedForm) {
  std::mt19937_64 rng(2);
  const Matrix a = random_spd(30, rng);
  PatchSystem sys(sparse(a), sparse(Matrix::Identity(30, 30)));
  const Vector b = random_matrix(30, 1, rng);
  const Vector ainvb = a.llt().solve(b);
  const Vector expected = ainvb / b.dot(ainvb);
  const auto s = solve_saddle(sys, ConstraintSet{b}, 0);
  EXPECT_LE((s.phi - expected).norm(), 1e-12 * expected.norm());
  const Vector kkt = dense_kkt(a, b, 0);
  EXPECT_LE((s.phi - kkt.head(30)).norm(), 1e-12 * expected.norm());
  EXPECT_NEAR(s.multipliers(0), kkt(30), 1e-10 * std::abs(kkt(30)));
}

TEST(Saddle, KroneckerBiorthogonality) {
  std::mt19937_64 rng(3);
  const Matrix a = random_spd(60, rng);
  PatchSystem sys(sparse(a), sparse(Matrix::Identity(60, 60)));
  const Matrix b = random_matrix(60, 4, rng);
  const auto batch = solve_saddle(sys, ConstraintSet{b}, std::vector<int>{0, 1, 2, 3});
  EXPECT_LE((b.transpose() * batch.phi - Matrix::Identity(4, 4)).cwiseAbs().maxCoeff(), 1e-10);
  for (int k = 0; k < 4; ++k) {
    const Vector residual = a * batch.phi.col(k) + b * batch.multipliers.col(k);
    EXPECT_LE(residual.norm(), 1e-10 * (a * batch.phi.col(k)).norm());
  }
}

TEST(Saddle, AgreesWithDenseKkt) {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> dim(10, 200), cons(1, 6);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = dim(rng);
    const int l = std::min(cons(rng), n - 1);
    const Matrix a = random_spd(n, rng);
    const Matrix b = random_matrix(n, l, rng);
    PatchSystem sys(sparse(a), sparse(Matrix::Identity(n, n)));
    for (int k = 0; k < l; ++k) {
      const auto s = solve_saddle(sys, ConstraintSet{b}, k);
      const Vector oracle = dense_kkt(a, b, k).head(n);
      EXPECT_LE((s.phi - oracle).norm(), 1e-10 * oracle.norm());
    }
  }
}

TEST(Saddle, DependentConstraints) {
  std::mt19937_64 rng(5);
  const Matrix a = random_spd(20, rng);
  PatchSystem sys(sparse(a), sparse(Matrix::Identity(20, 20)));
  Matrix b = random_matrix(20, 3, rng);
  b.col(2) = 2.0 * b.col(0) - b.col(1);
  try {
    (void)solve_saddle(sys, ConstraintSet{b}, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::dependent_constraints);
  }
}

TEST(Saddle, RejectsBadTarget) {
  PatchSystem sys(sparse(Matrix::Identity(4, 4)), sparse(Matrix::Identity(4, 4)));
  EXPECT_THROW((void)solve_saddle(sys, ConstraintSet{Matrix::Identity(4, 2)}, 2), Error);
}

TEST(Saddle, RepeatedSolvesBitwiseIdentical) {
  const auto sys = field_patch(5, 25, 12, 1, 1e4, 7);
  const int n = sys.dimension();
  Matrix g(n, 3);
  g.col(0) = Vector::LinSpaced(n, 0, 1);
  g.col(1) = Vector::LinSpaced(n, 0, 1).array().square().matrix();
  g.col(2) = Vector::Ones(n);
  const Matrix b = sys.mass().matrix * g;
  const auto first = solve_saddle(sys, ConstraintSet{b}, std::vector<int>{0, 1, 2});
  const auto second = solve_saddle(sys, ConstraintSet{b}, std::vector<int>{0, 1, 2});
  EXPECT_TRUE(first.phi == second.phi);
  EXPECT_TRUE(first.multipliers == second.multipliers);
}

TEST(Saddle, PatchSystemNotSpd) {
  Matrix d = Matrix::Identity(3, 3);
  d(1, 1) = -1.0;
  try {
    PatchSystem sys(sparse(d), sparse(Matrix::Identity(3, 3)));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::not_spd);
  }
}

TEST(LocalInverse, ZeroMapsToZero) {
  const auto sys = field_patch(4, 16, 5, 1, 1e2, 1);
  EXPECT_EQ(apply_local_inverse(sys, Vector(Vector::Zero(sys.dimension()))).norm(), 0.0);
}

TEST(LocalInverse, EigenvectorScaledByEigenvalue) {
  const auto sys = field_patch(4, 16, 5, 1, 1e3, 2);
  const auto eig = local_eig(sys, 5);
  for (int j = 0; j < 5; ++j) {
    const Vector v = eig.vectors.col(j);
    const Vector bv = apply_local_inverse(sys, v);
    EXPECT_LE((bv - eig.values(j) * v).norm(), 1e-9 * eig.values(j) * v.norm());
  }
}

TEST(LocalInverse, SaddleSpanMatchesInverseSpan) {
  const auto sys = field_patch(5, 25, 12, 1, 1e4, 9);
  std::mt19937_64 rng(10);
  const Matrix prev = random_matrix(sys.dimension(), 4, rng);
  const auto batch = solve_saddle(sys, ConstraintSet::from_functions(sys, prev), std::vector<int>{0, 1, 2, 3});
  const Matrix image = apply_local_inverse(sys, prev);
  EXPECT_LT(principal_angles(batch.phi, image, &sys.mass().matrix).max(), 1e-8);
}
