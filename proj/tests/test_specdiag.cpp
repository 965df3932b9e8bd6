#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "lsi/coeff.hpp"
#include "lsi/specdiag.hpp"

using namespace lsi;

namespace {

Matrix random_matrix(int rows, int cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Matrix r(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) r(i, j) = g(rng);
  return r;
}

}  // namespace

TEST(LocalEig, LaplaceTopEigenvalue) {
  const auto pair = build_nested(1, 40);
  const auto sys = assemble(pair, CoefficientField::constant(40, 1.0), OperatorKind::diffusion);
  const auto eig = local_eig(sys.stiffness.matrix, sys.mass.matrix, 3);
  const double exact = 1.0 / (2.0 * std::numbers::pi * std::numbers::pi);
  EXPECT_NEAR(eig.values(0), exact, 2.0 * exact / (40.0 * 40.0));
  EXPECT_GT(eig.values(0), eig.values(1));
  EXPECT_GE(eig.values(1), eig.values(2));
  const Matrix vav = eig.vectors.transpose() * sys.stiffness.matrix * eig.vectors;
  EXPECT_LE((vav - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LE(eig.max_residual(sys.stiffness.matrix, sys.mass.matrix), 1e-8);
}

TEST(LocalEig, CapExceededAndLanczos) {
  const auto pair = build_nested(2, 24);
  const auto field = gen_inclusions(pair, 0.2, 1e3, 4);
  PatchSystem sys(pair, field, OperatorKind::diffusion, build_patch(pair, 0, 2));
  try {
    (void)local_eig(sys, 3, EigOptions{100, false, 0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::cap_exceeded);
  }
  const auto dense = local_eig(sys, 3);
  const auto lanczos = local_eig(sys, 3, EigOptions{100, true, 120});
  for (int j = 0; j < 3; ++j) EXPECT_NEAR(lanczos.values(j), dense.values(j), 1e-10 * dense.values(0));
  EXPECT_LE(lanczos.max_residual(sys.stiffness().matrix, sys.mass().matrix), 1e-8);
}

TEST(LocalEig, ChannelPatchHasGap) {
  const auto pair = build_nested(5, 50);
  ChannelSpec spec;
  spec.length = 5;
  spec.count = 3;
  const auto field = gen_channels(pair, spec);
  PatchSystem sys(pair, field, OperatorKind::diffusion, build_patch(pair, 12, 2));
  const auto eig = local_eig(sys, 5);
  EXPECT_GT(eig.values(0) / eig.values(4), 2.0);
}

TEST(SubspaceIteration, EigenvectorsInvariant) {
  const auto pair = build_nested(3, 12);
  PatchSystem sys(pair, gen_inclusions(pair, 0.2, 1e2, 1), OperatorKind::diffusion, build_patch(pair, 4, 1));
  const auto eig = local_eig(sys, 3);
  const Matrix x = subspace_iterate(local_inverse_op(sys), eig.vectors, 5);
  EXPECT_LT(principal_angles(x, eig.vectors).max(), 1e-10);
}

TEST(SubspaceIteration, MatchesRepeatedInverse) {
  const auto pair = build_nested(3, 12);
  PatchSystem sys(pair, gen_inclusions(pair, 0.2, 1e2, 1), OperatorKind::diffusion, build_patch(pair, 4, 1));
  const Matrix x0 = random_matrix(sys.dimension(), 3, 2);
  Matrix y = x0;
  for (int k = 0; k < 4; ++k) y = apply_local_inverse(sys, y);
  EXPECT_LT(principal_angles(subspace_iterate(local_inverse_op(sys), x0, 4), y).max(), 1e-10);
}

TEST(SubspaceIteration, RateFollowsGap) {
  const int n = 60;
  Vector d(n);
  for (int i = 0; i < n; ++i) d(i) = std::pow(0.8, i);
  const LinearOp op = [&](const Matrix& x) { return Matrix(d.asDiagonal() * x); };
  const Matrix x0 = random_matrix(n, 2, 3);
  const Matrix exact = Matrix::Identity(n, 2);
  std::vector<double> ks, angles;
  for (int k = 4; k <= 20; k += 2) {
    ks.push_back(k);
    angles.push_back(std::tan(principal_angles(subspace_iterate(op, x0, k), exact).max()));
  }
  const double rate = *loglinear_rate(ks, angles);
  EXPECT_NEAR(rate, 0.8, 0.2 * 0.8);
}

TEST(SubspaceIteration, PowerIterationRayleigh) {
  const auto pair = build_nested(3, 12);
  PatchSystem sys(pair, gen_inclusions(pair, 0.2, 1e2, 9), OperatorKind::diffusion, build_patch(pair, 4, 1));
  const auto eig = local_eig(sys, 1);
  const auto& a = sys.stiffness().matrix;
  const auto& m = sys.mass().matrix;
  Matrix x = Matrix::Ones(sys.dimension(), 1);
  double prev = 0.0;
  for (int k = 0; k < 15; ++k) {
    x = subspace_iterate(local_inverse_op(sys), x, 1);
    const Vector v = x.col(0);
    const double rq = v.dot(m * v) / v.dot(a * v);
    EXPECT_GE(rq, prev * (1.0 - 1e-14));
    EXPECT_LE(rq, eig.values(0) * (1.0 + 1e-12));
    prev = rq;
  }
  EXPECT_NEAR(prev, eig.values(0), 1e-3 * eig.values(0));
}

TEST(Arnoldi, EigenvectorBreaksDownAtOne) {
  const auto pair = build_nested(3, 12);
  PatchSystem sys(pair, gen_inclusions(pair, 0.2, 1e2, 2), OperatorKind::diffusion, build_patch(pair, 4, 1));
  const auto eig = local_eig(sys, 1);
  const auto ar = arnoldi(local_inverse_op(sys), eig.vectors.col(0), 5, &sys.mass().matrix);
  EXPECT_TRUE(ar.breakdown);
  EXPECT_EQ(ar.breakdown_step, 1);
  EXPECT_EQ(ar.basis.cols(), 1);
  EXPECT_THROW(ar.throw_on_breakdown(), Error);
}

TEST(Arnoldi, OrthonormalTridiagonalRitzContained) {
  const auto pair = build_nested(3, 12);
  PatchSystem sys(pair, gen_inclusions(pair, 0.2, 1e3, 3), OperatorKind::diffusion, build_patch(pair, 4, 1));
  const auto& m = sys.mass().matrix;
  const auto ar = arnoldi(local_inverse_op(sys), Vector::Ones(sys.dimension()), 12, &m);
  ASSERT_FALSE(ar.breakdown);
  const Matrix g = ar.basis.transpose() * m * ar.basis;
  EXPECT_LE((g - Matrix::Identity(g.rows(), g.cols())).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LE(ar.tridiagonal_defect(), 1e-10);
  const auto all = local_eig(sys, sys.dimension());
  const auto rp = ritz(ar);
  for (int j = 0; j < rp.values.size(); ++j) {
    EXPECT_LE(rp.values(j), all.values(0) * (1 + 1e-12));
    EXPECT_GE(rp.values(j), all.values(all.count() - 1) * (1 - 1e-12));
  }
}

TEST(Arnoldi, FullDimensionRecoversSpectrum) {
  const auto pair = build_nested(2, 8);
  PatchSystem sys(pair, gen_inclusions(pair, 0.2, 10.0, 5), OperatorKind::diffusion, build_patch(pair, 0, 0));
  const int n = sys.dimension();
  const auto& m = sys.mass().matrix;
  const auto ar = arnoldi(local_inverse_op(sys), Vector::LinSpaced(n, 1.0, 2.0), n, &m);
  const auto rp = ritz(ar);
  const auto all = local_eig(sys, n);
  ASSERT_EQ(rp.values.size(), n);
  for (int j = 0; j < n; ++j) EXPECT_NEAR(rp.values(j), all.values(j), 1e-8 * all.values(0));
}

TEST(Angles, IdenticalAndOrthogonal) {
  const Matrix u = random_matrix(20, 3, 7);
  EXPECT_LT(principal_angles(u, u).max(), 1e-12);
  EXPECT_LT(principal_angles(u, Matrix(u * random_matrix(3, 3, 8))).max(), 1e-10);
  const Matrix e = Matrix::Identity(6, 6);
  const auto rep = principal_angles(e.leftCols(2), e.rightCols(3));
  EXPECT_EQ(rep.dim_u, 3);
  EXPECT_EQ(rep.dim_v, 2);
  for (int i = 0; i < 2; ++i) EXPECT_NEAR(rep.angles(i), std::numbers::pi / 2, 1e-15);
}

TEST(Angles, SmallAngleAccurate) {
  Matrix u = Matrix::Zero(3, 1), v = Matrix::Zero(3, 1);
  u(0, 0) = 1.0;
  v(0, 0) = 1.0;
  v(1, 0) = 1e-9;
  EXPECT_NEAR(principal_angles(u, v).max(), 1e-9, 1e-20);
}

TEST(Angles, WeightedInnerProduct) {
  SparseMatrix g(2, 2);
  g.insert(0, 0) = 1.0;
  g.insert(1, 1) = 4.0;
  Matrix u(2, 1), v(2, 1);
  u << 1, 0;
  v << 1, 0.5;
  EXPECT_NEAR(principal_angles(u, v, &g, InnerProduct::l2).max(), std::numbers::pi / 4, 1e-14);
}

class InterpFixture : public ::testing::Test {
 protected:
  NestedPair pair = build_nested(2, 20);
};

TEST_F(InterpFixture, ZeroFunction) {
  LocalProblems lp(pair, CoefficientField::constant(20, 1.0), OperatorKind::diffusion, 1);
  const auto pou = build_pou(pair, build_all_patches(pair, 1));
  const auto sys = assemble(pair, CoefficientField::constant(20, 1.0), OperatorKind::diffusion);
  const auto b = check_interp_bound(lp, pou, std::vector<int>(4, 2), sys.stiffness, Vector::Zero(361));
  EXPECT_EQ(b.lhs, 0.0);
  EXPECT_EQ(b.rhs, 0.0);
}

TEST_F(InterpFixture, EigenfunctionRepresentedExactly) {
  const auto single = build_nested(1, 20);
  const auto field = gen_inclusions(single, 0.2, 1e2, 3);
  LocalProblems lp(single, field, OperatorKind::diffusion, 0);
  const auto pou = build_pou(single, build_all_patches(single, 0));
  const auto sys = assemble(single, field, OperatorKind::diffusion);
  const Vector u = local_eig(lp[0], 1).l2_normalized().col(0);
  const auto b = check_interp_bound(lp, pou, {1}, sys.stiffness, u);
  EXPECT_LE(b.lhs, 1e-10 * energy_norm(sys.stiffness, u));
  EXPECT_TRUE(b.holds());
}

TEST_F(InterpFixture, RandomSmoothFunction) {
  const auto field = gen_inclusions(pair, 0.2, 1e3, 6);
  LocalProblems lp(pair, field, OperatorKind::diffusion, 2);
  const auto pou = build_pou(pair, build_all_patches(pair, 2));
  const auto sys = assemble(pair, field, OperatorKind::diffusion);
  Vector u(361);
  for (int j = 1; j < 20; ++j)
    for (int i = 1; i < 20; ++i) {
      const double x = i / 20.0, y = j / 20.0;
      u((i - 1) + (j - 1) * 19) = std::sin(std::numbers::pi * x) * std::sin(2 * std::numbers::pi * y) + x * y * (1 - x) * (1 - y);
    }
  const auto b = check_interp_bound(lp, pou, std::vector<int>(4, 4), sys.stiffness, u);
  EXPECT_GT(b.lhs, 0.0);
  EXPECT_TRUE(b.holds());
}

class RateFixture : public ::testing::Test {
 protected:
  NestedPair pair = build_nested(4, 32);
};

TEST_F(RateFixture, WellSeparatedFitsGap) {
  const auto field = CoefficientField::constant(32, 1.0);
  PatchSystem sys(pair, field, OperatorKind::diffusion, build_patch(pair, 5, 1));
  const Matrix seed = Matrix::Ones(sys.dimension(), 1);
  const auto rep = rate_report(sys, ConstraintSet::from_functions(sys, seed), 8);
  ASSERT_TRUE(rep.fitted_rate.has_value());
  EXPECT_LE(rep.gap, 0.5);
  EXPECT_LE(*rep.fitted_rate, 3.0 * rep.gap);
  EXPECT_GE(*rep.fitted_rate, rep.gap / 3.0);
  EXPECT_EQ(rep.rows.size(), 8u);
  EXPECT_FALSE(rep.clustered);
}

TEST_F(RateFixture, SingleRoundNoFit) {
  PatchSystem sys(pair, CoefficientField::constant(32, 1.0), OperatorKind::diffusion, build_patch(pair, 5, 1));
  const auto rep = rate_report(sys, ConstraintSet::from_functions(sys, Matrix::Ones(sys.dimension(), 1)), 1);
  EXPECT_FALSE(rep.fitted_rate.has_value());
  EXPECT_EQ(rep.rows.size(), 1u);
}

TEST_F(RateFixture, ClusterFlagged) {
  // Square patch with constant coefficient: the second and third Laplace modes coincide.
  PatchSystem sys(pair, CoefficientField::constant(32, 1.0), OperatorKind::diffusion, build_patch(pair, 5, 1));
  const Matrix seeds = random_matrix(sys.dimension(), 2, 4);
  const auto rep = rate_report(sys, ConstraintSet::from_functions(sys, seeds), 4);
  EXPECT_TRUE(rep.clustered);
  EXPECT_FALSE(rep.fitted_rate.has_value());
  EXPECT_FALSE(rep.notes.empty());
}
