#include <gtest/gtest.h>

#include <random>

#include "lsi/coeff.hpp"
#include "lsi/msgalerkin.hpp"

using namespace lsi;

namespace {

SparseMatrix identity(int n) {
  SparseMatrix id(n, n);
  id.setIdentity();
  return id;
}

}  // namespace

TEST(Coarse, IdentityEmbeddingReproducesFineSolve) {
  const auto pair = build_nested(2, 12);
  const auto field = gen_inclusions(pair, 0.2, 1e3, 1);
  const auto fp = reference_solve(pair, field, OperatorKind::diffusion, default_source(OperatorKind::diffusion));
  const int n = fp.system.stiffness.dimension();
  auto cs = assemble_coarse(fp.system.stiffness, fp.rhs, identity(n));
  EXPECT_LE((cs.matrix - Matrix(fp.system.stiffness.matrix)).cwiseAbs().maxCoeff(), 0.0);
  const auto sol = solve_ms(cs);
  EXPECT_LE((sol.fine - fp.solution).norm(), 1e-10 * fp.solution.norm());
  const auto e = relative_errors(fp.solution, sol.fine, fp.system.stiffness, fp.system.mass);
  EXPECT_LE(e.energy, 1e-10);
}

TEST(Coarse, SingleVectorIsEnergy) {
  const auto pair = build_nested(2, 8);
  const auto sys = assemble(pair, CoefficientField::constant(8, 2.0), OperatorKind::diffusion);
  const Vector phi = Vector::LinSpaced(sys.stiffness.dimension(), 1.0, 2.0);
  const auto cs = assemble_coarse(sys.stiffness, Vector::Ones(phi.size()), SparseMatrix(Matrix(phi).sparseView()));
  ASSERT_EQ(cs.dimension(), 1);
  EXPECT_NEAR(cs.matrix(0, 0), phi.dot(sys.stiffness.matrix * phi), 1e-12 * cs.matrix(0, 0));
}

TEST(Coarse, TripleProductAgainstDense) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const int n = 80, k = 12;
  Matrix r = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = std::max(0, i - 3); j <= std::min(n - 1, i + 3); ++j) r(i, j) = u(rng);
  SparseOperator a;
  a.matrix = Matrix(r * r.transpose() + n * Matrix::Identity(n, n)).sparseView();
  Matrix phi = Matrix::Zero(n, k);
  for (int c = 0; c < k; ++c)
    for (int i = 5 * c; i < std::min(n, 5 * c + 20); ++i) phi(i, c) = u(rng);
  const Matrix dense = phi.transpose() * Matrix(a.matrix) * phi;
  const auto cs = assemble_coarse(a, Vector::Ones(n), SparseMatrix(phi.sparseView()));
  EXPECT_LE((cs.matrix - dense).cwiseAbs().maxCoeff(), 1e-12 * dense.cwiseAbs().maxCoeff());
  EXPECT_EQ(cs.matrix, cs.matrix.transpose());
}

TEST(Coarse, SingularBasisReported) {
  const auto pair = build_nested(2, 8);
  const auto sys = assemble(pair, CoefficientField::constant(8, 1.0), OperatorKind::diffusion);
  Matrix phi = Matrix::Zero(sys.stiffness.dimension(), 2);
  phi.col(0).setOnes();
  phi.col(1).setOnes();
  auto cs = assemble_coarse(sys.stiffness, Vector::Ones(phi.rows()), SparseMatrix(phi.sparseView()));
  try {
    (void)solve_ms(cs);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::singular_coarse);
    EXPECT_NE(std::string(e.what()).find("eigenvalue"), std::string::npos);
  }
  auto empty = assemble_coarse(sys.stiffness, Vector::Ones(phi.rows()), SparseMatrix(phi.rows(), 0));
  EXPECT_THROW((void)solve_ms(empty), Error);
}

TEST(Coarse, ExactSolutionInSpan) {
  const auto pair = build_nested(2, 10);
  const auto fp = reference_solve(pair, CoefficientField::constant(10, 1.0), OperatorKind::diffusion,
                                  default_source(OperatorKind::diffusion));
  Matrix phi(fp.solution.size(), 2);
  phi.col(0) = fp.solution;
  phi.col(1) = Vector::LinSpaced(fp.solution.size(), 0.0, 1.0);
  auto cs = assemble_coarse(fp.system.stiffness, fp.rhs, SparseMatrix(phi.sparseView()));
  const auto sol = solve_ms(cs);
  EXPECT_LE((sol.fine - fp.solution).norm(), 1e-10 * fp.solution.norm());
}

class MsRun : public ::testing::Test {
 protected:
  NestedPair pair = build_nested(4, 20);
  CoefficientField field = gen_inclusions(pair, 0.2, 1e4, 12);
  FineProblem fp = reference_solve(pair, field, OperatorKind::diffusion, default_source(OperatorKind::diffusion));
};

TEST_F(MsRun, GalerkinOrthogonality) {
  LocalProblems lp(pair, field, OperatorKind::diffusion, 1);
  for (const char* label : {"lod", "lssi-1", "lssi-3", "lksi-2"}) {
    auto cs = assemble_coarse(fp.system.stiffness, fp.rhs, build_basis(lp, MethodSpec::parse(label)));
    const auto sol = solve_ms(cs);
    EXPECT_LE(galerkin_residual(cs, fp.system.stiffness, fp.rhs, sol.fine), 1e-10) << label;
  }
}

TEST_F(MsRun, NestedSpansNeverIncreaseError) {
  LocalProblems lp(pair, field, OperatorKind::diffusion, 2);
  double prev = 1e300;
  for (int n = 1; n <= 4; ++n) {
    auto cs = assemble_coarse(fp.system.stiffness, fp.rhs, build_basis(lp, {Method::lksi, n}));
    const auto sol = solve_ms(cs);
    const double e = relative_errors(fp.solution, sol.fine, fp.system.stiffness, fp.system.mass).energy;
    EXPECT_LE(e, prev * (1.0 + 1e-10));
    prev = e;
  }
}

TEST_F(MsRun, BestApproximation) {
  LocalProblems lp(pair, field, OperatorKind::diffusion, 1);
  const auto basis = build_basis(lp, {Method::lssi, 2});
  auto cs = assemble_coarse(fp.system.stiffness, fp.rhs, basis);
  const auto sol = solve_ms(cs);
  // Energy projection of the reference solution onto the span.
  const Matrix phi(cs.basis);
  const Matrix g = phi.transpose() * fp.system.stiffness.matrix * phi;
  const Vector c = g.ldlt().solve(phi.transpose() * (fp.system.stiffness.matrix * fp.solution));
  const Vector best = phi * c;
  const double e_ms = energy_norm(fp.system.stiffness, Vector(fp.solution - sol.fine));
  const double e_best = energy_norm(fp.system.stiffness, Vector(fp.solution - best));
  EXPECT_NEAR(e_ms, e_best, 1e-8 * e_best);
}

TEST_F(MsRun, ReportRow) {
  LocalProblems lp(pair, field, OperatorKind::diffusion, 1);
  const auto basis = build_basis(lp, {Method::lssi, 2});
  auto cs = assemble_coarse(fp.system.stiffness, fp.rhs, basis);
  const auto sol = solve_ms(cs);
  const auto row = report(fp.solution, sol.fine, fp.system.stiffness, fp.system.mass, basis,
                          RunMetadata{1, 0.25, 0.05, 1e4, std::nullopt, std::nullopt});
  EXPECT_EQ(row.method, "lssi");
  EXPECT_EQ(row.n, 2);
  EXPECT_EQ(row.dof, 64);
  EXPECT_EQ(row.nolp, 128);
  const auto csv = row.csv();
  EXPECT_EQ(csv.rfind("lssi,2,1,0.25,0.050000000000000003,10000,NA,", 0), 0u);
  EXPECT_NE(csv.find(",NA,"), std::string::npos);
  EXPECT_EQ(csv.substr(csv.size() - 7), ",NA,128");
  const auto self = report(fp.solution, fp.solution, fp.system.stiffness, fp.system.mass, basis, {});
  EXPECT_EQ(self.e_energy, 0.0);
  EXPECT_EQ(self.e_L2, 0.0);
}

TEST(Report, HeaderAndTime) {
  EXPECT_EQ(std::string(ResultRow::csv_header),
            "method,n,m,H,h,contrast,channel_len,e_energy,e_L2,DoF,wall_time_s,NoLP");
  ResultRow row;
  row.method = "lod";
  row.channel_len = 6;
  row.wall_time_s = 1.23456;
  const auto csv = row.csv();
  EXPECT_NE(csv.find(",6,"), std::string::npos);
  EXPECT_NE(csv.find(",1.2346,"), std::string::npos);
}
