#pragma once

// Galerkin solve in a multiscale space and the per-run result rows.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cstdio>
#include <optional>
#include <ostream>
#include <string>

#include "lsi/errors.hpp"
#include "lsi/fem.hpp"
#include "lsi/msbasis.hpp"

namespace lsi {

struct CoarseSystem {
  SparseMatrix basis;  // Phi, fine free DOFs x coarse DOFs
  Matrix matrix;       // Phi^T A Phi
  Vector rhs;          // Phi^T b
  double pivot_ratio = 0.0;  // min/max Cholesky pivot, a cheap conditioning indicator

  [[nodiscard]] int dimension() const noexcept { return static_cast<int>(matrix.rows()); }
};

/// Triple product Phi^T A Phi. Phi is sparse by patch support, so entry (p, q) is
/// structurally nonzero only when the two patches overlap.
inline CoarseSystem assemble_coarse(const SparseOperator& a, const Vector& b, SparseMatrix phi) {
  require(phi.rows() == a.dimension() && b.size() == a.dimension(), ErrorKind::invalid_argument,
          "basis does not match the fine operator");
  CoarseSystem cs;
  const Eigen::SparseMatrix<double> phic(phi);
  const Eigen::SparseMatrix<double> aphi = Eigen::SparseMatrix<double>(a.matrix) * phic;
  const Eigen::SparseMatrix<double> prod = phic.transpose() * aphi;
  cs.matrix = Matrix(prod);
  cs.matrix = 0.5 * (cs.matrix + cs.matrix.transpose()).eval();
  cs.rhs = phic.transpose() * b;
  cs.basis = std::move(phi);
  return cs;
}

inline CoarseSystem assemble_coarse(const SparseOperator& a, const Vector& b, const MsBasis& basis) {
  return assemble_coarse(a, b, basis.matrix(a.dimension()));
}

struct MsSolution {
  Vector fine;          // u_ms = Phi c
  Vector coefficients;  // c
};

/// Dense Cholesky of the coarse matrix; failure (a degenerate basis) is reported
/// with the smallest eigenvalue.
inline MsSolution solve_ms(CoarseSystem& cs) {
  if (cs.dimension() == 0) throw Error(ErrorKind::singular_coarse, "empty multiscale space");
  const Eigen::LLT<Matrix> llt(cs.matrix);
  if (llt.info() != Eigen::Success) {
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(cs.matrix, Eigen::EigenvaluesOnly);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3e", eig.eigenvalues().minCoeff());
    throw Error(ErrorKind::singular_coarse, std::string("coarse matrix is not SPD, smallest eigenvalue ") + buf);
  }
  const Vector diag = Matrix(llt.matrixL()).diagonal();
  cs.pivot_ratio = (diag.minCoeff() * diag.minCoeff()) / (diag.maxCoeff() * diag.maxCoeff());
  MsSolution sol;
  sol.coefficients = llt.solve(cs.rhs);
  sol.fine = cs.basis * sol.coefficients;
  return sol;
}

/// Relative Galerkin residual ||Phi^T (A u - b)|| / ||Phi^T b||.
inline double galerkin_residual(const CoarseSystem& cs, const SparseOperator& a, const Vector& b, const Vector& u) {
  const Vector r = Eigen::SparseMatrix<double>(cs.basis).transpose() * Vector(a.matrix * u - b);
  const double scale = cs.rhs.norm();
  return scale > 0 ? r.norm() / scale : r.norm();
}

/// One line of experiment output.
struct ResultRow {
  std::string method;
  int n = 0;
  int m = 0;
  double H = 0.0;
  double h = 0.0;
  double contrast = 1.0;
  std::optional<int> channel_len;
  double e_energy = 0.0;
  double e_L2 = 0.0;
  int dof = 0;
  std::optional<double> wall_time_s;
  int nolp = 0;

  static constexpr const char* csv_header =
      "method,n,m,H,h,contrast,channel_len,e_energy,e_L2,DoF,wall_time_s,NoLP";

  [[nodiscard]] std::string csv() const {
    char buf[512];
    std::snprintf(buf, sizeof buf, "%s,%d,%d,%.17g,%.17g,%.17g,%s,%.10e,%.10e,%d,%s,%d", method.c_str(), n, m, H, h,
                  contrast, channel_len ? std::to_string(*channel_len).c_str() : "NA", e_energy, e_L2, dof,
                  wall_time_s ? format_time(*wall_time_s).c_str() : "NA", nolp);
    return buf;
  }

 private:
  static std::string format_time(double t) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", t);
    return buf;
  }
};

struct RunMetadata {
  int m = 0;
  double H = 0.0;
  double h = 0.0;
  double contrast = 1.0;
  std::optional<int> channel_len;
  std::optional<double> wall_time_s;
};

inline ResultRow report(const Vector& u_ref, const Vector& u_ms, const SparseOperator& a, const SparseOperator& m,
                        const MsBasis& basis, const RunMetadata& meta) {
  const auto err = relative_errors(u_ref, u_ms, a, m);
  ResultRow row;
  row.method = to_string(basis.spec.method);
  row.n = basis.spec.method == Method::lod ? 0 : basis.spec.iterations;
  row.m = meta.m;
  row.H = meta.H;
  row.h = meta.h;
  row.contrast = meta.contrast;
  row.channel_len = meta.channel_len;
  row.e_energy = err.energy;
  row.e_L2 = err.l2;
  row.dof = basis.dof();
  row.wall_time_s = meta.wall_time_s;
  row.nolp = basis.local_problems();
  return row;
}

}  // namespace lsi
