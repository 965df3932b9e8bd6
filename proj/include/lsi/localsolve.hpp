#pragma once

// Constrained local solves on a patch: minimize the energy a(phi, phi) over
// V(omega_i) subject to L^2 constraints b_j^T phi = delta_jk. This is the kernel
// shared by the LOD baseline and both subspace iterations.

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>

#include <memory>
#include <string>
#include <vector>

#include "lsi/errors.hpp"
#include "lsi/fem.hpp"
#include "lsi/grid.hpp"

namespace lsi {

/// Patch stiffness and mass on the interior DOFs of one patch, with the stiffness
/// factorized once. Not copyable; confine each instance to one worker at a time.
class PatchSystem {
 public:
  PatchSystem(const NestedPair& pair, const CoefficientField& field, OperatorKind kind, Patch patch)
      : patch_(std::move(patch)), kind_(kind) {
    auto assembled = assemble(pair, field, kind, &patch_);
    stiffness_ = std::move(assembled.stiffness);
    mass_ = std::move(assembled.mass);
    layout_ = assembled.layout;
    global_dofs_ = patch_global_dofs(pair, patch_, kind);
    factorize();
  }

  /// Builds a system directly from matrices (tests, dense oracles).
  PatchSystem(SparseOperator stiffness, SparseOperator mass)
      : stiffness_(std::move(stiffness)), mass_(std::move(mass)) {
    require(stiffness_.dimension() == mass_.dimension(), ErrorKind::invalid_argument,
            "stiffness and mass dimensions differ");
    factorize();
  }

  PatchSystem(const PatchSystem&) = delete;
  PatchSystem& operator=(const PatchSystem&) = delete;

  [[nodiscard]] int dimension() const noexcept { return stiffness_.dimension(); }
  [[nodiscard]] const Patch& patch() const noexcept { return patch_; }
  [[nodiscard]] OperatorKind kind() const noexcept { return kind_; }
  [[nodiscard]] const SparseOperator& stiffness() const noexcept { return stiffness_; }
  [[nodiscard]] const SparseOperator& mass() const noexcept { return mass_; }
  [[nodiscard]] const DofLayout& layout() const noexcept { return layout_; }
  [[nodiscard]] const std::vector<int>& global_dofs() const noexcept { return global_dofs_; }

  /// A^{-1} x, column-wise.
  [[nodiscard]] Matrix solve(const Matrix& x) const { return llt_->solve(x); }
  [[nodiscard]] Vector solve(const Vector& x) const { return llt_->solve(x); }

  /// L^{-1} P x for the factorization P A P^T = L L^T, so that
  /// x^T A^{-1} y = (half_solve(x))^T half_solve(y).
  [[nodiscard]] Matrix half_solve(const Matrix& x) const {
    Matrix z = llt_->permutationP() * x;
    llt_->matrixL().solveInPlace(z);
    return z;
  }

 private:
  using Llt = Eigen::SimplicialLLT<Eigen::SparseMatrix<double>, Eigen::Lower, Eigen::AMDOrdering<int>>;

  void factorize() {
    if (stiffness_.dimension() == 0) throw Error(ErrorKind::empty_system, "patch has no free DOFs");
    llt_ = std::make_unique<Llt>();
    llt_->compute(Eigen::SparseMatrix<double>(stiffness_.matrix));
    if (llt_->info() != Eigen::Success)
      throw Error(ErrorKind::not_spd, "patch " + std::to_string(patch_.center) + " stiffness is not SPD");
  }

  Patch patch_;
  OperatorKind kind_ = OperatorKind::diffusion;
  SparseOperator stiffness_;
  SparseOperator mass_;
  DofLayout layout_;
  std::vector<int> global_dofs_;
  std::unique_ptr<Llt> llt_;
};

/// Columns b_j of the constraint functionals q_j(v) = b_j^T v.
struct ConstraintSet {
  Matrix vectors;

  [[nodiscard]] int count() const noexcept { return static_cast<int>(vectors.cols()); }

  /// b_j = M_omega f_j for functions f_j living in V(omega_i).
  static ConstraintSet from_functions(const PatchSystem& sys, const Matrix& functions) {
    return ConstraintSet{sys.mass().matrix * functions};
  }
};

struct SaddleSolution {
  Vector phi;
  Vector multipliers;
};

/// Solutions for several Kronecker right-hand sides at once.
struct SaddleBatch {
  Matrix phi;          // one column per requested target
  Matrix multipliers;  // L x targets
};

/// Relative pivot floor below which the constraint Schur complement is singular.
inline constexpr double dependent_constraint_tol = 1e-12;

/// Schur-complement solve of the local saddle problem for each target index k:
///   A phi + B mu = 0,  B^T phi = e_k.
/// With S = B^T A^{-1} B this gives mu = -S^{-1} e_k and phi = A^{-1} B S^{-1} e_k.
inline SaddleBatch solve_saddle(const PatchSystem& sys, const ConstraintSet& constraints,
                                const std::vector<int>& targets) {
  const int count = constraints.count();
  require(count >= 1, ErrorKind::invalid_argument, "at least one constraint required");
  require(constraints.vectors.rows() == sys.dimension(), ErrorKind::invalid_argument,
          "constraint vectors do not match the patch dimension");
  for (int k : targets)
    require(k >= 0 && k < count, ErrorKind::invalid_argument, "target index out of range");

  const Matrix z = sys.half_solve(constraints.vectors);
  Matrix s = z.transpose() * z;
  s = 0.5 * (s + s.transpose()).eval();
  const Eigen::LDLT<Matrix> ldlt(s);
  const Vector d = ldlt.vectorD();
  const double dmax = d.cwiseAbs().maxCoeff();
  const double dmin = d.minCoeff();
  if (ldlt.info() != Eigen::Success || !(dmax > 0.0) || !(dmin > dependent_constraint_tol * dmax))
    throw Error(ErrorKind::dependent_constraints,
                "patch " + std::to_string(sys.patch().center) + ": constraint Schur complement is singular "
                "(pivot ratio " + std::to_string(dmax > 0 ? dmin / dmax : 0.0) + ")");

  Matrix rhs = Matrix::Zero(count, static_cast<int>(targets.size()));
  for (std::size_t t = 0; t < targets.size(); ++t) rhs(targets[t], static_cast<int>(t)) = 1.0;
  const Matrix c = ldlt.solve(rhs);
  SaddleBatch out;
  out.phi = sys.solve(Matrix(constraints.vectors * c));
  out.multipliers = -c;
  return out;
}

inline SaddleSolution solve_saddle(const PatchSystem& sys, const ConstraintSet& constraints, int k) {
  auto batch = solve_saddle(sys, constraints, std::vector<int>{k});
  return {batch.phi.col(0), batch.multipliers.col(0)};
}

/// L_i^{-1} applied to the function with nodal values g: A_omega^{-1} M_omega g.
inline Matrix apply_local_inverse(const PatchSystem& sys, const Matrix& g) {
  return sys.solve(Matrix(sys.mass().matrix * g));
}

inline Vector apply_local_inverse(const PatchSystem& sys, const Vector& g) {
  return sys.solve(Vector(sys.mass().matrix * g));
}

}  // namespace lsi
