#pragma once

// Q1 finite elements on the structured fine mesh: element kernels, assembly with
// Dirichlet elimination, SPD solvers and the norms used for error reporting.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <array>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <type_traits>
#include <vector>

#include "lsi/coeff.hpp"
#include "lsi/errors.hpp"
#include "lsi/grid.hpp"

namespace lsi {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor, int>;
using Triplet = Eigen::Triplet<double, int>;

enum class OperatorKind { diffusion, elasticity };

constexpr int block_size(OperatorKind kind) noexcept { return kind == OperatorKind::elasticity ? 2 : 1; }

constexpr std::string_view to_string(OperatorKind kind) noexcept {
  return kind == OperatorKind::elasticity ? "elasticity" : "diffusion";
}

/// Symmetric operator in compressed sparse row storage.
struct SparseOperator {
  SparseMatrix matrix;
  bool symmetric = true;

  [[nodiscard]] int dimension() const noexcept { return static_cast<int>(matrix.rows()); }
  [[nodiscard]] const int* row_offsets() const noexcept { return matrix.outerIndexPtr(); }
  [[nodiscard]] const int* column_indices() const noexcept { return matrix.innerIndexPtr(); }
  [[nodiscard]] const double* values() const noexcept { return matrix.valuePtr(); }

  [[nodiscard]] double asymmetry() const {
    SparseMatrix diff = matrix - SparseMatrix(matrix.transpose());
    double worst = 0.0;
    for (int k = 0; k < diff.nonZeros(); ++k) worst = std::max(worst, std::abs(diff.valuePtr()[k]));
    return worst;
  }
  [[nodiscard]] double max_abs() const {
    double worst = 0.0;
    for (int k = 0; k < matrix.nonZeros(); ++k) worst = std::max(worst, std::abs(matrix.valuePtr()[k]));
    return worst;
  }
};

/// Coefficient values on one element: kappa for diffusion, (lambda, mu) for elasticity.
struct ElementCoefficient {
  double first = 1.0;
  double second = 1.0;
};

namespace detail {

inline constexpr std::array<double, 2> gauss_points{0.5 - 0.5 / 1.7320508075688772,
                                                    0.5 + 0.5 / 1.7320508075688772};

// Reference Q1 shapes on [0,1]^2 with the counter-clockwise node order.
inline std::array<double, 4> q1_shapes(double s, double t) {
  return {(1 - s) * (1 - t), s * (1 - t), s * t, (1 - s) * t};
}
inline std::array<std::array<double, 2>, 4> q1_gradients(double s, double t) {
  return {{{-(1 - t), -(1 - s)}, {(1 - t), -s}, {t, s}, {-t, (1 - s)}}};
}

}  // namespace detail

/// Element stiffness on an axis-aligned square of side h. Diffusion gives the
/// 4x4 Q1 Laplacian scaled by kappa; elasticity the 8x8 plane-strain matrix with
/// dofs interleaved per node (u_x, u_y).
inline Matrix element_stiffness(OperatorKind kind, ElementCoefficient c, double h) {
  if (kind == OperatorKind::diffusion) {
    Matrix k(4, 4);
    k << 4, -1, -2, -1,  //
        -1, 4, -1, -2,   //
        -2, -1, 4, -1,   //
        -1, -2, -1, 4;
    (void)h;  // scale invariant in 2D
    return (c.first / 6.0) * k;
  }
  const double lam = c.first, mu = c.second;
  Eigen::Matrix3d d;
  d << lam + 2 * mu, lam, 0, lam, lam + 2 * mu, 0, 0, 0, mu;
  Matrix k = Matrix::Zero(8, 8);
  for (double s : detail::gauss_points) {
    for (double t : detail::gauss_points) {
      auto g = detail::q1_gradients(s, t);
      Eigen::Matrix<double, 3, 8> b = Eigen::Matrix<double, 3, 8>::Zero();
      for (int a = 0; a < 4; ++a) {
        const double gx = g[static_cast<std::size_t>(a)][0] / h;
        const double gy = g[static_cast<std::size_t>(a)][1] / h;
        b(0, 2 * a) = gx;
        b(1, 2 * a + 1) = gy;
        b(2, 2 * a) = gy;
        b(2, 2 * a + 1) = gx;
      }
      k += 0.25 * h * h * b.transpose() * d * b;
    }
  }
  return k;
}

/// Consistent Q1 mass matrix, (h^2/36) [[4,2,1,2],...].
inline Matrix element_mass(double h) {
  Matrix m(4, 4);
  m << 4, 2, 1, 2,  //
      2, 4, 2, 1,   //
      1, 2, 4, 2,   //
      2, 1, 2, 4;
  return (h * h / 36.0) * m;
}

/// Mass matrix for `bs` interleaved components per node.
inline Matrix element_mass(double h, int bs) {
  const Matrix m = element_mass(h);
  if (bs == 1) return m;
  Matrix out = Matrix::Zero(4 * bs, 4 * bs);
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b)
      for (int c = 0; c < bs; ++c) out(bs * a + c, bs * b + c) = m(a, b);
  return out;
}

inline ElementCoefficient element_coefficient(const CoefficientField& field, OperatorKind kind, int element) {
  if (kind == OperatorKind::diffusion) return {field[element], field[element]};
  return {field.lambda(element), field.mu(element)};
}

/// Free-DOF numbering of an assembly region: the interior nodes of the region with
/// `bs` interleaved components each. The global region is the whole domain.
struct DofLayout {
  IndexBox node_box;  // closed node range of the region
  int bs = 1;

  [[nodiscard]] int nodes_x() const noexcept { return node_box.width() - 2; }
  [[nodiscard]] int nodes_y() const noexcept { return node_box.height() - 2; }
  [[nodiscard]] int node_count() const noexcept { return std::max(0, nodes_x()) * std::max(0, nodes_y()); }
  [[nodiscard]] int size() const noexcept { return bs * node_count(); }

  /// Local node index of a fine node with lattice coordinates (i, j), or -1.
  [[nodiscard]] int node_index(int i, int j) const noexcept {
    if (i <= node_box.x0 || i >= node_box.x1 - 1 || j <= node_box.y0 || j >= node_box.y1 - 1) return -1;
    return (i - node_box.x0 - 1) + (j - node_box.y0 - 1) * nodes_x();
  }
};

inline DofLayout global_layout(const NestedPair& pair, OperatorKind kind) {
  const int n = pair.fine.elements_per_side();
  return DofLayout{IndexBox{0, 0, n + 1, n + 1}, block_size(kind)};
}

inline DofLayout patch_layout(const Patch& patch, OperatorKind kind) {
  return DofLayout{patch.node_box, block_size(kind)};
}

/// Global free-DOF index of every local DOF of a patch.
inline std::vector<int> patch_global_dofs(const NestedPair& pair, const Patch& patch, OperatorKind kind) {
  const auto local = patch_layout(patch, kind);
  const auto global = global_layout(pair, kind);
  std::vector<int> map(static_cast<std::size_t>(local.size()));
  for (int j = local.node_box.y0 + 1; j < local.node_box.y1 - 1; ++j) {
    for (int i = local.node_box.x0 + 1; i < local.node_box.x1 - 1; ++i) {
      const int l = local.node_index(i, j), g = global.node_index(i, j);
      for (int c = 0; c < local.bs; ++c) map[static_cast<std::size_t>(local.bs * l + c)] = global.bs * g + c;
    }
  }
  return map;
}

struct AssembledSystem {
  SparseOperator stiffness;
  SparseOperator mass;
  DofLayout layout;
};

/// Assembles stiffness and mass over the fine elements of the whole domain, or of
/// one patch, eliminating every DOF on the region boundary.
inline AssembledSystem assemble(const NestedPair& pair, const CoefficientField& field, OperatorKind kind,
                                const Patch* patch = nullptr) {
  require(field.n() == pair.fine.elements_per_side(), ErrorKind::invalid_argument,
          "coefficient field does not match the fine mesh");
  const auto layout = patch ? patch_layout(*patch, kind) : global_layout(pair, kind);
  const int bs = layout.bs;
  if (layout.size() == 0) throw Error(ErrorKind::empty_system, "assembly region has no free DOFs");

  std::vector<int> elements;
  if (patch) {
    elements = patch->fine_elements(pair);
  } else {
    elements.resize(static_cast<std::size_t>(pair.fine.element_count()));
    for (int e = 0; e < pair.fine.element_count(); ++e) elements[static_cast<std::size_t>(e)] = e;
  }

  const double h = pair.fine.h();
  const Matrix mass_e = element_mass(h, bs);
  std::vector<Triplet> kt, mt;
  kt.reserve(elements.size() * 16 * bs * bs);
  mt.reserve(elements.size() * 16 * bs * bs);
  std::array<int, 8> dofs{};
  for (int e : elements) {
    const auto nodes = pair.fine.element_nodes(e);
    for (int a = 0; a < 4; ++a) {
      auto [i, j] = pair.fine.node_ij(nodes[static_cast<std::size_t>(a)]);
      const int l = layout.node_index(i, j);
      for (int c = 0; c < bs; ++c) dofs[static_cast<std::size_t>(bs * a + c)] = l < 0 ? -1 : bs * l + c;
    }
    const Matrix ke = element_stiffness(kind, element_coefficient(field, kind, e), h);
    for (int a = 0; a < 4 * bs; ++a) {
      const int ra = dofs[static_cast<std::size_t>(a)];
      if (ra < 0) continue;
      for (int b = 0; b < 4 * bs; ++b) {
        const int cb = dofs[static_cast<std::size_t>(b)];
        if (cb < 0) continue;
        kt.emplace_back(ra, cb, ke(a, b));
        if (mass_e(a, b) != 0.0) mt.emplace_back(ra, cb, mass_e(a, b));
      }
    }
  }
  AssembledSystem sys;
  sys.layout = layout;
  sys.stiffness.matrix.resize(layout.size(), layout.size());
  sys.stiffness.matrix.setFromTriplets(kt.begin(), kt.end());
  sys.mass.matrix.resize(layout.size(), layout.size());
  sys.mass.matrix.setFromTriplets(mt.begin(), mt.end());
  return sys;
}

/// Body force: scalar-valued for diffusion, two components for elasticity.
using Source = std::function<std::array<double, 2>(double x, double y)>;

inline Source scalar_source(std::function<double(double, double)> f) {
  return [f = std::move(f)](double x, double y) { return std::array<double, 2>{f(x, y), 0.0}; };
}

/// Load vector with 2x2 Gauss quadrature per fine element, on the global free DOFs.
inline Vector load_vector(const NestedPair& pair, OperatorKind kind, const Source& f) {
  const auto layout = global_layout(pair, kind);
  const int bs = layout.bs;
  const double h = pair.fine.h();
  Vector b = Vector::Zero(layout.size());
  for (int e = 0; e < pair.fine.element_count(); ++e) {
    auto [ei, ej] = pair.fine.element_ij(e);
    const auto nodes = pair.fine.element_nodes(e);
    for (double s : detail::gauss_points) {
      for (double t : detail::gauss_points) {
        const auto fx = f((ei + s) * h, (ej + t) * h);
        const auto shape = detail::q1_shapes(s, t);
        for (int a = 0; a < 4; ++a) {
          auto [i, j] = pair.fine.node_ij(nodes[static_cast<std::size_t>(a)]);
          const int l = layout.node_index(i, j);
          if (l < 0) continue;
          for (int c = 0; c < bs; ++c)
            b(bs * l + c) += 0.25 * h * h * shape[static_cast<std::size_t>(a)] * fx[static_cast<std::size_t>(c)];
        }
      }
    }
  }
  return b;
}

enum class SolveMethod { direct, cg };

/// Factorize-once SPD solver. `direct` is a sparse Cholesky with AMD ordering;
/// `cg` is Jacobi-preconditioned conjugate gradients.
class SpdSolver {
 public:
  explicit SpdSolver(const SparseOperator& a, SolveMethod method = SolveMethod::direct, double tol = 1e-10,
                     int max_iterations = 0)
      : a_(&a.matrix), method_(method), tol_(tol), max_iterations_(max_iterations) {
    if (a.dimension() == 0) throw Error(ErrorKind::empty_system, "empty operator");
    if (method_ == SolveMethod::direct) {
      llt_ = std::make_unique<Llt>();
      llt_->compute(Eigen::SparseMatrix<double>(a.matrix));
      if (llt_->info() != Eigen::Success)
        throw Error(ErrorKind::not_spd, "sparse Cholesky met a nonpositive pivot");
    } else {
      inv_diag_ = a.matrix.diagonal();
      for (int i = 0; i < inv_diag_.size(); ++i) {
        if (!(inv_diag_(i) > 0.0)) throw Error(ErrorKind::not_spd, "nonpositive diagonal entry");
        inv_diag_(i) = 1.0 / inv_diag_(i);
      }
    }
  }

  [[nodiscard]] int dimension() const noexcept { return static_cast<int>(a_->rows()); }

  [[nodiscard]] Vector solve(const Vector& b) const {
    if (method_ == SolveMethod::direct) return llt_->solve(b);
    return cg(b);
  }

  /// Solves for every column of `b`.
  [[nodiscard]] Matrix solve(const Matrix& b) const {
    if (method_ == SolveMethod::direct) return llt_->solve(b);
    Matrix x(b.rows(), b.cols());
    for (int k = 0; k < b.cols(); ++k) x.col(k) = cg(b.col(k));
    return x;
  }

 private:
  using Llt = Eigen::SimplicialLLT<Eigen::SparseMatrix<double>, Eigen::Lower, Eigen::AMDOrdering<int>>;

  Vector cg(const Vector& b) const {
    const double bnorm = b.norm();
    Vector x = Vector::Zero(b.size());
    if (bnorm == 0.0) return x;
    Vector r = b;
    Vector z = inv_diag_.cwiseProduct(r);
    Vector p = z;
    double rz = r.dot(z);
    const int cap = max_iterations_ > 0 ? max_iterations_ : std::max(1000, 10 * static_cast<int>(b.size()));
    for (int it = 0; it < cap; ++it) {
      const Vector ap = (*a_) * p;
      const double pap = p.dot(ap);
      if (!(pap > 0.0)) throw Error(ErrorKind::not_spd, "cg met a direction of nonpositive curvature");
      const double alpha = rz / pap;
      x += alpha * p;
      r -= alpha * ap;
      if (r.norm() <= tol_ * bnorm) return x;
      z = inv_diag_.cwiseProduct(r);
      const double rz_next = r.dot(z);
      p = z + (rz_next / rz) * p;
      rz = rz_next;
    }
    throw NoConvergence(cap, r.norm() / bnorm);
  }

  const SparseMatrix* a_;
  SolveMethod method_;
  double tol_;
  int max_iterations_;
  std::unique_ptr<Llt> llt_;
  Vector inv_diag_;
};

inline Vector solve_spd(const SparseOperator& a, const Vector& b, SolveMethod method = SolveMethod::direct,
                        double tol = 1e-10) {
  return SpdSolver(a, method, tol).solve(b);
}

/// Fine-scale Galerkin system and its solution: the reference every multiscale
/// run is compared against.
struct FineProblem {
  AssembledSystem system;
  Vector rhs;
  Vector solution;
};

/// Direct Cholesky up to 200 elements per side, cg beyond.
inline SolveMethod default_method(const NestedPair& pair) {
  return pair.fine.elements_per_side() <= 200 ? SolveMethod::direct : SolveMethod::cg;
}

inline FineProblem reference_solve(const NestedPair& pair, const CoefficientField& field, OperatorKind kind,
                                   const Source& f, std::optional<SolveMethod> method = std::nullopt) {
  FineProblem fp;
  fp.system = assemble(pair, field, kind);
  fp.rhs = load_vector(pair, kind, f);
  fp.solution = solve_spd(fp.system.stiffness, fp.rhs, method.value_or(default_method(pair)));
  return fp;
}

inline double energy_norm(const SparseOperator& a, const Vector& v) {
  return std::sqrt(std::max(0.0, v.dot(a.matrix * v)));
}

inline double l2_norm(const SparseOperator& m, const Vector& v) {
  return std::sqrt(std::max(0.0, v.dot(m.matrix * v)));
}

struct RelativeErrors {
  double energy = 0.0;
  double l2 = 0.0;
};

inline RelativeErrors relative_errors(const Vector& u_ref, const Vector& u_ms, const SparseOperator& a,
                                      const SparseOperator& m) {
  const Vector d = u_ref - u_ms;
  const double ea = energy_norm(a, u_ref), em = l2_norm(m, u_ref);
  return {ea > 0 ? energy_norm(a, d) / ea : energy_norm(a, d), em > 0 ? l2_norm(m, d) / em : l2_norm(m, d)};
}

/// Default right-hand sides: sin(pi x) sin(pi y), plus a unit vertical load for elasticity.
inline Source default_source(OperatorKind kind) {
  if (kind == OperatorKind::elasticity)
    return [](double x, double y) {
      return std::array<double, 2>{std::sin(M_PI * x) * std::sin(M_PI * y), 1.0};
    };
  return [](double x, double y) { return std::array<double, 2>{std::sin(M_PI * x) * std::sin(M_PI * y), 0.0}; };
}

}  // namespace lsi
