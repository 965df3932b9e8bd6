#pragma once

// Spectral oracles for the local inverse operators: dense and Lanczos eigenpairs
// of the pencil M v = lambda A v, standard subspace iteration, Arnoldi with
// Rayleigh-Ritz extraction, principal angles, the interpolation bound and rate
// tables for LSSI/LKSI.

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "lsi/errors.hpp"
#include "lsi/fem.hpp"
#include "lsi/grid.hpp"
#include "lsi/localsolve.hpp"
#include "lsi/msbasis.hpp"

namespace lsi {

/// Leading eigenpairs of M v = lambda A v, lambda descending, V^T A V = I.
struct EigPairs {
  Vector values;
  Matrix vectors;

  [[nodiscard]] int count() const noexcept { return static_cast<int>(values.size()); }

  /// The same eigenvectors scaled to unit L^2 norm (v^T M v = 1).
  [[nodiscard]] Matrix l2_normalized() const {
    Matrix out = vectors;
    for (int j = 0; j < count(); ++j) out.col(j) /= std::sqrt(values(j));
    return out;
  }

  /// max_j ||M v_j - lambda_j A v_j|| / ||M v_j||.
  [[nodiscard]] double max_residual(const SparseMatrix& a, const SparseMatrix& m) const {
    double worst = 0.0;
    for (int j = 0; j < count(); ++j) {
      const Vector mv = m * vectors.col(j);
      const Vector r = mv - values(j) * (a * vectors.col(j));
      worst = std::max(worst, r.norm() / std::max(mv.norm(), std::numeric_limits<double>::min()));
    }
    return worst;
  }
};

struct EigOptions {
  int cap = 4000;           // largest dimension for the dense path
  bool iterative = false;   // use Lanczos when the dimension exceeds the cap
  int krylov_dim = 0;       // Lanczos subspace size; 0 picks max(4 L, L + 40)
};

namespace detail {

/// Dense Cholesky reduction: A = R^T R, C = R^{-T} M R^{-1}, C w = lambda w, v = R^{-1} w.
inline EigPairs dense_pencil(const Matrix& a, const Matrix& m, int count) {
  const Eigen::LLT<Matrix> llt(a);
  if (llt.info() != Eigen::Success) throw Error(ErrorKind::not_spd, "stiffness is not SPD");
  const Matrix lower = llt.matrixL();
  Matrix c = lower.triangularView<Eigen::Lower>().solve(m);
  c = lower.triangularView<Eigen::Lower>().solve(Matrix(c.transpose())).transpose();
  c = 0.5 * (c + c.transpose()).eval();
  const Eigen::SelfAdjointEigenSolver<Matrix> es(c);
  if (es.info() != Eigen::Success) throw Error(ErrorKind::no_convergence, "dense eigensolver failed");
  const int n = static_cast<int>(a.rows());
  count = std::min(count, n);
  EigPairs out;
  out.values.resize(count);
  Matrix w(n, count);
  for (int j = 0; j < count; ++j) {
    out.values(j) = std::max(0.0, es.eigenvalues()(n - 1 - j));
    w.col(j) = es.eigenvectors().col(n - 1 - j);
  }
  out.vectors = lower.transpose().triangularView<Eigen::Upper>().solve(w);
  return out;
}

}  // namespace detail

using LinearOp = std::function<Matrix(const Matrix&)>;

/// B = A^{-1} M on a patch, the discrete local inverse operator.
inline LinearOp local_inverse_op(const PatchSystem& sys) {
  return [&sys](const Matrix& x) { return apply_local_inverse(sys, x); };
}

/// Arnoldi output. V has orthonormal columns in the chosen inner product and
/// H is (k+1) x k upper Hessenberg with op V_k = V_{k+1} H.
struct ArnoldiResult {
  Matrix basis;
  Matrix hessenberg;
  bool breakdown = false;
  std::optional<int> breakdown_step;  // j with h_{j+1,j} = 0, 1-based

  [[nodiscard]] int steps() const noexcept { return static_cast<int>(hessenberg.cols()); }

  /// Largest |h_ij| outside the tridiagonal band relative to max |h|.
  [[nodiscard]] double tridiagonal_defect() const {
    double off = 0.0, scale = 0.0;
    for (int j = 0; j < hessenberg.cols(); ++j)
      for (int i = 0; i < hessenberg.rows(); ++i) {
        scale = std::max(scale, std::abs(hessenberg(i, j)));
        if (i < j - 1) off = std::max(off, std::abs(hessenberg(i, j)));
      }
    return scale > 0 ? off / scale : 0.0;
  }

  void throw_on_breakdown() const {
    if (breakdown)
      throw Error(ErrorKind::breakdown, "Krylov space became invariant at step " + std::to_string(*breakdown_step));
  }
};

inline constexpr double arnoldi_breakdown_tol = 1e-12;

/// Arnoldi process for op with starting vector x1, at most l steps, orthogonal
/// in the inner product of `inner` (Euclidean when null). Gram-Schmidt is
/// repeated once per step.
inline ArnoldiResult arnoldi(const LinearOp& op, const Vector& x1, int l, const SparseMatrix* inner = nullptr) {
  require(l >= 1, ErrorKind::invalid_argument, "arnoldi needs l >= 1");
  const auto ip = [inner](const Vector& x, const Vector& y) { return inner ? x.dot(*inner * y) : x.dot(y); };
  const int n = static_cast<int>(x1.size());
  const double n1 = std::sqrt(ip(x1, x1));
  require(n1 > 0.0, ErrorKind::invalid_argument, "arnoldi start vector is zero");
  Matrix v(n, l + 1);
  Matrix h = Matrix::Zero(l + 1, l);
  v.col(0) = x1 / n1;
  ArnoldiResult out;
  int done = 0;
  for (int j = 0; j < l; ++j) {
    Vector w = op(Matrix(v.col(j))).col(0);
    const double wnorm = std::sqrt(ip(w, w));
    for (int pass = 0; pass < 2; ++pass)
      for (int i = 0; i <= j; ++i) {
        const double c = ip(w, v.col(i));
        h(i, j) += c;
        w -= c * v.col(i);
      }
    const double next = std::sqrt(ip(w, w));
    h(j + 1, j) = next;
    done = j + 1;
    if (!(next > arnoldi_breakdown_tol * std::max(wnorm, std::numeric_limits<double>::min()))) {
      h(j + 1, j) = 0.0;
      out.breakdown = true;
      out.breakdown_step = j + 1;
      break;
    }
    v.col(j + 1) = w / next;
  }
  out.basis = v.leftCols(out.breakdown ? done : done + 1);
  out.hessenberg = h.topLeftCorner(done + 1, done);
  return out;
}

struct RitzPairs {
  Vector values;  // descending
  Matrix vectors;
};

/// Rayleigh-Ritz on the square part of the Hessenberg matrix. With a self-adjoint
/// op in the chosen inner product the symmetric part is used.
inline RitzPairs ritz(const ArnoldiResult& ar) {
  const int k = ar.steps();
  Matrix hk = ar.hessenberg.topLeftCorner(k, k);
  hk = 0.5 * (hk + hk.transpose()).eval();
  const Eigen::SelfAdjointEigenSolver<Matrix> es(hk);
  RitzPairs out;
  out.values = es.eigenvalues().reverse();
  out.vectors = ar.basis.leftCols(k) * es.eigenvectors().rowwise().reverse();
  return out;
}

/// Leading `count` eigenpairs of the patch pencil.
inline EigPairs local_eig(const SparseMatrix& a, const SparseMatrix& m, int count, EigOptions options = {}) {
  const int n = static_cast<int>(a.rows());
  require(count >= 1, ErrorKind::invalid_argument, "eigenpair count must be >= 1");
  if (n <= options.cap) return detail::dense_pencil(Matrix(a), Matrix(m), count);
  if (!options.iterative)
    throw Error(ErrorKind::cap_exceeded, std::to_string(n) + " DOFs exceed the dense eigensolver cap " +
                                             std::to_string(options.cap) + "; enable the Lanczos path");
  using Llt = Eigen::SimplicialLLT<Eigen::SparseMatrix<double>, Eigen::Lower, Eigen::AMDOrdering<int>>;
  Llt llt{Eigen::SparseMatrix<double>(a)};
  if (llt.info() != Eigen::Success) throw Error(ErrorKind::not_spd, "stiffness is not SPD");
  const LinearOp op = [&](const Matrix& x) { return Matrix(llt.solve(Matrix(m * x))); };
  const int kdim = std::min(n, options.krylov_dim > 0 ? options.krylov_dim : std::max(4 * count, count + 40));
  const auto ar = arnoldi(op, Vector::Ones(n), kdim, &m);
  const auto rp = ritz(ar);
  count = std::min(count, static_cast<int>(rp.values.size()));
  EigPairs out;
  out.values = rp.values.head(count);
  out.vectors = rp.vectors.leftCols(count);
  for (int j = 0; j < count; ++j) out.vectors.col(j) /= std::sqrt(out.vectors.col(j).dot(a * out.vectors.col(j)));
  return out;
}

inline EigPairs local_eig(const PatchSystem& sys, int count, EigOptions options = {}) {
  return local_eig(sys.stiffness().matrix, sys.mass().matrix, count, options);
}

/// Standard subspace iteration: X <- op(X), then QR re-orthonormalization, `steps` times.
inline Matrix subspace_iterate(const LinearOp& op, const Matrix& x0, int steps) {
  require(steps >= 0, ErrorKind::invalid_argument, "steps must be >= 0");
  Matrix x = x0;
  for (int s = 0; s < steps; ++s) {
    const Eigen::HouseholderQR<Matrix> qr(op(x));
    x = qr.householderQ() * Matrix::Identity(x.rows(), x.cols());
  }
  return x;
}

enum class InnerProduct { euclidean, l2, energy };

constexpr std::string_view to_string(InnerProduct ip) noexcept {
  switch (ip) {
    case InnerProduct::euclidean: return "euclidean";
    case InnerProduct::l2: return "l2";
    case InnerProduct::energy: return "energy";
  }
  return "?";
}

struct AngleReport {
  Vector angles;  // ascending, in [0, pi/2]
  InnerProduct inner = InnerProduct::euclidean;
  int dim_u = 0;
  int dim_v = 0;

  [[nodiscard]] double max() const { return angles.size() ? angles.maxCoeff() : 0.0; }
  [[nodiscard]] double min() const { return angles.size() ? angles.minCoeff() : 0.0; }
};

inline constexpr double angle_rank_tol = 1e-12;

/// Principal angles between span(U) and span(V) in the inner product of g
/// (Euclidean when null). Cosines come from the singular values of the
/// cross-Gram matrix; angles below pi/4 are recomputed from sines of the
/// residual block, which keeps tiny angles accurate.
inline AngleReport principal_angles(const Matrix& u, const Matrix& v, const SparseMatrix* g = nullptr,
                                    InnerProduct tag = InnerProduct::euclidean) {
  require(u.rows() == v.rows(), ErrorKind::invalid_argument, "subspaces live in different spaces");
  const SparseMatrix id = g ? SparseMatrix() : [&] {
    SparseMatrix e(u.rows(), u.rows());
    e.setIdentity();
    return e;
  }();
  const SparseMatrix& gm = g ? *g : id;
  Matrix qu = m_orthonormalize(gm, u, angle_rank_tol).q;
  Matrix qv = m_orthonormalize(gm, v, angle_rank_tol).q;
  if (qu.cols() < qv.cols()) std::swap(qu, qv);
  AngleReport rep;
  rep.inner = tag;
  rep.dim_u = static_cast<int>(qu.cols());
  rep.dim_v = static_cast<int>(qv.cols());
  const int k = rep.dim_v;
  rep.angles = Vector::Zero(k);
  if (k == 0) return rep;
  const Matrix gqv = gm * qv;
  const Matrix cross = qu.transpose() * gqv;
  const Eigen::JacobiSVD<Matrix> svd(cross);
  Vector cosines = svd.singularValues();  // descending, so angles ascend
  const Matrix resid = qv - qu * cross;
  Matrix rg = resid.transpose() * (gm * resid);
  rg = 0.5 * (rg + rg.transpose()).eval();
  const Eigen::SelfAdjointEigenSolver<Matrix> es(rg, Eigen::EigenvaluesOnly);
  const Vector sines2 = es.eigenvalues();  // ascending
  for (int i = 0; i < k; ++i) {
    const double c = std::clamp(i < cosines.size() ? cosines(i) : 0.0, 0.0, 1.0);
    double angle = std::acos(c);
    if (angle < std::numbers::pi / 4) angle = std::asin(std::clamp(std::sqrt(std::max(0.0, sines2(i))), 0.0, 1.0));
    rep.angles(i) = angle;
  }
  std::sort(rep.angles.begin(), rep.angles.end());
  return rep;
}

/// Both sides of the interpolation bound
///   ||u - I_eig u||_A <= sqrt(lambda^{L+1}) sum_i ||L chi_i u||_{L^2},
/// with L chi_i u realized as M^{-1} A (chi_i u) on the patch.
struct InterpBound {
  double lhs = 0.0;
  double rhs = 0.0;
  double lambda_next = 0.0;  // max_i lambda_i^{L_i+1}

  [[nodiscard]] bool holds() const noexcept { return lhs <= rhs; }
};

inline InterpBound check_interp_bound(const LocalProblems& problems, const PartitionOfUnity& pou,
                                      const std::vector<int>& counts, const SparseOperator& a_global,
                                      const Vector& u, EigOptions options = {}) {
  const auto& pair = problems.pair();
  require(counts.size() == problems.size(), ErrorKind::invalid_argument, "one eigenpair count per patch required");
  require(pou.weights.size() == problems.size(), ErrorKind::invalid_argument, "partition of unity does not match");
  require(u.size() == a_global.dimension(), ErrorKind::invalid_argument, "u does not match the fine operator");
  const int bs = block_size(problems.kind());
  Vector interp = Vector::Zero(u.size());
  std::vector<double> lambda_next(problems.size()), local_norm(problems.size());
  for (std::size_t i = 0; i < problems.size(); ++i) {
    const auto& sys = problems[i];
    const auto& patch = sys.patch();
    const auto& dofs = sys.global_dofs();
    Vector w = Vector::Zero(sys.dimension());
    for (std::size_t k = 0; k < patch.closed_nodes.size(); ++k) {
      const int l = patch.local_index(pair.fine, patch.closed_nodes[k]);
      if (l < 0) continue;
      for (int c = 0; c < bs; ++c) {
        const int d = bs * l + c;
        w(d) = pou.weights[i][k] * u(dofs[static_cast<std::size_t>(d)]);
      }
    }
    const int li = counts[i];
    require(li >= 0 && li < sys.dimension(), ErrorKind::invalid_argument, "eigenpair count out of range");
    const auto eig = local_eig(sys, li + 1, options);
    lambda_next[i] = eig.values(li);
    const Matrix phi = eig.l2_normalized();
    const Vector mw = sys.mass().matrix * w;
    for (int j = 0; j < li; ++j) {
      const double coef = phi.col(j).dot(mw);
      for (int d = 0; d < sys.dimension(); ++d) interp(dofs[static_cast<std::size_t>(d)]) += coef * phi(d, j);
    }
    const Vector aw = sys.stiffness().matrix * w;
    Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> mllt{Eigen::SparseMatrix<double>(sys.mass().matrix)};
    const Vector lw = mllt.solve(aw);
    local_norm[i] = std::sqrt(std::max(0.0, aw.dot(lw)));
  }
  InterpBound out;
  out.lambda_next = *std::max_element(lambda_next.begin(), lambda_next.end());
  double sum = 0.0;
  for (double s : local_norm) sum += s;
  out.rhs = std::sqrt(out.lambda_next) * sum;
  out.lhs = energy_norm(a_global, Vector(u - interp));
  return out;
}

/// Per-round convergence record of one patch.
struct RateRow {
  int round = 0;
  double lssi_angle = 0.0;              // max angle(V_S^{i,n}, leading eigenspace)
  double lssi_envelope = 0.0;           // (lambda^{L+1} / lambda^L)^n
  std::vector<double> lksi_sines;       // sin angle(phi^j, V_K^{i,n}), j = 1..L
  std::vector<double> lksi_envelopes;   // alpha_j / (1 + 4 gamma_j)^(n - j)
};

struct RateReport {
  Vector eigenvalues;  // leading L + 1
  double gap = 0.0;    // lambda^{L+1} / lambda^L
  std::vector<RateRow> rows;
  bool clustered = false;
  std::optional<double> fitted_rate;  // exp(slope) of log(angle) vs round
  std::vector<std::string> notes;
};

inline constexpr double cluster_tol = 1e-8;
inline constexpr double angle_floor = 1e-12;

/// Least-squares slope of log(y) against x, exponentiated.
inline std::optional<double> loglinear_rate(const std::vector<double>& x, const std::vector<double>& y) {
  std::vector<double> xs, ys;
  for (std::size_t k = 0; k < x.size(); ++k)
    if (y[k] > angle_floor) {
      xs.push_back(x[k]);
      ys.push_back(std::log(y[k]));
    }
  if (xs.size() < 2) return std::nullopt;
  const double n = static_cast<double>(xs.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    sx += xs[k];
    sy += ys[k];
    sxx += xs[k] * xs[k];
    sxy += xs[k] * ys[k];
  }
  const double denom = n * sxx - sx * sx;
  if (!(std::abs(denom) > 0)) return std::nullopt;
  return std::exp((n * sxy - sx * sy) / denom);
}

/// Runs n_max LSSI rounds from the L seed constraints (and one LKSI chain from the
/// first seed) on one patch and tabulates the angles to the leading eigenspace
/// against the predicted envelopes.
inline RateReport rate_report(const PatchSystem& sys, const ConstraintSet& seeds, int n_max,
                              EigOptions options = {}) {
  require(n_max >= 1, ErrorKind::invalid_argument, "n_max must be >= 1");
  const int l = seeds.count();
  require(l >= 1 && l < sys.dimension(), ErrorKind::invalid_argument, "seed count out of range");
  const auto& m = sys.mass().matrix;
  const auto eig = local_eig(sys, l + 1, options);
  RateReport rep;
  rep.eigenvalues = eig.values;
  rep.gap = eig.values(l) / eig.values(l - 1);
  std::vector<double> gamma(static_cast<std::size_t>(l)), alpha(static_cast<std::size_t>(l), 1.0);
  for (int j = 0; j < l; ++j) {
    gamma[static_cast<std::size_t>(j)] = (eig.values(j) - eig.values(j + 1)) / eig.values(j + 1);
    if (gamma[static_cast<std::size_t>(j)] < cluster_tol) {
      rep.clustered = true;
      rep.notes.push_back("lambda_" + std::to_string(j + 1) + " and lambda_" + std::to_string(j + 2) +
                          " are clustered; envelope degenerate");
    }
    for (int k = 0; k < j; ++k) {
      const double d = eig.values(k) - eig.values(j);
      alpha[static_cast<std::size_t>(j)] *= d > 0 ? eig.values(k) / d : std::numeric_limits<double>::infinity();
    }
  }
  const Matrix leading = eig.vectors.leftCols(l);
  const Matrix phi_l2 = eig.l2_normalized();

  std::vector<int> targets(static_cast<std::size_t>(l));
  for (int k = 0; k < l; ++k) targets[static_cast<std::size_t>(k)] = k;
  Matrix current;
  Matrix krylov(sys.dimension(), 0);
  Vector psi;
  std::vector<double> xs, ys;
  for (int round = 1; round <= n_max; ++round) {
    current = solve_saddle(sys, round == 1 ? seeds : ConstraintSet::from_functions(sys, current), targets).phi;
    current = m_orthonormalize(m, current, 0.0).q;
    psi = solve_saddle(sys, round == 1 ? ConstraintSet{seeds.vectors.col(0)} : ConstraintSet::from_functions(sys, psi),
                       0)
              .phi;
    auto grown = m_orthonormalize(m, psi, krylov_breakdown_tol, &krylov);
    if (grown.dropped.empty()) krylov = std::move(grown.q);

    RateRow row;
    row.round = round;
    row.lssi_angle = principal_angles(current, leading, &m, InnerProduct::l2).max();
    row.lssi_envelope = std::pow(rep.gap, round);
    const Matrix proj = krylov * (krylov.transpose() * (m * phi_l2));
    for (int j = 0; j < l; ++j) {
      const Vector r = phi_l2.col(j) - proj.col(j);
      row.lksi_sines.push_back(std::sqrt(std::max(0.0, r.dot(m * r))));
      const double g = gamma[static_cast<std::size_t>(j)];
      row.lksi_envelopes.push_back(g < cluster_tol ? std::numeric_limits<double>::quiet_NaN()
                                                   : alpha[static_cast<std::size_t>(j)] /
                                                         std::pow(1.0 + 4.0 * g, round - (j + 1)));
    }
    rep.rows.push_back(row);
    xs.push_back(round);
    ys.push_back(row.lssi_angle);
  }
  if (n_max == 1) {
    rep.notes.push_back("single round, no fit");
  } else if (!rep.clustered) {
    const std::size_t skip = xs.size() / 3;
    rep.fitted_rate = loglinear_rate(std::vector<double>(xs.begin() + static_cast<long>(skip), xs.end()),
                                     std::vector<double>(ys.begin() + static_cast<long>(skip), ys.end()));
  }
  return rep;
}

}  // namespace lsi
