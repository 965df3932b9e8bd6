#pragma once

// Multiscale basis construction. Every method works patch by patch on the
// oversampling blocks K_i^m:
//   lod   one constrained-energy round against the element quantities of interest
//         of every coarse element inside the block;
//   lssi  n rounds of the localized standard subspace iteration, L_i constrained
//         solves per round, basis = last iterates;
//   lksi  n single-constraint solves per seed, basis = all iterates (a Krylov
//         space of the local inverse operator).

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <array>
#include <cmath>
#include <iomanip>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "lsi/errors.hpp"
#include "lsi/fem.hpp"
#include "lsi/grid.hpp"
#include "lsi/localsolve.hpp"
#include "lsi/parallel.hpp"

namespace lsi {

enum class Method { lod, lssi, lksi };

constexpr std::string_view to_string(Method m) noexcept {
  switch (m) {
    case Method::lod: return "lod";
    case Method::lssi: return "lssi";
    case Method::lksi: return "lksi";
  }
  return "?";
}

/// A method with its iteration count, written "lod", "lssi-2", "lksi-4".
struct MethodSpec {
  Method method = Method::lod;
  int iterations = 1;

  [[nodiscard]] std::string label() const {
    if (method == Method::lod) return "lod";
    return std::string(to_string(method)) + "-" + std::to_string(iterations);
  }

  static MethodSpec parse(const std::string& text) {
    if (text == "lod") return {Method::lod, 1};
    const auto dash = text.find('-');
    const std::string head = text.substr(0, dash);
    Method m;
    if (head == "lssi") m = Method::lssi;
    else if (head == "lksi") m = Method::lksi;
    else throw Error(ErrorKind::config_error, "unknown method '" + text + "'");
    if (dash == std::string::npos) throw Error(ErrorKind::config_error, "method '" + text + "' needs -n");
    int n = 0;
    try {
      std::size_t used = 0;
      n = std::stoi(text.substr(dash + 1), &used);
      if (used != text.size() - dash - 1) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw Error(ErrorKind::config_error, "bad iteration count in '" + text + "'");
    }
    if (n < 1) throw Error(ErrorKind::config_error, "iteration count must be >= 1 in '" + text + "'");
    return {m, n};
  }

  friend bool operator==(const MethodSpec&, const MethodSpec&) = default;
};

/// How a seed enters the first round of constraints.
///   element  q(v) = (s, v) over K_i for the function s that equals the seed on the
///            closed element and vanishes outside it;
///   nodal    q(v) = (s_h, v) for the finite element function s_h interpolating the
///            seed at the nodes strictly inside K_i.
enum class SeedPairing { element, nodal };

/// Seed functions of one coarse element. `values` samples them at the fine nodes
/// strictly inside K_i (so they lie in V(K_i) and in V(omega_i) for every m);
/// `closed_values` holds all (r+1)^2 nodes of the closed element, x fastest.
struct ElementSeeds {
  int element = 0;
  int bs = 1;
  std::vector<int> nodes;  // fine node ids
  Matrix values;           // (nodes * bs) x L, dofs interleaved per node
  Matrix closed_values;    // ((r+1)^2 * bs) x L

  [[nodiscard]] int count() const noexcept { return static_cast<int>(values.cols()); }

  /// Restriction into the local numbering of a patch system.
  [[nodiscard]] Matrix localize(const NestedPair& pair, const Patch& patch) const {
    Matrix out = Matrix::Zero(bs * patch.interior_count(), values.cols());
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      const int l = patch.local_index(pair.fine, nodes[k]);
      require(l >= 0, ErrorKind::invalid_argument, "seed support leaves the patch");
      for (int c = 0; c < bs; ++c) out.row(bs * l + c) = values.row(bs * static_cast<int>(k) + c);
    }
    return out;
  }

  /// Constraint vectors b_j with q_j(v) = b_j^T v on the interior DOFs of `patch`.
  [[nodiscard]] Matrix functionals(const NestedPair& pair, const Patch& patch, const SparseMatrix& mass,
                                   SeedPairing pairing) const {
    if (pairing == SeedPairing::nodal) return mass * localize(pair, patch);
    const int r = pair.ratio;
    auto [ci, cj] = pair.coarse.element_ij(element);
    const Matrix me = element_mass(pair.fine.h(), bs);
    Matrix out = Matrix::Zero(bs * patch.interior_count(), closed_values.cols());
    for (int e : pair.fine_elements_of(element)) {
      const auto en = pair.fine.element_nodes(e);
      std::array<int, 4> local{}, closed{};
      for (int a = 0; a < 4; ++a) {
        auto [i, j] = pair.fine.node_ij(en[static_cast<std::size_t>(a)]);
        local[static_cast<std::size_t>(a)] = patch.local_index(pair.fine, en[static_cast<std::size_t>(a)]);
        closed[static_cast<std::size_t>(a)] = (i - ci * r) + (j - cj * r) * (r + 1);
      }
      for (int a = 0; a < 4; ++a) {
        const int la = local[static_cast<std::size_t>(a)];
        if (la < 0) continue;
        for (int b = 0; b < 4; ++b)
          for (int c = 0; c < bs; ++c)
            out.row(bs * la + c) +=
                me(bs * a + c, bs * b + c) * closed_values.row(bs * closed[static_cast<std::size_t>(b)] + c);
      }
    }
    return out;
  }
};

namespace detail {

inline std::vector<int> element_interior_nodes(const NestedPair& pair, int element) {
  auto [ci, cj] = pair.coarse.element_ij(element);
  const int r = pair.ratio;
  std::vector<int> nodes;
  for (int j = cj * r + 1; j < (cj + 1) * r; ++j)
    for (int i = ci * r + 1; i < (ci + 1) * r; ++i) nodes.push_back(pair.fine.node(i, j));
  return nodes;
}

}  // namespace detail

/// The four coarse Q1 shape functions of K_i (eight for elasticity: each shape
/// on each displacement component).
inline ElementSeeds seed_bilinear(const NestedPair& pair, int element, OperatorKind kind) {
  ElementSeeds seeds;
  seeds.element = element;
  seeds.bs = block_size(kind);
  seeds.nodes = detail::element_interior_nodes(pair, element);
  const int bs = seeds.bs;
  seeds.values = Matrix::Zero(bs * static_cast<int>(seeds.nodes.size()), 4 * bs);
  auto [ci, cj] = pair.coarse.element_ij(element);
  const int r = pair.ratio;
  for (std::size_t k = 0; k < seeds.nodes.size(); ++k) {
    auto [i, j] = pair.fine.node_ij(seeds.nodes[k]);
    const double s = static_cast<double>(i - ci * r) / r, t = static_cast<double>(j - cj * r) / r;
    const auto shape = detail::q1_shapes(s, t);
    for (int a = 0; a < 4; ++a)
      for (int c = 0; c < bs; ++c)
        seeds.values(bs * static_cast<int>(k) + c, bs * a + c) = shape[static_cast<std::size_t>(a)];
  }
  seeds.closed_values = Matrix::Zero(bs * (r + 1) * (r + 1), 4 * bs);
  for (int j = 0; j <= r; ++j)
    for (int i = 0; i <= r; ++i) {
      const auto shape = detail::q1_shapes(static_cast<double>(i) / r, static_cast<double>(j) / r);
      for (int a = 0; a < 4; ++a)
        for (int c = 0; c < bs; ++c)
          seeds.closed_values(bs * (i + j * (r + 1)) + c, bs * a + c) = shape[static_cast<std::size_t>(a)];
    }
  return seeds;
}

/// Indicator of the interior of K_i: one vector for diffusion; for elasticity one
/// per component, or a single (1, 1) vector when `combine_components` is set.
inline ElementSeeds seed_constant(const NestedPair& pair, int element, OperatorKind kind,
                                  bool combine_components = false) {
  ElementSeeds seeds;
  seeds.element = element;
  seeds.bs = block_size(kind);
  seeds.nodes = detail::element_interior_nodes(pair, element);
  const int bs = seeds.bs;
  const int cols = (bs == 1 || combine_components) ? 1 : bs;
  seeds.values = Matrix::Zero(bs * static_cast<int>(seeds.nodes.size()), cols);
  for (std::size_t k = 0; k < seeds.nodes.size(); ++k)
    for (int c = 0; c < bs; ++c) seeds.values(bs * static_cast<int>(k) + c, cols == 1 ? 0 : c) = 1.0;
  const int closed = (pair.ratio + 1) * (pair.ratio + 1);
  seeds.closed_values = Matrix::Zero(bs * closed, cols);
  for (int k = 0; k < closed; ++k)
    for (int c = 0; c < bs; ++c) seeds.closed_values(bs * k + c, cols == 1 ? 0 : c) = 1.0;
  return seeds;
}

/// Factorized patch systems for every coarse element at a fixed layer count. All
/// methods of one run share them.
class LocalProblems {
 public:
  LocalProblems(const NestedPair& pair, const CoefficientField& field, OperatorKind kind, int layers,
                int threads = 1)
      : pair_(pair), kind_(kind), layers_(layers), threads_(threads) {
    systems_.resize(static_cast<std::size_t>(pair.coarse_count()));
    parallel_for(systems_.size(), threads, [&](std::size_t i) {
      systems_[i] = std::make_unique<PatchSystem>(pair, field, kind, build_patch(pair, static_cast<int>(i), layers));
    });
  }

  [[nodiscard]] const NestedPair& pair() const noexcept { return pair_; }
  [[nodiscard]] OperatorKind kind() const noexcept { return kind_; }
  [[nodiscard]] int layers() const noexcept { return layers_; }
  [[nodiscard]] int threads() const noexcept { return threads_; }
  [[nodiscard]] std::size_t size() const noexcept { return systems_.size(); }
  [[nodiscard]] const PatchSystem& operator[](std::size_t i) const { return *systems_[i]; }

 private:
  NestedPair pair_;
  OperatorKind kind_;
  int layers_;
  int threads_;
  std::vector<std::unique_ptr<PatchSystem>> systems_;
};

/// Basis vectors of one patch in its local numbering.
struct PatchBasis {
  int patch = 0;
  Matrix vectors;             // local dof x count, M-orthonormal
  std::vector<int> global_dofs;
  int local_problems = 0;     // saddle solves performed
  int rounds = 0;             // iterations completed
  std::optional<int> breakdown_round;

  [[nodiscard]] int count() const noexcept { return static_cast<int>(vectors.cols()); }
};

struct MsBasis {
  MethodSpec spec;
  std::vector<PatchBasis> patches;
  std::vector<std::string> events;

  [[nodiscard]] int dof() const {
    int total = 0;
    for (const auto& p : patches) total += p.count();
    return total;
  }
  [[nodiscard]] int local_problems() const {
    int total = 0;
    for (const auto& p : patches) total += p.local_problems;
    return total;
  }

  /// Column matrix Phi (global free DOFs x coarse DOFs), columns ordered by patch.
  [[nodiscard]] SparseMatrix matrix(int global_size) const {
    std::vector<Triplet> t;
    int col = 0;
    for (const auto& p : patches) {
      for (int k = 0; k < p.count(); ++k, ++col)
        for (int r = 0; r < p.vectors.rows(); ++r)
          if (p.vectors(r, k) != 0.0) t.emplace_back(p.global_dofs[static_cast<std::size_t>(r)], col, p.vectors(r, k));
    }
    SparseMatrix phi(global_size, col);
    phi.setFromTriplets(t.begin(), t.end());
    return phi;
  }

  /// Dense global column of one basis vector (diagnostics).
  [[nodiscard]] Vector global_vector(std::size_t patch, int k, int global_size) const {
    Vector v = Vector::Zero(global_size);
    const auto& p = patches[patch];
    for (int r = 0; r < p.vectors.rows(); ++r) v(p.global_dofs[static_cast<std::size_t>(r)]) = p.vectors(r, k);
    return v;
  }
};

/// Modified Gram-Schmidt (two passes) in the inner product of `m`. Returns the
/// orthonormal columns; columns whose residual falls below `drop_tol` times
/// their original norm are dropped and their indices reported.
struct Orthonormalized {
  Matrix q;
  std::vector<int> dropped;
};

inline Orthonormalized m_orthonormalize(const SparseMatrix& m, const Matrix& v, double drop_tol = 1e-10,
                                        const Matrix* prefix = nullptr) {
  const int start = prefix ? static_cast<int>(prefix->cols()) : 0;
  Matrix q(v.rows(), start + v.cols());
  Matrix mq(v.rows(), start + v.cols());
  if (prefix) {
    q.leftCols(start) = *prefix;
    mq.leftCols(start) = m * (*prefix);
  }
  int kept = start;
  Orthonormalized out;
  for (int j = 0; j < v.cols(); ++j) {
    Vector x = v.col(j);
    const double original = std::sqrt(std::max(0.0, x.dot(m * x)));
    for (int pass = 0; pass < 2; ++pass)
      for (int i = 0; i < kept; ++i) x -= mq.col(i).dot(x) * q.col(i);
    const Vector mx = m * x;
    const double norm = std::sqrt(std::max(0.0, x.dot(mx)));
    if (!(original > 0.0) || norm <= drop_tol * original) {
      out.dropped.push_back(j);
      continue;
    }
    q.col(kept) = x / norm;
    mq.col(kept) = mx / norm;
    ++kept;
  }
  out.q = q.leftCols(kept);
  return out;
}

/// Seeds for every coarse element.
using SeedRule = ElementSeeds (*)(const NestedPair&, int, OperatorKind);

inline std::vector<ElementSeeds> all_bilinear_seeds(const NestedPair& pair, OperatorKind kind) {
  std::vector<ElementSeeds> s;
  for (int i = 0; i < pair.coarse_count(); ++i) s.push_back(seed_bilinear(pair, i, kind));
  return s;
}

inline std::vector<ElementSeeds> all_constant_seeds(const NestedPair& pair, OperatorKind kind,
                                                    bool combine_components = false) {
  std::vector<ElementSeeds> s;
  for (int i = 0; i < pair.coarse_count(); ++i) s.push_back(seed_constant(pair, i, kind, combine_components));
  return s;
}

namespace detail {

inline Error with_context(const Error& e, Method m, int patch, int round) {
  return Error(e.kind(), std::string(to_string(m)) + " patch " + std::to_string(patch) + " round " +
                             std::to_string(round) + ": " + e.what());
}

}  // namespace detail

/// Raw LSSI iterates of one patch: returns phi^{n} (unnormalized, biorthogonal to
/// phi^{n-1} in L^2). `initial` holds the round-0 quantities of interest.
inline Matrix lssi_iterates(const PatchSystem& sys, const ConstraintSet& initial, int rounds, int* solves = nullptr) {
  std::vector<int> targets(static_cast<std::size_t>(initial.count()));
  for (int k = 0; k < initial.count(); ++k) targets[static_cast<std::size_t>(k)] = k;
  Matrix current;
  for (int round = 1; round <= rounds; ++round) {
    try {
      current = solve_saddle(sys, round == 1 ? initial : ConstraintSet::from_functions(sys, current), targets).phi;
    } catch (const Error& e) {
      throw detail::with_context(e, Method::lssi, sys.patch().center, round);
    }
    if (solves) *solves += static_cast<int>(targets.size());
  }
  return current;
}

inline Matrix lssi_iterates(const PatchSystem& sys, const Matrix& seeds, int rounds, int* solves = nullptr) {
  return lssi_iterates(sys, ConstraintSet::from_functions(sys, seeds), rounds, solves);
}

inline ConstraintSet seed_constraints(const LocalProblems& problems, const ElementSeeds& seeds, std::size_t i,
                                      SeedPairing pairing) {
  const auto& sys = problems[i];
  return {seeds.functionals(problems.pair(), sys.patch(), sys.mass().matrix, pairing)};
}

inline PatchBasis lssi_patch(const LocalProblems& problems, const ElementSeeds& seeds, std::size_t i, int n,
                             SeedPairing pairing = SeedPairing::element) {
  const auto& sys = problems[i];
  PatchBasis pb;
  pb.patch = static_cast<int>(i);
  pb.global_dofs = sys.global_dofs();
  const Matrix phi = lssi_iterates(sys, seed_constraints(problems, seeds, i, pairing), n, &pb.local_problems);
  auto ortho = m_orthonormalize(sys.mass().matrix, phi, 1e-13);
  if (!ortho.dropped.empty())
    throw Error(ErrorKind::dependent_constraints,
                "lssi patch " + std::to_string(i) + ": final iterates are linearly dependent");
  pb.vectors = std::move(ortho.q);
  pb.rounds = n;
  return pb;
}

/// LSSI-n: n rounds of L_i constrained solves per patch.
inline MsBasis build_lssi(const LocalProblems& problems, const std::vector<ElementSeeds>& seeds, int n,
                          SeedPairing pairing = SeedPairing::element) {
  require(n >= 1, ErrorKind::invalid_argument, "lssi needs n >= 1");
  MsBasis basis;
  basis.spec = {Method::lssi, n};
  basis.patches.resize(problems.size());
  parallel_for(problems.size(), problems.threads(),
               [&](std::size_t i) { basis.patches[i] = lssi_patch(problems, seeds[i], i, n, pairing); });
  return basis;
}

inline constexpr double krylov_breakdown_tol = 1e-10;

struct LksiOptions {
  bool include_seed = false;  // add the nodal seed psi^0 to the basis (Krylov-span diagnostics)
  SeedPairing pairing = SeedPairing::element;
};

inline PatchBasis lksi_patch(const LocalProblems& problems, const ElementSeeds& seeds, std::size_t i, int n,
                             LksiOptions options, std::vector<std::string>* events) {
  const auto& sys = problems[i];
  const auto& m = sys.mass().matrix;
  PatchBasis pb;
  pb.patch = static_cast<int>(i);
  pb.global_dofs = sys.global_dofs();
  const Matrix initial = seed_constraints(problems, seeds, i, options.pairing).vectors;
  const Matrix nodal = options.include_seed ? seeds.localize(problems.pair(), sys.patch()) : Matrix();
  Matrix q(sys.dimension(), 0);
  for (int chain = 0; chain < initial.cols(); ++chain) {
    if (options.include_seed) {
      auto o = m_orthonormalize(m, nodal.col(chain), krylov_breakdown_tol, &q);
      if (o.dropped.empty()) q = std::move(o.q);
    }
    Vector psi;
    for (int round = 1; round <= n; ++round) {
      try {
        const ConstraintSet c = round == 1 ? ConstraintSet{initial.col(chain)} : ConstraintSet::from_functions(sys, psi);
        psi = solve_saddle(sys, c, 0).phi;
      } catch (const Error& e) {
        throw detail::with_context(e, Method::lksi, static_cast<int>(i), round);
      }
      ++pb.local_problems;
      auto o = m_orthonormalize(m, psi, krylov_breakdown_tol, &q);
      if (!o.dropped.empty()) {
        pb.breakdown_round = round;
        if (events)
          events->push_back("lksi patch " + std::to_string(i) + " chain " + std::to_string(chain) +
                            ": Krylov breakdown at round " + std::to_string(round) + ", basis truncated");
        break;
      }
      q = std::move(o.q);
      pb.rounds = round;
    }
  }
  pb.vectors = std::move(q);
  return pb;
}

/// LKSI-n: per seed, n single-constraint solves; the basis collects psi^1..psi^n.
inline MsBasis build_lksi(const LocalProblems& problems, const std::vector<ElementSeeds>& seeds, int n,
                          LksiOptions options = {}) {
  require(n >= 1, ErrorKind::invalid_argument, "lksi needs n >= 1");
  MsBasis basis;
  basis.spec = {Method::lksi, n};
  basis.patches.resize(problems.size());
  std::vector<std::vector<std::string>> events(problems.size());
  parallel_for(problems.size(), problems.threads(), [&](std::size_t i) {
    basis.patches[i] = lksi_patch(problems, seeds[i], i, n, options, &events[i]);
  });
  for (auto& e : events) basis.events.insert(basis.events.end(), e.begin(), e.end());
  return basis;
}

inline PatchBasis lod_patch(const LocalProblems& problems, const std::vector<ElementSeeds>& seeds, std::size_t i,
                            SeedPairing pairing = SeedPairing::element) {
  const auto& sys = problems[i];
  const auto& patch = sys.patch();
  PatchBasis pb;
  pb.patch = static_cast<int>(i);
  pb.global_dofs = sys.global_dofs();
  int total = 0;
  for (int t : patch.coarse_elements) total += seeds[static_cast<std::size_t>(t)].count();
  Matrix functionals(sys.dimension(), total);
  std::vector<int> targets;
  int col = 0;
  for (int t : patch.coarse_elements) {
    const auto& s = seeds[static_cast<std::size_t>(t)];
    functionals.middleCols(col, s.count()) = s.functionals(problems.pair(), patch, sys.mass().matrix, pairing);
    if (t == static_cast<int>(i))
      for (int k = 0; k < s.count(); ++k) targets.push_back(col + k);
    col += s.count();
  }
  Matrix phi;
  try {
    phi = solve_saddle(sys, ConstraintSet{functionals}, targets).phi;
  } catch (const Error& e) {
    throw detail::with_context(e, Method::lod, static_cast<int>(i), 1);
  }
  pb.local_problems = static_cast<int>(targets.size());
  auto ortho = m_orthonormalize(sys.mass().matrix, phi, 1e-13);
  pb.vectors = std::move(ortho.q);
  pb.rounds = 1;
  return pb;
}

/// LOD baseline: one constrained round per patch; the constraints are the element
/// quantities of interest of every coarse element in the block, the Kronecker
/// targets those of K_i.
inline MsBasis build_lod(const LocalProblems& problems, const std::vector<ElementSeeds>& seeds,
                         SeedPairing pairing = SeedPairing::element) {
  MsBasis basis;
  basis.spec = {Method::lod, 1};
  basis.patches.resize(problems.size());
  parallel_for(problems.size(), problems.threads(),
               [&](std::size_t i) { basis.patches[i] = lod_patch(problems, seeds, i, pairing); });
  return basis;
}

struct BasisOptions {
  SeedPairing pairing = SeedPairing::element;
  bool combine_lksi_components = false;  // elasticity: one (1, 1) constant seed instead of one per component
};

/// Builds the basis for a method with the seeds the experiments use: bilinear
/// seeds for lod/lssi, the constant seed for lksi.
inline MsBasis build_basis(const LocalProblems& problems, const MethodSpec& spec, BasisOptions options = {}) {
  const auto& pair = problems.pair();
  switch (spec.method) {
    case Method::lod: return build_lod(problems, all_bilinear_seeds(pair, problems.kind()), options.pairing);
    case Method::lssi:
      return build_lssi(problems, all_bilinear_seeds(pair, problems.kind()), spec.iterations, options.pairing);
    case Method::lksi:
      return build_lksi(problems, all_constant_seeds(pair, problems.kind(), options.combine_lksi_components),
                        spec.iterations, LksiOptions{false, options.pairing});
  }
  throw Error(ErrorKind::invalid_argument, "unknown method");
}

/// Text dump, one block per basis vector:
///   vector <patch> <method> <round> <node x0> <node y0> <node x1> <node y1> <bs>
///   <values at the closed patch nodes, row-major, components interleaved>
inline void export_basis(std::ostream& os, const MsBasis& basis, const LocalProblems& problems) {
  os << std::setprecision(17);
  for (const auto& pb : basis.patches) {
    const auto& sys = problems[static_cast<std::size_t>(pb.patch)];
    const auto& box = sys.patch().node_box;
    const auto& layout = sys.layout();
    for (int k = 0; k < pb.count(); ++k) {
      os << "vector " << pb.patch << ' ' << basis.spec.label() << ' ' << pb.rounds << ' ' << box.x0 << ' ' << box.y0
         << ' ' << box.x1 - 1 << ' ' << box.y1 - 1 << ' ' << layout.bs << '\n';
      bool first = true;
      for (int j = box.y0; j < box.y1; ++j) {
        for (int i = box.x0; i < box.x1; ++i) {
          const int l = layout.node_index(i, j);
          for (int c = 0; c < layout.bs; ++c) {
            if (!first) os << ' ';
            first = false;
            os << (l < 0 ? 0.0 : pb.vectors(layout.bs * l + c, k));
          }
        }
      }
      os << '\n';
    }
  }
}

}  // namespace lsi
