#pragma once

// Structured quadrilateral meshes on the unit square, coarse/fine nesting,
// oversampling patches and the partition of unity subordinate to them.

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdlib>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "lsi/errors.hpp"

namespace lsi {

/// Uniform n x n grid of unit-square elements. Nodes are numbered
/// lexicographically with x fastest, elements likewise.
class StructuredMesh {
 public:
  StructuredMesh() = default;
  explicit StructuredMesh(int n_per_side) : n_(n_per_side) {
    require(n_per_side >= 1, ErrorKind::invalid_argument, "mesh needs at least one element per side");
  }

  [[nodiscard]] int elements_per_side() const noexcept { return n_; }
  [[nodiscard]] int nodes_per_side() const noexcept { return n_ + 1; }
  [[nodiscard]] int node_count() const noexcept { return (n_ + 1) * (n_ + 1); }
  [[nodiscard]] int element_count() const noexcept { return n_ * n_; }
  [[nodiscard]] double h() const noexcept { return 1.0 / n_; }

  [[nodiscard]] int node(int i, int j) const noexcept { return j * (n_ + 1) + i; }
  [[nodiscard]] int element(int i, int j) const noexcept { return j * n_ + i; }
  [[nodiscard]] std::pair<int, int> node_ij(int node) const noexcept {
    return {node % (n_ + 1), node / (n_ + 1)};
  }
  [[nodiscard]] std::pair<int, int> element_ij(int e) const noexcept { return {e % n_, e / n_}; }

  [[nodiscard]] std::array<double, 2> coordinate(int node) const noexcept {
    auto [i, j] = node_ij(node);
    return {static_cast<double>(i) / n_, static_cast<double>(j) / n_};
  }

  /// Corner nodes, counter-clockwise from the lower-left corner.
  [[nodiscard]] std::array<int, 4> element_nodes(int e) const noexcept {
    auto [i, j] = element_ij(e);
    return {node(i, j), node(i + 1, j), node(i + 1, j + 1), node(i, j + 1)};
  }

  [[nodiscard]] bool is_boundary(int node) const noexcept {
    auto [i, j] = node_ij(node);
    return i == 0 || j == 0 || i == n_ || j == n_;
  }

  [[nodiscard]] int boundary_node_count() const noexcept {
    return n_ == 0 ? 0 : node_count() - (n_ - 1) * (n_ - 1);
  }

 private:
  int n_ = 1;
};

inline StructuredMesh build_mesh(int n_per_side) { return StructuredMesh(n_per_side); }

/// A coarse mesh T_H and a fine mesh T_h with T_h refining every coarse element
/// into ratio x ratio fine elements.
struct NestedPair {
  StructuredMesh coarse;
  StructuredMesh fine;
  int ratio = 1;

  [[nodiscard]] int coarse_count() const noexcept { return coarse.element_count(); }

  [[nodiscard]] int coarse_element_of(int fine_element) const noexcept {
    auto [i, j] = fine.element_ij(fine_element);
    return coarse.element(i / ratio, j / ratio);
  }

  [[nodiscard]] std::vector<int> fine_elements_of(int coarse_element) const {
    auto [ci, cj] = coarse.element_ij(coarse_element);
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(ratio) * ratio);
    for (int j = cj * ratio; j < (cj + 1) * ratio; ++j)
      for (int i = ci * ratio; i < (ci + 1) * ratio; ++i) out.push_back(fine.element(i, j));
    return out;
  }
};

inline NestedPair build_nested(int coarse_per_side, int fine_per_side) {
  require(coarse_per_side >= 1 && fine_per_side >= 1, ErrorKind::invalid_argument,
          "mesh sizes must be positive");
  require(fine_per_side % coarse_per_side == 0, ErrorKind::invalid_argument,
          "fine mesh (" + std::to_string(fine_per_side) + ") must refine coarse mesh (" +
              std::to_string(coarse_per_side) + ")");
  return NestedPair{StructuredMesh(coarse_per_side), StructuredMesh(fine_per_side),
                    fine_per_side / coarse_per_side};
}

/// Inclusive-exclusive index rectangle [x0, x1) x [y0, y1).
struct IndexBox {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  [[nodiscard]] int width() const noexcept { return x1 - x0; }
  [[nodiscard]] int height() const noexcept { return y1 - y0; }
  friend bool operator==(const IndexBox&, const IndexBox&) = default;
};

/// Oversampling block K_i^m and its discrete space V(omega_i).
///
/// The interior DOF list holds the fine nodes strictly inside the block; nodes on
/// the block boundary (including any part on the domain boundary) carry the
/// homogeneous Dirichlet condition and are dropped.
struct Patch {
  int center = 0;
  int layers = 0;
  IndexBox coarse_box;             // coarse element range
  IndexBox node_box;               // closed fine-node range, [x0, x1] x [y0, y1] stored as x1+1
  std::vector<int> coarse_elements;
  std::vector<int> closed_nodes;   // fine node ids, lexicographic
  std::vector<int> interior_nodes; // fine node ids, lexicographic

  [[nodiscard]] int interior_count() const noexcept { return static_cast<int>(interior_nodes.size()); }

  /// Position of a fine node in interior_nodes, or -1.
  [[nodiscard]] int local_index(const StructuredMesh& fine, int node) const noexcept {
    auto [i, j] = fine.node_ij(node);
    const int ix0 = node_box.x0, iy0 = node_box.y0;
    const int ix1 = node_box.x1 - 1, iy1 = node_box.y1 - 1;
    if (i <= ix0 || i >= ix1 || j <= iy0 || j >= iy1) return -1;
    return (i - ix0 - 1) + (j - iy0 - 1) * (ix1 - ix0 - 1);
  }

  /// Fine elements covered by the block, ascending.
  [[nodiscard]] std::vector<int> fine_elements(const NestedPair& pair) const {
    std::vector<int> out;
    const int r = pair.ratio;
    out.reserve(static_cast<std::size_t>(coarse_box.width()) * coarse_box.height() * r * r);
    for (int j = coarse_box.y0 * r; j < coarse_box.y1 * r; ++j)
      for (int i = coarse_box.x0 * r; i < coarse_box.x1 * r; ++i) out.push_back(pair.fine.element(i, j));
    return out;
  }
};

namespace detail {

// One round of K^m = int( U { T : T cap closure(K^{m-1}) != empty } ). Two closed
// unit squares on the lattice intersect iff their indices differ by at most one
// in each direction, so diagonal neighbours are included.
inline std::set<int> grow_once(const StructuredMesh& coarse, const std::set<int>& current) {
  std::set<int> next;
  for (int t = 0; t < coarse.element_count(); ++t) {
    auto [ti, tj] = coarse.element_ij(t);
    for (int s : current) {
      auto [si, sj] = coarse.element_ij(s);
      if (std::abs(ti - si) <= 1 && std::abs(tj - sj) <= 1) {
        next.insert(t);
        break;
      }
    }
  }
  return next;
}

}  // namespace detail

inline Patch build_patch(const NestedPair& pair, int center, int layers) {
  require(center >= 0 && center < pair.coarse_count(), ErrorKind::invalid_argument,
          "coarse element index " + std::to_string(center) + " out of range");
  require(layers >= 0, ErrorKind::invalid_argument, "layer count must be nonnegative");

  std::set<int> block{center};
  for (int round = 0; round < layers; ++round) {
    auto grown = detail::grow_once(pair.coarse, block);
    if (grown == block) break;
    block = std::move(grown);
  }

  Patch patch;
  patch.center = center;
  patch.layers = layers;
  patch.coarse_elements.assign(block.begin(), block.end());

  IndexBox box{pair.coarse.elements_per_side(), pair.coarse.elements_per_side(), 0, 0};
  for (int e : patch.coarse_elements) {
    auto [i, j] = pair.coarse.element_ij(e);
    box.x0 = std::min(box.x0, i);
    box.y0 = std::min(box.y0, j);
    box.x1 = std::max(box.x1, i + 1);
    box.y1 = std::max(box.y1, j + 1);
  }
  // Growth from a single element on a tensor grid always yields a full rectangle.
  require(static_cast<int>(patch.coarse_elements.size()) == box.width() * box.height(),
          ErrorKind::invalid_argument, "oversampling block is not rectangular");
  patch.coarse_box = box;

  const int r = pair.ratio;
  patch.node_box = IndexBox{box.x0 * r, box.y0 * r, box.x1 * r + 1, box.y1 * r + 1};
  for (int j = patch.node_box.y0; j < patch.node_box.y1; ++j) {
    for (int i = patch.node_box.x0; i < patch.node_box.x1; ++i) {
      const int node = pair.fine.node(i, j);
      patch.closed_nodes.push_back(node);
      const bool inside = i > patch.node_box.x0 && i < patch.node_box.x1 - 1 && j > patch.node_box.y0 &&
                          j < patch.node_box.y1 - 1;
      if (inside && !pair.fine.is_boundary(node)) patch.interior_nodes.push_back(node);
    }
  }
  if (patch.interior_nodes.empty())
    throw Error(ErrorKind::patch_empty_interior,
                "patch " + std::to_string(center) + " with m=" + std::to_string(layers) +
                    " has no interior fine nodes");
  return patch;
}

inline std::vector<Patch> build_all_patches(const NestedPair& pair, int layers) {
  std::vector<Patch> patches;
  patches.reserve(static_cast<std::size_t>(pair.coarse_count()));
  for (int i = 0; i < pair.coarse_count(); ++i) patches.push_back(build_patch(pair, i, layers));
  return patches;
}

/// chi_i sampled at the closed nodes of patch i (same order as Patch::closed_nodes).
struct PartitionOfUnity {
  std::vector<std::vector<double>> weights;

  /// Nodal sum over all patches; 1 everywhere for a valid partition.
  [[nodiscard]] std::vector<double> nodal_sum(const StructuredMesh& fine,
                                              const std::vector<Patch>& patches) const {
    std::vector<double> sum(static_cast<std::size_t>(fine.node_count()), 0.0);
    for (std::size_t p = 0; p < patches.size(); ++p)
      for (std::size_t k = 0; k < patches[p].closed_nodes.size(); ++k)
        sum[static_cast<std::size_t>(patches[p].closed_nodes[k])] += weights[p][k];
    return sum;
  }
};

enum class BumpKind { tent };

namespace detail {

// 1D tent that vanishes on cut sides of a patch. Sides lying on the domain
// boundary are not cuts, so the bump stays positive up to them.
inline double tent(int i, int lo, int hi, int n) {
  if (i < lo || i > hi) return 0.0;
  const bool cut_lo = lo > 0;
  const bool cut_hi = hi < n;
  if (!cut_lo && !cut_hi) return 1.0;
  if (!cut_lo) return static_cast<double>(hi - i);
  if (!cut_hi) return static_cast<double>(i - lo);
  return static_cast<double>(std::min(i - lo, hi - i));
}

}  // namespace detail

/// Shepard-normalized tensor tent bumps: chi_i = d_i / sum_j d_j.
inline PartitionOfUnity build_pou(const NestedPair& pair, const std::vector<Patch>& patches,
                                  BumpKind kind = BumpKind::tent) {
  (void)kind;
  const auto& fine = pair.fine;
  const int n = fine.elements_per_side();
  PartitionOfUnity pou;
  pou.weights.resize(patches.size());
  std::vector<double> total(static_cast<std::size_t>(fine.node_count()), 0.0);
  for (std::size_t p = 0; p < patches.size(); ++p) {
    const auto& box = patches[p].node_box;
    auto& w = pou.weights[p];
    w.resize(patches[p].closed_nodes.size());
    for (std::size_t k = 0; k < w.size(); ++k) {
      auto [i, j] = fine.node_ij(patches[p].closed_nodes[k]);
      w[k] = detail::tent(i, box.x0, box.x1 - 1, n) * detail::tent(j, box.y0, box.y1 - 1, n);
      total[static_cast<std::size_t>(patches[p].closed_nodes[k])] += w[k];
    }
  }
  for (int node = 0; node < fine.node_count(); ++node) {
    if (!(total[static_cast<std::size_t>(node)] > 0.0)) {
      auto [i, j] = fine.node_ij(node);
      throw Error(ErrorKind::cover_gap, "fine node (" + std::to_string(i) + ", " + std::to_string(j) +
                                            ") is not covered by any patch bump");
    }
  }
  for (std::size_t p = 0; p < patches.size(); ++p)
    for (std::size_t k = 0; k < pou.weights[p].size(); ++k)
      pou.weights[p][k] /= total[static_cast<std::size_t>(patches[p].closed_nodes[k])];
  return pou;
}

}  // namespace lsi
