#pragma once

// ASCII (P2) grayscale heatmaps. Rows are written top to bottom, so the first
// row holds the largest y.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "lsi/coeff.hpp"
#include "lsi/errors.hpp"
#include "lsi/fem.hpp"

namespace lsi {

/// Grid of doubles, x fastest, y = 0 first.
struct ScalarImage {
  int width = 0;
  int height = 0;
  std::vector<double> values;
};

/// Linear map of [min, max] onto 0..255; a constant image is all zeros.
inline void write_pgm(std::ostream& os, const ScalarImage& img) {
  require(img.width > 0 && img.height > 0 &&
              img.values.size() == static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height),
          ErrorKind::invalid_argument, "image size mismatch");
  const auto [lo_it, hi_it] = std::minmax_element(img.values.begin(), img.values.end());
  const double lo = *lo_it, span = *hi_it - *lo_it;
  os << "P2\n" << img.width << ' ' << img.height << "\n255\n";
  for (int j = img.height - 1; j >= 0; --j) {
    for (int i = 0; i < img.width; ++i) {
      const double v = img.values[static_cast<std::size_t>(j * img.width + i)];
      const int g = span > 0 ? static_cast<int>(std::lround(255.0 * (v - lo) / span)) : 0;
      os << std::clamp(g, 0, 255) << (i + 1 < img.width ? ' ' : '\n');
    }
  }
}

inline void save_pgm(const std::string& path, const ScalarImage& img) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorKind::invalid_argument, "cannot write '" + path + "'");
  write_pgm(os, img);
}

/// One pixel per fine element, log10 of the coefficient.
inline ScalarImage coefficient_image(const CoefficientField& field) {
  ScalarImage img{field.n(), field.n(), {}};
  img.values.reserve(field.values().size());
  for (double v : field.values()) img.values.push_back(std::log10(v));
  return img;
}

/// One pixel per fine node, boundary nodes zero; displacement magnitude for
/// elasticity.
inline ScalarImage solution_image(const NestedPair& pair, OperatorKind kind, const Vector& u) {
  const auto layout = global_layout(pair, kind);
  require(u.size() == layout.size(), ErrorKind::invalid_argument, "solution does not match the fine mesh");
  const int np = pair.fine.nodes_per_side();
  ScalarImage img{np, np, std::vector<double>(static_cast<std::size_t>(np) * static_cast<std::size_t>(np), 0.0)};
  for (int j = 0; j < np; ++j)
    for (int i = 0; i < np; ++i) {
      const int l = layout.node_index(i, j);
      if (l < 0) continue;
      double s = 0.0;
      for (int c = 0; c < layout.bs; ++c) s += u(layout.bs * l + c) * u(layout.bs * l + c);
      img.values[static_cast<std::size_t>(j * np + i)] = layout.bs == 1 ? u(l) : std::sqrt(s);
    }
  return img;
}

}  // namespace lsi
