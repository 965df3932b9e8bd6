#pragma once

// Piecewise-constant coefficient fields on the fine mesh: generators for
// scattered high-contrast inclusions and horizontal channels, and a plain text
// grid format for storing them.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "lsi/errors.hpp"
#include "lsi/grid.hpp"

namespace lsi {

/// One value per fine element, row-major from y = 0 upward. For elasticity the
/// same field supplies both Lame constants unless `mu_values` is filled.
class CoefficientField {
 public:
  CoefficientField() = default;
  CoefficientField(int n, std::vector<double> values) : n_(n), values_(std::move(values)) {
    require(n_ >= 1 && values_.size() == static_cast<std::size_t>(n_) * n_, ErrorKind::invalid_argument,
            "coefficient field needs n*n values");
    validate(values_);
  }

  static CoefficientField constant(int n, double value) {
    return CoefficientField(n, std::vector<double>(static_cast<std::size_t>(n) * n, value));
  }

  [[nodiscard]] int n() const noexcept { return n_; }
  [[nodiscard]] const std::vector<double>& values() const noexcept { return values_; }
  [[nodiscard]] double operator[](int element) const noexcept {
    return values_[static_cast<std::size_t>(element)];
  }
  [[nodiscard]] double at(int i, int j) const noexcept { return values_[static_cast<std::size_t>(j * n_ + i)]; }

  [[nodiscard]] double lambda(int element) const noexcept { return (*this)[element]; }
  [[nodiscard]] double mu(int element) const noexcept {
    return mu_values_.empty() ? (*this)[element] : mu_values_[static_cast<std::size_t>(element)];
  }
  void set_mu(std::vector<double> mu) {
    require(mu.size() == values_.size(), ErrorKind::invalid_argument, "mu field size mismatch");
    validate(mu);
    mu_values_ = std::move(mu);
  }

  [[nodiscard]] double min_value() const { return *std::min_element(values_.begin(), values_.end()); }
  [[nodiscard]] double max_value() const { return *std::max_element(values_.begin(), values_.end()); }
  [[nodiscard]] double contrast() const { return max_value() / min_value(); }

  friend bool operator==(const CoefficientField&, const CoefficientField&) = default;

 private:
  static void validate(const std::vector<double>& v) {
    for (double x : v)
      require(std::isfinite(x) && x > 0.0, ErrorKind::invalid_argument, "coefficient values must be positive");
  }

  int n_ = 0;
  std::vector<double> values_;
  std::vector<double> mu_values_;
};

namespace detail {

// Portable draws from the raw mt19937_64 stream (the engine sequence is fixed by
// the standard; the std distributions are not).
inline std::uint64_t draw_below(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % bound;
}

inline int draw_int(std::mt19937_64& rng, int lo, int hi) {
  return lo + static_cast<int>(draw_below(rng, static_cast<std::uint64_t>(hi - lo + 1)));
}

}  // namespace detail

/// Shape distribution of generated inclusions, in fine elements. Each placement
/// is a long thin channel with probability `channel_fraction`, otherwise a block.
struct InclusionShape {
  int min_length = 2;
  int max_length = 6;
  int min_width = 2;
  int max_width = 6;
  double channel_fraction = 0.2;  // share of placements drawn as thin channels
  int channel_min_length = 10;
  int channel_max_length = 30;
  int channel_width = 1;
};

/// Scatters high-valued blocks and channels on background 1 until `density` of
/// the fine elements carry value `contrast`. Orientation is random.
inline CoefficientField gen_inclusions(const NestedPair& pair, double density, double contrast,
                                       std::uint64_t seed, InclusionShape shape = {}) {
  require(density >= 0.0 && density < 1.0, ErrorKind::invalid_argument, "density must lie in [0, 1)");
  require(contrast >= 1.0, ErrorKind::invalid_argument, "contrast must be >= 1");
  require(shape.channel_fraction >= 0.0 && shape.channel_fraction <= 1.0, ErrorKind::invalid_argument,
          "channel fraction must lie in [0, 1]");
  const int n = pair.fine.elements_per_side();
  std::vector<double> v(static_cast<std::size_t>(n) * n, 1.0);
  const auto target = static_cast<std::size_t>(std::llround(density * n * n));
  std::vector<char> hit(v.size(), 0);
  std::size_t marked = 0;
  std::mt19937_64 rng(seed);
  const auto channel_cut = static_cast<std::uint64_t>(std::llround(shape.channel_fraction * 1000000.0));
  auto clamp_range = [n](int lo, int hi) { return std::pair{std::min(lo, n), std::min(std::max(lo, hi), n)}; };
  while (marked < target) {
    const bool channel = detail::draw_below(rng, 1000000) < channel_cut;
    auto [l0, l1] = channel ? clamp_range(shape.channel_min_length, shape.channel_max_length)
                            : clamp_range(shape.min_length, shape.max_length);
    auto [w0, w1] = channel ? clamp_range(shape.channel_width, shape.channel_width)
                            : clamp_range(shape.min_width, shape.max_width);
    int len = detail::draw_int(rng, l0, l1);
    int wid = detail::draw_int(rng, w0, w1);
    if (detail::draw_below(rng, 2) == 1) std::swap(len, wid);
    const int x0 = detail::draw_int(rng, 0, n - len);
    const int y0 = detail::draw_int(rng, 0, n - wid);
    for (int j = y0; j < y0 + wid && marked < target; ++j) {
      for (int i = x0; i < x0 + len && marked < target; ++i) {
        const auto cell = static_cast<std::size_t>(j * n + i);
        if (!hit[cell]) {
          hit[cell] = 1;
          v[cell] = contrast;
          ++marked;
        }
      }
    }
  }
  return CoefficientField(n, std::move(v));
}

struct ChannelSpec {
  int length = 2;       // in coarse elements
  int thickness = 1;    // in fine elements
  int count = 1;
  std::uint64_t seed = 0;
  double contrast = 1e4;
};

/// Horizontal channels of `length` coarse cells on background 1. Rows and
/// centres depend only on the seed and the count, so two specs differing only in
/// length produce fields that differ only on channel cells.
inline CoefficientField gen_channels(const NestedPair& pair, const ChannelSpec& spec) {
  require(spec.length >= 1 && spec.thickness >= 1 && spec.count >= 1, ErrorKind::invalid_argument,
          "channel length, thickness and count must be positive");
  require(spec.contrast >= 1.0, ErrorKind::invalid_argument, "contrast must be >= 1");
  const int n = pair.fine.elements_per_side();
  const int len = spec.length * pair.ratio;
  if (len > n)
    throw Error(ErrorKind::channel_overflow, "channel of " + std::to_string(spec.length) +
                                                 " coarse cells exceeds the domain");
  if (spec.thickness * spec.count > n)
    throw Error(ErrorKind::channel_overflow, "channels do not fit vertically");

  std::vector<double> v(static_cast<std::size_t>(n) * n, 1.0);
  std::mt19937_64 rng(spec.seed);
  // Rows are spread over equal horizontal bands, jittered inside each band.
  const int band = n / spec.count;
  for (int c = 0; c < spec.count; ++c) {
    const int slack = std::max(0, band - spec.thickness);
    const int lo = slack > 2 ? 1 : 0;
    const int y0 = c * band + detail::draw_int(rng, lo, std::max(lo, slack - lo));
    const int centre = detail::draw_int(rng, 0, n);
    const int x0 = std::clamp(centre - len / 2, 0, n - len);
    for (int j = y0; j < std::min(n, y0 + spec.thickness); ++j)
      for (int i = x0; i < x0 + len; ++i) v[static_cast<std::size_t>(j * n + i)] = spec.contrast;
  }
  return CoefficientField(n, std::move(v));
}

/// Text grid: "ncols nrows" then nrows lines of ncols values, y = 0 first.
inline void write_field(std::ostream& os, const CoefficientField& field) {
  const int n = field.n();
  os << n << ' ' << n << '\n';
  os << std::setprecision(17);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      if (i) os << ' ';
      os << field.at(i, j);
    }
    os << '\n';
  }
}

inline void save_field(const std::string& path, const CoefficientField& field) {
  std::ofstream os(path);
  require(static_cast<bool>(os), ErrorKind::invalid_argument, "cannot open " + path + " for writing");
  write_field(os, field);
  require(static_cast<bool>(os), ErrorKind::invalid_argument, "write to " + path + " failed");
}

inline CoefficientField read_field(std::istream& is) {
  std::string line;
  int line_no = 0;

  auto next_line = [&](const char* what) {
    if (!std::getline(is, line)) throw ParseError(line_no + 1, 1, std::string("missing ") + what);
    ++line_no;
  };

  // Splits the current line into tokens, remembering 1-based columns.
  auto tokens = [&]() {
    std::vector<std::pair<std::string, int>> out;
    std::size_t pos = 0;
    while (pos < line.size()) {
      while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t' || line[pos] == '\r')) ++pos;
      if (pos >= line.size()) break;
      std::size_t end = pos;
      while (end < line.size() && line[end] != ' ' && line[end] != '\t' && line[end] != '\r') ++end;
      out.emplace_back(line.substr(pos, end - pos), static_cast<int>(pos) + 1);
      pos = end;
    }
    return out;
  };

  next_line("header");
  auto header = tokens();
  if (header.size() != 2) throw ParseError(line_no, 1, "header must be \"ncols nrows\"");
  int dims[2];
  for (int k = 0; k < 2; ++k) {
    const auto& [tok, col] = header[static_cast<std::size_t>(k)];
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), dims[k]);
    if (ec != std::errc() || ptr != tok.data() + tok.size() || dims[k] < 1)
      throw ParseError(line_no, col, "invalid dimension '" + tok + "'");
  }
  const int ncols = dims[0], nrows = dims[1];

  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(ncols) * nrows);
  for (int row = 0; row < nrows; ++row) {
    next_line("grid row");
    auto row_tokens = tokens();
    if (static_cast<int>(row_tokens.size()) != ncols)
      throw ParseError(line_no, row_tokens.empty() ? 1 : row_tokens.back().second,
                       "expected " + std::to_string(ncols) + " values, found " +
                           std::to_string(row_tokens.size()));
    for (const auto& [tok, col] : row_tokens) {
      double x = 0.0;
      auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), x);
      if (ec != std::errc() || ptr != tok.data() + tok.size())
        throw ParseError(line_no, col, "invalid number '" + tok + "'");
      if (!(x > 0.0) || !std::isfinite(x)) throw ParseError(line_no, col, "value must be positive");
      values.push_back(x);
    }
  }
  if (ncols != nrows) throw ParseError(1, 1, "coefficient grids must be square");
  return CoefficientField(ncols, std::move(values));
}

inline CoefficientField load_field(const std::string& path) {
  std::ifstream is(path);
  require(static_cast<bool>(is), ErrorKind::invalid_argument, "cannot open " + path);
  return read_field(is);
}

}  // namespace lsi
