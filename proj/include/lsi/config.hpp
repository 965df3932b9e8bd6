#pragma once

// Run configuration: an ini file with [sections] and key = value lines.
//
//   [problem]      kind, coarse (1/H), fine (1/h), layers (integer or ceil2log)
//   [coefficient]  source (inclusions | channels | file), contrast, seed, ...
//   [methods]      list, pairing
//   [sweep]        axis (contrast | channel | H | m | n), values
//   [eig]          patches, rounds, instances, count
//   [output]       dir, heatmaps
//   [solver]       method (auto | direct | cg), tolerance, threads

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "lsi/coeff.hpp"
#include "lsi/errors.hpp"
#include "lsi/fem.hpp"
#include "lsi/msbasis.hpp"

namespace lsi {

enum class CoefficientSource { inclusions, channels, file };
enum class SweepAxis { contrast, channel, H, m, n };

inline std::string_view to_string(SweepAxis a) noexcept {
  switch (a) {
    case SweepAxis::contrast: return "contrast";
    case SweepAxis::channel: return "channel";
    case SweepAxis::H: return "H";
    case SweepAxis::m: return "m";
    case SweepAxis::n: return "n";
  }
  return "?";
}

/// m = ceil(2 ln(1/H)).
inline int ceil2log_layers(int coarse_per_side) {
  return std::max(1, static_cast<int>(std::ceil(2.0 * std::log(static_cast<double>(coarse_per_side)))));
}

struct CoefficientConfig {
  CoefficientSource source = CoefficientSource::inclusions;
  double contrast = 1e4;
  std::uint64_t seed = 42;
  double density = 0.2;
  InclusionShape shape;
  ChannelSpec channels;
  std::string file;
};

struct SweepConfig {
  std::optional<SweepAxis> axis;
  std::vector<double> values;
};

struct EigConfig {
  std::vector<int> patches;  // empty: all
  int rounds = 8;
  int instances = 5;
  int count = 0;  // eigenpairs per patch in the interpolation check; 0: seed count
};

struct RunConfig {
  OperatorKind kind = OperatorKind::diffusion;
  int coarse = 10;
  int fine = 100;
  int layers = 4;
  bool layer_rule = false;
  CoefficientConfig coefficient;
  std::vector<MethodSpec> methods;
  SeedPairing pairing = SeedPairing::element;
  bool combine_lksi_components = false;
  SweepConfig sweep;
  EigConfig eig;
  std::string out_dir = "out";
  bool heatmaps = false;
  std::optional<SolveMethod> solver;
  double tolerance = 1e-10;
  int threads = 1;

  [[nodiscard]] int effective_layers() const { return layer_rule ? ceil2log_layers(coarse) : layers; }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

class ConfigReader {
 public:
  explicit ConfigReader(const boost::property_tree::ptree& tree) : tree_(tree) {}

  [[nodiscard]] std::optional<std::string> raw(const std::string& key) {
    used_.insert(key);
    auto v = tree_.get_optional<std::string>(boost::property_tree::ptree::path_type(key, '.'));
    if (!v) return std::nullopt;
    return trim(*v);
  }

  std::string text(const std::string& key, const std::string& fallback) { return raw(key).value_or(fallback); }

  double real(const std::string& key, double fallback) {
    auto v = raw(key);
    if (!v) return fallback;
    return parse_real(key, *v);
  }

  long long integer(const std::string& key, long long fallback) {
    auto v = raw(key);
    if (!v) return fallback;
    return parse_integer(key, *v);
  }

  bool boolean(const std::string& key, bool fallback) {
    auto v = raw(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1" || *v == "yes") return true;
    if (*v == "false" || *v == "0" || *v == "no") return false;
    throw Error(ErrorKind::config_error, key + ": expected a boolean, got '" + *v + "'");
  }

  static double parse_real(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    double x = 0.0;
    try {
      x = std::stod(v, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != v.size() || !std::isfinite(x))
      throw Error(ErrorKind::config_error, key + ": expected a number, got '" + v + "'");
    return x;
  }

  static long long parse_integer(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    long long x = 0;
    try {
      x = std::stoll(v, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != v.size()) throw Error(ErrorKind::config_error, key + ": expected an integer, got '" + v + "'");
    return x;
  }

  /// Keys present in the file that no reader asked for.
  [[nodiscard]] std::vector<std::string> unknown() const {
    std::vector<std::string> out;
    for (const auto& [section, body] : tree_) {
      if (body.empty()) {
        out.push_back(section);
        continue;
      }
      for (const auto& [key, value] : body) {
        (void)value;
        const std::string full = section + "." + key;
        if (!used_.count(full)) out.push_back(full);
      }
    }
    return out;
  }

 private:
  const boost::property_tree::ptree& tree_;
  std::set<std::string> used_;
};

inline void check(bool ok, const std::string& key, const std::string& what) {
  if (!ok) throw Error(ErrorKind::config_error, key + ": " + what);
}

}  // namespace detail

/// Parses and validates a configuration. `base` resolves relative file paths.
inline RunConfig parse_config(std::istream& is, const std::filesystem::path& base = {}) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(is, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw Error(ErrorKind::config_error, "line " + std::to_string(e.line()) + ": " + e.message());
  }
  detail::ConfigReader r(tree);
  using detail::check;
  RunConfig c;

  const auto kind = r.text("problem.kind", "diffusion");
  if (kind == "diffusion") c.kind = OperatorKind::diffusion;
  else if (kind == "elasticity") c.kind = OperatorKind::elasticity;
  else throw Error(ErrorKind::config_error, "problem.kind: unknown operator '" + kind + "'");
  c.coarse = static_cast<int>(r.integer("problem.coarse", 10));
  c.fine = static_cast<int>(r.integer("problem.fine", 100));
  check(c.coarse >= 1, "problem.coarse", "must be >= 1");
  check(c.fine >= 1, "problem.fine", "must be >= 1");
  check(c.fine % c.coarse == 0, "problem.fine", "must be a multiple of problem.coarse");
  const auto layers = r.text("problem.layers", "4");
  if (layers == "ceil2log") {
    c.layer_rule = true;
  } else {
    c.layers = static_cast<int>(detail::ConfigReader::parse_integer("problem.layers", layers));
    check(c.layers >= 1, "problem.layers", "must be >= 1");
  }

  auto& k = c.coefficient;
  const auto source = r.text("coefficient.source", "inclusions");
  if (source == "inclusions") k.source = CoefficientSource::inclusions;
  else if (source == "channels") k.source = CoefficientSource::channels;
  else if (source == "file") k.source = CoefficientSource::file;
  else throw Error(ErrorKind::config_error, "coefficient.source: unknown source '" + source + "'");
  k.contrast = r.real("coefficient.contrast", 1e4);
  check(k.contrast >= 1.0, "coefficient.contrast", "must be >= 1");
  const auto seed = r.integer("coefficient.seed", 42);
  check(seed >= 0, "coefficient.seed", "must be >= 0");
  k.seed = static_cast<std::uint64_t>(seed);
  k.density = r.real("coefficient.density", 0.2);
  check(k.density >= 0.0 && k.density < 1.0, "coefficient.density", "must lie in [0, 1)");
  k.shape.min_length = static_cast<int>(r.integer("coefficient.min_length", k.shape.min_length));
  k.shape.max_length = static_cast<int>(r.integer("coefficient.max_length", k.shape.max_length));
  k.shape.min_width = static_cast<int>(r.integer("coefficient.min_width", k.shape.min_width));
  k.shape.max_width = static_cast<int>(r.integer("coefficient.max_width", k.shape.max_width));
  k.shape.channel_fraction = r.real("coefficient.channel_fraction", k.shape.channel_fraction);
  k.shape.channel_min_length = static_cast<int>(r.integer("coefficient.channel_min_length", k.shape.channel_min_length));
  k.shape.channel_max_length = static_cast<int>(r.integer("coefficient.channel_max_length", k.shape.channel_max_length));
  k.shape.channel_width = static_cast<int>(r.integer("coefficient.channel_width", k.shape.channel_width));
  check(k.shape.min_length >= 1 && k.shape.min_length <= k.shape.max_length, "coefficient.min_length",
        "needs 1 <= min_length <= max_length");
  check(k.shape.min_width >= 1 && k.shape.min_width <= k.shape.max_width, "coefficient.min_width",
        "needs 1 <= min_width <= max_width");
  check(k.shape.channel_fraction >= 0.0 && k.shape.channel_fraction <= 1.0, "coefficient.channel_fraction",
        "must lie in [0, 1]");
  check(k.shape.channel_min_length >= 1 && k.shape.channel_min_length <= k.shape.channel_max_length,
        "coefficient.channel_min_length", "needs 1 <= channel_min_length <= channel_max_length");
  check(k.shape.channel_width >= 1, "coefficient.channel_width", "must be >= 1");
  k.channels.length = static_cast<int>(r.integer("coefficient.length", 6));
  k.channels.count = static_cast<int>(r.integer("coefficient.count", 5));
  k.channels.thickness = static_cast<int>(r.integer("coefficient.thickness", 1));
  k.channels.seed = k.seed;
  k.channels.contrast = k.contrast;
  check(k.channels.length >= 1, "coefficient.length", "must be >= 1");
  check(k.channels.count >= 1, "coefficient.count", "must be >= 1");
  check(k.channels.thickness >= 1, "coefficient.thickness", "must be >= 1");
  if (auto file = r.raw("coefficient.file")) {
    std::filesystem::path p(*file);
    if (p.is_relative() && !base.empty()) p = base / p;
    k.file = p.string();
  }
  if (k.source == CoefficientSource::file) {
    check(!k.file.empty(), "coefficient.file", "required when coefficient.source = file");
    check(std::filesystem::exists(k.file), "coefficient.file", "no such file '" + k.file + "'");
  }

  for (const auto& m : detail::split_list(r.text("methods.list", ""))) {
    try {
      c.methods.push_back(MethodSpec::parse(m));
    } catch (const Error& e) {
      throw Error(ErrorKind::config_error, std::string("methods.list: ") + e.what());
    }
  }
  const auto pairing = r.text("methods.pairing", "element");
  if (pairing == "element") c.pairing = SeedPairing::element;
  else if (pairing == "nodal") c.pairing = SeedPairing::nodal;
  else throw Error(ErrorKind::config_error, "methods.pairing: expected element or nodal, got '" + pairing + "'");
  c.combine_lksi_components = r.boolean("methods.combine_components", false);

  if (auto axis = r.raw("sweep.axis")) {
    if (*axis == "contrast") c.sweep.axis = SweepAxis::contrast;
    else if (*axis == "channel") c.sweep.axis = SweepAxis::channel;
    else if (*axis == "H") c.sweep.axis = SweepAxis::H;
    else if (*axis == "m") c.sweep.axis = SweepAxis::m;
    else if (*axis == "n") c.sweep.axis = SweepAxis::n;
    else throw Error(ErrorKind::config_error, "sweep.axis: unknown axis '" + *axis + "'");
  }
  for (const auto& v : detail::split_list(r.text("sweep.values", "")))
    c.sweep.values.push_back(detail::ConfigReader::parse_real("sweep.values", v));
  if (c.sweep.axis && *c.sweep.axis != SweepAxis::contrast)
    for (double v : c.sweep.values)
      check(v == std::floor(v) && v >= 1.0, "sweep.values", "must be positive integers for this axis");

  for (const auto& v : detail::split_list(r.text("eig.patches", "")))
    c.eig.patches.push_back(static_cast<int>(detail::ConfigReader::parse_integer("eig.patches", v)));
  for (int p : c.eig.patches) check(p >= 0 && p < c.coarse * c.coarse, "eig.patches", "patch index out of range");
  c.eig.rounds = static_cast<int>(r.integer("eig.rounds", 8));
  c.eig.instances = static_cast<int>(r.integer("eig.instances", 5));
  c.eig.count = static_cast<int>(r.integer("eig.count", 0));
  check(c.eig.rounds >= 1, "eig.rounds", "must be >= 1");
  check(c.eig.instances >= 0, "eig.instances", "must be >= 0");
  check(c.eig.count >= 0, "eig.count", "must be >= 0");

  c.out_dir = r.text("output.dir", "out");
  c.heatmaps = r.boolean("output.heatmaps", false);

  const auto solver = r.text("solver.method", "auto");
  if (solver == "direct") c.solver = SolveMethod::direct;
  else if (solver == "cg") c.solver = SolveMethod::cg;
  else if (solver != "auto") throw Error(ErrorKind::config_error, "solver.method: expected auto, direct or cg");
  c.tolerance = r.real("solver.tolerance", 1e-10);
  check(c.tolerance > 0.0, "solver.tolerance", "must be positive");
  c.threads = static_cast<int>(r.integer("solver.threads", 1));
  check(c.threads >= 1, "solver.threads", "must be >= 1");

  const auto unknown = r.unknown();
  if (!unknown.empty()) throw Error(ErrorKind::config_error, unknown.front() + ": unknown key");
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorKind::config_error, "cannot open config '" + path + "'");
  return parse_config(is, std::filesystem::path(path).parent_path());
}

}  // namespace lsi
