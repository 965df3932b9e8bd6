#pragma once

// Experiment driver behind the `lsi` command line tool.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "lsi/coeff.hpp"
#include "lsi/config.hpp"
#include "lsi/errors.hpp"
#include "lsi/fem.hpp"
#include "lsi/grid.hpp"
#include "lsi/msbasis.hpp"
#include "lsi/msgalerkin.hpp"
#include "lsi/pgm.hpp"
#include "lsi/specdiag.hpp"

namespace lsi {

struct DriverOptions {
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  bool timing = true;
  std::ostream* log = nullptr;
};

/// Applies command line overrides to a parsed configuration.
inline RunConfig apply_overrides(RunConfig cfg, const DriverOptions& opt) {
  if (opt.out_dir) cfg.out_dir = *opt.out_dir;
  if (opt.seed) {
    cfg.coefficient.seed = *opt.seed;
    cfg.coefficient.channels.seed = *opt.seed;
  }
  if (opt.threads) {
    require(*opt.threads >= 1, ErrorKind::config_error, "--threads: must be >= 1");
    cfg.threads = *opt.threads;
  }
  return cfg;
}

inline CoefficientField make_field(const RunConfig& cfg, const NestedPair& pair) {
  const auto& k = cfg.coefficient;
  switch (k.source) {
    case CoefficientSource::inclusions: return gen_inclusions(pair, k.density, k.contrast, k.seed, k.shape);
    case CoefficientSource::channels: {
      auto spec = k.channels;
      spec.contrast = k.contrast;
      spec.seed = k.seed;
      return gen_channels(pair, spec);
    }
    case CoefficientSource::file: {
      auto field = load_field(k.file);
      if (field.n() != pair.fine.elements_per_side())
        throw Error(ErrorKind::config_error, "coefficient.file: grid is " + std::to_string(field.n()) +
                                                 " per side, problem.fine is " +
                                                 std::to_string(pair.fine.elements_per_side()));
      return field;
    }
  }
  throw Error(ErrorKind::config_error, "coefficient.source: unknown");
}

namespace detail {

inline std::filesystem::path ensure_dir(const std::string& dir) {
  std::filesystem::path p(dir);
  std::error_code ec;
  std::filesystem::create_directories(p, ec);
  if (ec) throw Error(ErrorKind::config_error, "output.dir: cannot create '" + dir + "'");
  return p;
}

inline void say(const DriverOptions& opt, const std::string& s) {
  if (opt.log) *opt.log << s << '\n';
}

/// Runs every method of the configuration on one problem instance.
inline std::vector<ResultRow> run_point(const RunConfig& cfg, const DriverOptions& opt,
                                        const std::vector<MethodSpec>& methods,
                                        const std::optional<std::filesystem::path>& heatmap_dir = std::nullopt) {
  std::vector<ResultRow> rows;
  if (methods.empty()) return rows;
  const auto pair = build_nested(cfg.coarse, cfg.fine);
  const auto field = make_field(cfg, pair);
  const auto ref = reference_solve(pair, field, cfg.kind, default_source(cfg.kind), cfg.solver);
  const int layers = cfg.effective_layers();
  const LocalProblems problems(pair, field, cfg.kind, layers, cfg.threads);
  if (heatmap_dir) save_pgm((*heatmap_dir / "u_ref.pgm").string(), solution_image(pair, cfg.kind, ref.solution));
  RunMetadata meta;
  meta.m = layers;
  meta.H = 1.0 / cfg.coarse;
  meta.h = 1.0 / cfg.fine;
  meta.contrast = field.contrast();
  if (cfg.coefficient.source == CoefficientSource::channels) meta.channel_len = cfg.coefficient.channels.length;
  for (const auto& spec : methods) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto basis =
        build_basis(problems, spec, BasisOptions{cfg.pairing, cfg.combine_lksi_components});
    auto cs = assemble_coarse(ref.system.stiffness, ref.rhs, basis);
    const auto sol = solve_ms(cs);
    const auto t1 = std::chrono::steady_clock::now();
    for (const auto& e : basis.events) say(opt, e);
    meta.wall_time_s = opt.timing ? std::optional<double>(std::chrono::duration<double>(t1 - t0).count())
                                  : std::nullopt;
    rows.push_back(report(ref.solution, sol.fine, ref.system.stiffness, ref.system.mass, basis, meta));
    if (heatmap_dir)
      save_pgm((*heatmap_dir / ("u_" + spec.label() + ".pgm")).string(), solution_image(pair, cfg.kind, sol.fine));
  }
  return rows;
}

inline void write_rows(const std::filesystem::path& path, const std::vector<ResultRow>& rows) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorKind::config_error, "output.dir: cannot write '" + path.string() + "'");
  os << ResultRow::csv_header << '\n';
  for (const auto& r : rows) os << r.csv() << '\n';
}

inline std::string number(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10e", x);
  return buf;
}

}  // namespace detail

/// Writes coefficient.txt and coefficient.pgm into the output directory.
inline CoefficientField cmd_gen_coeff(const RunConfig& cfg, const DriverOptions& opt = {}) {
  const auto dir = detail::ensure_dir(cfg.out_dir);
  const auto pair = build_nested(cfg.coarse, cfg.fine);
  const auto field = make_field(cfg, pair);
  save_field((dir / "coefficient.txt").string(), field);
  save_pgm((dir / "coefficient.pgm").string(), coefficient_image(field));
  detail::say(opt, "wrote " + (dir / "coefficient.txt").string());
  return field;
}

/// Reference solve plus every configured method; results.csv in the output directory.
inline std::vector<ResultRow> cmd_solve(const RunConfig& cfg, const DriverOptions& opt = {}) {
  const auto dir = detail::ensure_dir(cfg.out_dir);
  const auto rows = detail::run_point(cfg, opt, cfg.methods, cfg.heatmaps ? std::optional(dir) : std::nullopt);
  detail::write_rows(dir / "results.csv", rows);
  return rows;
}

/// One row per (axis value, method); sweep.csv in the output directory.
inline std::vector<ResultRow> cmd_sweep(const RunConfig& cfg, const DriverOptions& opt = {}) {
  if (!cfg.sweep.axis) throw Error(ErrorKind::config_error, "sweep.axis: required for the sweep command");
  const auto axis = *cfg.sweep.axis;
  if (axis == SweepAxis::channel && cfg.coefficient.source != CoefficientSource::channels)
    throw Error(ErrorKind::config_error, "sweep.axis: channel sweeps need coefficient.source = channels");
  const auto dir = detail::ensure_dir(cfg.out_dir);
  std::vector<ResultRow> rows;
  for (double value : cfg.sweep.values) {
    RunConfig point = cfg;
    std::vector<MethodSpec> methods = cfg.methods;
    const int iv = static_cast<int>(value);
    switch (axis) {
      case SweepAxis::contrast: point.coefficient.contrast = value; break;
      case SweepAxis::channel: point.coefficient.channels.length = iv; break;
      case SweepAxis::H:
        if (point.fine % iv != 0)
          throw Error(ErrorKind::config_error, "sweep.values: " + std::to_string(iv) + " does not divide problem.fine");
        point.coarse = iv;
        break;
      case SweepAxis::m:
        point.layer_rule = false;
        point.layers = iv;
        break;
      case SweepAxis::n:
        for (auto& m : methods)
          if (m.method != Method::lod) m.iterations = iv;
        break;
    }
    detail::say(opt, std::string(to_string(axis)) + " = " + detail::number(value));
    const auto part = detail::run_point(point, opt, methods);
    rows.insert(rows.end(), part.begin(), part.end());
  }
  detail::write_rows(dir / "sweep.csv", rows);
  return rows;
}

/// Smooth random field on the free fine DOFs: a few sine modes with normal weights.
inline Vector random_smooth(const NestedPair& pair, OperatorKind kind, std::uint64_t seed, int modes = 4) {
  const auto layout = global_layout(pair, kind);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::array<double, 4>> terms;  // weight, kx, ky, component
  for (int c = 0; c < layout.bs; ++c)
    for (int p = 1; p <= modes; ++p)
      for (int q = 1; q <= modes; ++q) terms.push_back({normal(rng) / (p * p + q * q), double(p), double(q), double(c)});
  Vector u = Vector::Zero(layout.size());
  const int n = pair.fine.elements_per_side();
  for (int j = 1; j < n; ++j)
    for (int i = 1; i < n; ++i) {
      const double x = double(i) / n, y = double(j) / n;
      const int l = layout.node_index(i, j);
      for (const auto& t : terms)
        u(layout.bs * l + static_cast<int>(t[3])) += t[0] * std::sin(M_PI * t[1] * x) * std::sin(M_PI * t[2] * y);
    }
  return u;
}

struct EigDiagSummary {
  int patches = 0;
  int interp_instances = 0;
  bool interp_holds = true;
};

/// Spectral diagnostics: angles.csv, krylov.csv, rates.csv, ritz.csv and interp.csv.
inline EigDiagSummary cmd_eig_diag(const RunConfig& cfg, const DriverOptions& opt = {}) {
  const auto dir = detail::ensure_dir(cfg.out_dir);
  const auto pair = build_nested(cfg.coarse, cfg.fine);
  const auto field = make_field(cfg, pair);
  const LocalProblems problems(pair, field, cfg.kind, cfg.effective_layers(), cfg.threads);
  const auto seeds = all_bilinear_seeds(pair, cfg.kind);
  const auto lksi_seeds = all_constant_seeds(pair, cfg.kind, cfg.combine_lksi_components);
  EigOptions eo;
  eo.iterative = true;
  std::vector<int> chosen = cfg.eig.patches;
  if (chosen.empty())
    for (int i = 0; i < pair.coarse_count(); ++i) chosen.push_back(i);

  std::ofstream angles(dir / "angles.csv"), krylov(dir / "krylov.csv"), rates(dir / "rates.csv"),
      ritz_out(dir / "ritz.csv"), interp(dir / "interp.csv");
  if (!angles || !krylov || !rates || !ritz_out || !interp)
    throw Error(ErrorKind::config_error, "output.dir: cannot write diagnostics");
  angles << "patch,round,lssi_angle,lssi_envelope\n";
  krylov << "patch,round,j,lksi_sine,lksi_envelope\n";
  rates << "patch,L,gap,clustered,fitted_rate\n";
  ritz_out << "patch,steps,index,ritz_value,eigenvalue\n";
  interp << "instance,lhs,rhs,lambda_next,holds\n";

  EigDiagSummary summary;
  for (int i : chosen) {
    const auto& sys = problems[static_cast<std::size_t>(i)];
    const auto c = seed_constraints(problems, seeds[static_cast<std::size_t>(i)], static_cast<std::size_t>(i),
                                    cfg.pairing);
    const auto rep = rate_report(sys, c, cfg.eig.rounds, eo);
    for (const auto& row : rep.rows) {
      angles << i << ',' << row.round << ',' << detail::number(row.lssi_angle) << ','
             << detail::number(row.lssi_envelope) << '\n';
      for (std::size_t j = 0; j < row.lksi_sines.size(); ++j)
        krylov << i << ',' << row.round << ',' << j + 1 << ',' << detail::number(row.lksi_sines[j]) << ','
               << (std::isnan(row.lksi_envelopes[j]) ? std::string("NA") : detail::number(row.lksi_envelopes[j]))
               << '\n';
    }
    rates << i << ',' << c.count() << ',' << detail::number(rep.gap) << ',' << (rep.clustered ? 1 : 0) << ','
          << (rep.fitted_rate ? detail::number(*rep.fitted_rate) : std::string("NA")) << '\n';
    for (const auto& note : rep.notes) detail::say(opt, "patch " + std::to_string(i) + ": " + note);

    const Vector x1 = lksi_seeds[static_cast<std::size_t>(i)].localize(pair, sys.patch()).col(0);
    const auto ar = arnoldi(local_inverse_op(sys), x1, std::min(cfg.eig.rounds, sys.dimension()), &sys.mass().matrix);
    const auto rz = ritz(ar);
    const auto exact = local_eig(sys, std::min<int>(static_cast<int>(rz.values.size()), sys.dimension()), eo);
    for (int k = 0; k < rz.values.size(); ++k)
      ritz_out << i << ',' << ar.steps() << ',' << k + 1 << ',' << detail::number(rz.values(k)) << ','
               << detail::number(exact.values(k)) << '\n';
    ++summary.patches;
  }

  if (cfg.eig.instances > 0) {
    const auto ref = assemble(pair, field, cfg.kind);
    std::vector<Patch> patches;
    for (std::size_t i = 0; i < problems.size(); ++i) patches.push_back(problems[i].patch());
    const auto pou = build_pou(pair, patches);
    std::vector<int> counts(problems.size());
    for (std::size_t i = 0; i < problems.size(); ++i)
      counts[i] = cfg.eig.count > 0 ? cfg.eig.count : seeds[i].count();
    for (int k = 0; k < cfg.eig.instances; ++k) {
      const Vector u = random_smooth(pair, cfg.kind, cfg.coefficient.seed * 7919u + static_cast<std::uint64_t>(k));
      const auto b = check_interp_bound(problems, pou, counts, ref.stiffness, u, eo);
      interp << k << ',' << detail::number(b.lhs) << ',' << detail::number(b.rhs) << ','
             << detail::number(b.lambda_next) << ',' << (b.holds() ? 1 : 0) << '\n';
      summary.interp_holds = summary.interp_holds && b.holds();
      ++summary.interp_instances;
    }
  }
  return summary;
}

}  // namespace lsi
