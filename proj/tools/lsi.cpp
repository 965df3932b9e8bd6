// lsi: multiscale experiment driver.
//
//   lsi gen-coeff --config run.ini
//   lsi solve     --config run.ini [--out DIR] [--seed N] [--no-timing] [--threads N]
//   lsi sweep     --config run.ini ...
//   lsi eig-diag  --config run.ini ...
//
// Exit codes: 0 success, 2 configuration error, 3 numerical failure.

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "lsi/driver.hpp"

namespace {

constexpr int exit_config = 2;
constexpr int exit_numerical = 3;

bool is_config(lsi::ErrorKind k) {
  return k == lsi::ErrorKind::config_error || k == lsi::ErrorKind::parse_error ||
         k == lsi::ErrorKind::channel_overflow || k == lsi::ErrorKind::invalid_argument;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Localized subspace iteration multiscale FEM laboratory"};
  app.require_subcommand(1);

  std::string config;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  bool no_timing = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config, "configuration file")->required();
    sub->add_option("--out", out, "output directory (overrides output.dir)");
    sub->add_option("--seed", seed, "coefficient seed (overrides coefficient.seed)");
    sub->add_option("--threads", threads, "worker threads for patch work");
    sub->add_flag("--no-timing", no_timing, "write NA in the timing column");
  };
  auto* gen = app.add_subcommand("gen-coeff", "write a coefficient field and its heatmap");
  auto* solve = app.add_subcommand("solve", "reference solve and every configured method");
  auto* sweep = app.add_subcommand("sweep", "one row per axis value and method");
  auto* eig = app.add_subcommand("eig-diag", "spectral diagnostics of the local problems");
  for (auto* sub : {gen, solve, sweep, eig}) add_common(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : exit_config;
  }

  try {
    lsi::DriverOptions opt;
    opt.out_dir = out;
    opt.seed = seed;
    opt.threads = threads;
    opt.timing = !no_timing;
    opt.log = &std::cerr;
    const auto cfg = lsi::apply_overrides(lsi::load_config(config), opt);
    if (*gen) {
      lsi::cmd_gen_coeff(cfg, opt);
    } else if (*solve) {
      for (const auto& row : lsi::cmd_solve(cfg, opt)) std::cout << row.csv() << '\n';
    } else if (*sweep) {
      for (const auto& row : lsi::cmd_sweep(cfg, opt)) std::cout << row.csv() << '\n';
    } else if (*eig) {
      const auto s = lsi::cmd_eig_diag(cfg, opt);
      std::cout << "patches " << s.patches << ", interpolation instances " << s.interp_instances << ", bound "
                << (s.interp_holds ? "holds" : "VIOLATED") << '\n';
    }
  } catch (const lsi::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return is_config(e.kind()) ? exit_config : exit_numerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_numerical;
  }
  return 0;
}
