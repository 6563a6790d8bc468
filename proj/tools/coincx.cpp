// coincx: simulate, measure, and correct crosstalk-induced dips in
// two-detector coincidence spectra.
//
// Exit codes: 0 success, 2 usage/configuration error, 3 numerical or
// runtime failure.

#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "coincx/pipeline.hpp"
#include "coincx/version.hpp"

namespace {

coincx::RunConfig load_config(const std::string& path) {
  if (path.empty()) return coincx::RunConfig{};
  return coincx::parse_config_file(path);
}

int apply_env_threads(coincx::RunConfig& cfg) {
  if (cfg.montecarlo.threads > 0) return cfg.montecarlo.threads;
  if (const char* env = std::getenv("COINCX_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) cfg.montecarlo.threads = n;
  }
  return cfg.montecarlo.threads;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"coincidence crosstalk simulator and correction toolkit"};
  app.set_version_flag("--version", std::string("coincx ") + coincx::kVersion);
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path, "run configuration file")
      ->envname("COINCX_CONFIG");

  // simulate
  auto* sim = app.add_subcommand("simulate", "analytic spectra with and without crosstalk");
  std::string sim_mode = "continuous";
  std::string sim_variant = "anchored";
  std::string sim_out = "out";
  sim->add_option("--mode", sim_mode, "continuous or pulsed")
      ->check(CLI::IsMember({"continuous", "pulsed"}));
  sim->add_option("--variant", sim_variant, "loss-multiplier variant")
      ->check(CLI::IsMember({"anchored", "literal"}));
  sim->add_option("--out", sim_out, "output directory");

  // montecarlo
  auto* mc = app.add_subcommand("montecarlo", "event-level simulation");
  std::string mc_out = "out";
  std::int64_t mc_events = -1;
  std::int64_t mc_seed = -1;
  mc->add_option("--out", mc_out, "output directory");
  mc->add_option("--events", mc_events, "event count override");
  mc->add_option("--seed", mc_seed, "seed override");

  // fit
  auto* fit = app.add_subcommand("fit", "Gaussian dip or peak fits of a spectrum CSV");
  std::string fit_in, fit_kind = "dip", fit_out = "out";
  fit->add_option("--in", fit_in, "input spectrum CSV")->required();
  fit->add_option("--kind", fit_kind, "dip or peaks")
      ->check(CLI::IsMember({"dip", "peaks"}));
  fit->add_option("--out", fit_out, "output directory");

  // correct
  auto* correct = app.add_subcommand("correct", "divide a spectrum by a reference profile");
  std::string cor_in, cor_ref, cor_out = "out";
  correct->add_option("--in", cor_in, "input spectrum CSV")->required();
  correct->add_option("--reference", cor_ref, "reference profile CSV")->required();
  correct->add_option("--out", cor_out, "output directory");

  // sweep-threshold
  auto* sweep = app.add_subcommand("sweep-threshold", "loss fraction versus threshold voltage");
  double sw_from = 0.0, sw_to = 0.0;
  int sw_steps = 50;
  std::string sw_out = "out";
  sweep->add_option("--from", sw_from, "lowest threshold (V)")->required();
  sweep->add_option("--to", sw_to, "highest threshold (V)")->required();
  sweep->add_option("--steps", sw_steps, "number of grid steps");
  sweep->add_option("--out", sw_out, "output directory");

  // dump-config
  auto* dump = app.add_subcommand("dump-config", "print the effective configuration");

  CLI11_PARSE(app, argc, argv);

  try {
    coincx::RunConfig cfg = load_config(config_path);
    apply_env_threads(cfg);

    if (sim->parsed()) {
      const auto mode = sim_mode == "pulsed" ? coincx::SourceMode::pulsed
                                             : coincx::SourceMode::continuous;
      const auto variant = sim_variant == "literal" ? coincx::MultiplierVariant::literal
                                                    : coincx::MultiplierVariant::anchored;
      const auto res = coincx::run_simulate(cfg, mode, variant, sim_out);
      std::cout << res.report;
    } else if (mc->parsed()) {
      if (mc_events == 0)
        throw coincx::ConfigError("--events must be positive", 0);
      if (mc_events > 0) cfg.montecarlo.events = mc_events;
      if (mc_seed >= 0) cfg.montecarlo.seed = static_cast<std::uint64_t>(mc_seed);
      const auto res = coincx::run_montecarlo(cfg, mc_out);
      std::cout << res.report;
    } else if (fit->parsed()) {
      const auto res = coincx::run_fit(cfg, fit_in, fit_kind, fit_out);
      std::cout << res.report;
    } else if (correct->parsed()) {
      const auto res = coincx::run_correct(cfg, cor_in, cor_ref, cor_out);
      std::cout << res.report;
    } else if (sweep->parsed()) {
      const auto res = coincx::run_sweep(cfg, sw_from, sw_to, sw_steps, sw_out);
      std::cout << res.report;
    } else if (dump->parsed()) {
      std::cout << coincx::dump_config(cfg);
    }
  } catch (const coincx::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
