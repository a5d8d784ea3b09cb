// irfkit: simulate, diagnose, verify and report on closed-loop ensembles.

#include <iostream>

#include <CLI11.hpp>

#include "irfkit/harness/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Simulation and verification driver for closed-loop stochastic ensembles"};
  app.require_subcommand(1);

  irfkit::harness::RunOptions opt;
  std::uint64_t seed = 0;
  std::string out;

  auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* c = sub->add_option("--config", opt.config_path, "experiment config (JSON)");
    if (needs_config) c->required();
    sub->add_option("--seed", seed, "master seed (overrides config.seed)");
    sub->add_option("--out", out, "output directory");
    sub->add_option("--threads", opt.threads, "worker threads, 0 = auto")->check(CLI::NonNegativeNumber);
    sub->add_option("--format", opt.format, "table format")->check(CLI::IsMember({"csv"}));
  };
  add_common(app.add_subcommand("simulate", "record trajectories"), true);
  add_common(app.add_subcommand("diagnose", "run empirical diagnostics"), true);
  add_common(app.add_subcommand("verify", "check hypotheses and write a certificate"), true);
  add_common(app.add_subcommand("report", "re-check a run directory and summarise it"), false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : irfkit::harness::kExitConfig;
  }

  CLI::App* sub = app.get_subcommands().front();
  if (sub->count("--seed")) opt.seed = seed;
  if (sub->count("--out")) opt.out = out;
  return irfkit::harness::run_command(sub->get_name(), opt, std::cerr);
}
