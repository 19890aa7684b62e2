#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "repeatlab/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"repeatlab: repeated-data vs fresh-data training laboratory"};
  app.require_subcommand(1);

  repeatlab::CliInvocation inv;
  std::string seed_str;

  auto add_common = [&](CLI::App* sub, bool config_required) {
    auto* c = sub->add_option("--config", inv.config_path, "JSON config file");
    if (config_required) c->required();
    sub->add_option("--out", inv.out_dir, "output directory")->required();
    sub->add_option("--set", inv.overrides, "dotted-key override, key=value (repeatable)");
    sub->add_option("--workers", inv.workers,
                    "worker threads; default REPEATLAB_WORKERS or 1");
    sub->add_option("--seed", seed_str, "base seed override (seeds.base)");
  };

  add_common(app.add_subcommand("run", "single training run per seed"), true);
  add_common(app.add_subcommand("sweep", "grid experiment from the config"), true);
  add_common(app.add_subcommand("theory", "two-phase quadratic-neuron scaling study"), true);
  add_common(app.add_subcommand("verify", "lemma and Monte-Carlo verifier suite"), true);
  add_common(app.add_subcommand("report", "re-aggregate and plot an existing out dir"), false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : repeatlab::kExitConfig;
  }

  inv.subcommand = app.get_subcommands().front()->get_name();
  if (!seed_str.empty()) {
    try {
      inv.seed = std::stoull(seed_str);
    } catch (const std::exception&) {
      std::cerr << "config error: --seed expects an unsigned integer\n";
      return repeatlab::kExitConfig;
    }
  }
  return repeatlab::dispatch(inv);
}
