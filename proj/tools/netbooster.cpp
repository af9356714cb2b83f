#include <exception>
#include <functional>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "netbooster/commands.hpp"
#include "netbooster/tensor.hpp"

int main(int argc, char** argv) {
  CLI::App app{"netbooster: expansion-then-contraction training toolkit"};
  app.require_subcommand(1);

  struct Entry {
    const char* name;
    const char* help;
    bool needs_config;
    bool has_resume;
    std::function<int(const netbooster::CliOptions&)> run;
  };
  const Entry entries[] = {
      {"expand", "replace planned layers with residual blocks", true, false,
       netbooster::cmd_expand},
      {"train", "train the configured model", true, true, netbooster::cmd_train},
      {"plt", "ramp block activations to identity while training", true, true,
       netbooster::cmd_plt},
      {"contract", "collapse the blocks of a linearized model", true, false,
       netbooster::cmd_contract},
      {"pipeline", "expand, train, linearize, contract, compare", true, true,
       netbooster::cmd_pipeline},
      {"verify", "run the built-in oracle checks", false, false, netbooster::cmd_verify},
      {"flops", "print per-layer parameter and flop counts", true, false, netbooster::cmd_flops},
      {"sweep", "grid of short pipeline runs over plan settings", true, false,
       netbooster::cmd_sweep},
  };

  netbooster::CliOptions opt;
  const Entry* chosen = nullptr;
  for (const Entry& e : entries) {
    CLI::App* sub = app.add_subcommand(e.name, e.help);
    auto* config_opt = sub->add_option("--config", opt.config_path, "JSON run configuration");
    if (e.needs_config) config_opt->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", opt.seed, "base RNG seed (default 1)");
    sub->add_option("--out", opt.out_dir, "output directory (default 'out')");
    if (e.has_resume)
      sub->add_flag("--resume", opt.resume, "continue from the latest checkpoint");
    sub->callback([&chosen, &e] { chosen = &e; });
  }

  CLI11_PARSE(app, argc, argv);
  try {
    return chosen->run(opt);
  } catch (const netbooster::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 1;
  }
}
