#include <functional>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "hop3d/commands.hpp"

namespace {

void add_common(CLI::App* sub, hop3d::CliOptions& opts) {
  sub->add_option("--config", opts.config_path, "configuration file of key = value lines")
      ->check(CLI::ExistingFile);
  sub->add_option("--seed", opts.seed, "master seed")->each([&](const std::string&) {
    opts.seed_given = true;
  });
  sub->add_option("--out", opts.out_dir, "output directory (default: out)");
  sub->add_option("--set", opts.sets, "override one key, e.g. --set train.phase1_iters=200")
      ->take_all();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hierarchical orthogonal prototypes for generalized few-shot "
               "point-cloud segmentation"};
  app.require_subcommand(1);

  struct Cmd {
    const char* name;
    const char* help;
    std::function<int(const hop3d::RunConfig&)> run;
    hop3d::CliOptions opts;
    CLI::App* sub = nullptr;
  };
  Cmd cmds[] = {
      {"gen", "generate the synthetic dataset", hop3d::cmd_gen, {}, nullptr},
      {"phase1", "base training, gradient bank and basis", hop3d::cmd_phase1, {}, nullptr},
      {"phase2", "few-shot adaptation from the phase-1 checkpoint", hop3d::cmd_phase2, {},
       nullptr},
      {"eval", "score a checkpoint on a scene split", hop3d::cmd_eval, {}, nullptr},
      {"ablate", "run the flag/sweep grid over several seeds", hop3d::cmd_ablate, {}, nullptr},
      {"report", "aggregate ablation runs into CSV summaries", hop3d::cmd_report, {}, nullptr},
  };
  for (Cmd& c : cmds) {
    c.sub = app.add_subcommand(c.name, c.help);
    add_common(c.sub, c.opts);
  }

  CLI11_PARSE(app, argc, argv);

  for (Cmd& c : cmds) {
    if (!c.sub->parsed()) continue;
    try {
      return c.run(hop3d::resolve_config(c.opts));
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 1;
    }
  }
  return 0;
}
