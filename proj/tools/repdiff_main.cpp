#include <CLI11.hpp>
#include <cstdio>
#include <exception>

#include "commands.hpp"
#include "repdiff/config.hpp"

using namespace repdiff;
using namespace repdiff::cli;

int main(int argc, char** argv) {
  CLI::App app{"desk-scale diffusion toolkit: exact oracles, toy trainers, scaling studies"};
  app.require_subcommand(1);

  CommonArgs args;
  std::string checkpoint;
  long count = 1024;

  auto add_common = [&](CLI::App* sub, bool with_workers = true) {
    sub->add_option("--config", args.config_path, "experiment config (JSON)")->required();
    sub->add_option("--out", args.out_dir, "output directory");
    if (with_workers) sub->add_option("--workers", args.workers, "worker pool size");
    sub->add_option("--seed-offset", args.seed_offset, "offset added to configured seeds");
  };

  auto* verify = app.add_subcommand("verify", "run the exact verification suites");
  add_common(verify);
  auto* train = app.add_subcommand("train", "train the (mode x seed) grid");
  add_common(train);
  auto* sample = app.add_subcommand("sample", "draw samples from a checkpoint");
  add_common(sample, false);
  sample->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  sample->add_option("--count", count, "number of samples");
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(eval, false);
  eval->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  auto* tvs = app.add_subcommand("tvscaling", "1-D analytic-score discretization study");
  add_common(tvs);
  auto* gc = app.add_subcommand("gradcheck", "finite-difference checks for every loss");
  add_common(gc);
  auto* bound = app.add_subcommand("bound", "print the sampling-error bound components");
  bound->add_option("--config", args.config_path, "experiment config (JSON)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (verify->parsed()) return cmd_verify(args);
    if (train->parsed()) return cmd_train(args);
    if (sample->parsed()) return cmd_sample(args, checkpoint, count);
    if (eval->parsed()) return cmd_eval(args, checkpoint);
    if (tvs->parsed()) return cmd_tvscaling(args);
    if (gc->parsed()) return cmd_gradcheck(args);
    if (bound->parsed()) return cmd_bound(args);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
