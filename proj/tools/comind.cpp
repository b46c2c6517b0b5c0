#include "comind/cli/commands.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

void add_config(CLI::App* cmd, std::filesystem::path& config) {
  cmd->add_option("--config", config, "key=value run configuration")->required();
}

}  // namespace

int main(int argc, char** argv) {
  using namespace comind::cli;
  CLI::App app{"Common and individual structure learning for paired modalities"};
  app.require_subcommand(1);

  TrainCommonOptions tc;
  auto* train_common = app.add_subcommand("train-common", "train the common component");
  add_config(train_common, tc.config);
  train_common->add_option("--seed", tc.seed, "overrides the config seed");
  train_common->add_option("--out", tc.out, "checkpoint to write")->required();
  train_common->add_option("--history", tc.history, "history CSV (default <out>.history.csv)");
  train_common->add_flag("--strict", tc.strict, "fail on clamped numerics");

  TrainIndividualOptions ti;
  auto* train_individual = app.add_subcommand("train-individual", "train the individual component");
  add_config(train_individual, ti.config);
  train_individual->add_option("--seed", ti.seed, "overrides the config seed");
  train_individual->add_option("--common", ti.common, "trained common checkpoint")->required();
  train_individual->add_option("--out", ti.out, "checkpoint to write")->required();
  train_individual->add_option("--history", ti.history, "history CSV (default <out>.history.csv)");
  train_individual->add_flag("--strict", ti.strict, "fail on clamped numerics");

  EvalOptions ev;
  auto* eval = app.add_subcommand("eval", "evaluate a common checkpoint");
  add_config(eval, ev.config);
  eval->add_option("--seed", ev.seed, "overrides the config seed (fold assignment)");
  eval->add_option("--common", ev.common, "trained common checkpoint")->required();
  eval->add_option("--metric", ev.metric, "corr or recognition")->required();
  eval->add_option("--split", ev.split, "train or test");
  eval->add_option("--out", ev.out, "CSV report");

  GradmapOptions gm;
  std::string range = "0";
  auto* gradmap = app.add_subcommand("gradmap", "export gradient maps as PGM images");
  add_config(gradmap, gm.config);
  gradmap->add_option("--common", gm.common, "trained common checkpoint")->required();
  gradmap->add_option("--individual", gm.individual, "trained individual checkpoint");
  gradmap->add_option("--kind", gm.kind, "common or individual");
  gradmap->add_option("--index,--range", range, "sample index N or half-open range A:B");
  gradmap->add_option("--split", gm.split, "train or test");
  gradmap->add_option("--out", gm.out, "output directory")->required();

  OracleOptions oo;
  auto* oracle = app.add_subcommand("oracle-suite", "verify autodiff against closed forms");
  oracle->add_option("--seed", oo.seed, "instance seed");
  oracle->add_option("--instances", oo.instances, "instances per check");
  oracle->add_flag("--inject-fault", oo.inject_fault, "perturb the closed-form common gradient");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  if (*train_common) return cmd_train_common(tc, std::cout, std::cerr);
  if (*train_individual) return cmd_train_individual(ti, std::cout, std::cerr);
  if (*eval) return cmd_eval(ev, std::cout, std::cerr);
  if (*gradmap) {
    const int code = guarded(
        [&] {
          std::tie(gm.begin, gm.end) = parse_index_range(range);
          return 0;
        },
        std::cerr);
    if (code != 0) return code;
    return cmd_gradmap(gm, std::cout, std::cerr);
  }
  return cmd_oracle_suite(oo, std::cout, std::cerr);
}
