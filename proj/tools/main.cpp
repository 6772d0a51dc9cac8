#include <CLI11.hpp>
#include <iostream>

#include "commands.hpp"

using namespace ratelab::cli;

namespace {

void add_common(CLI::App* cmd, CommonArgs& c) {
  cmd->add_option("--config", c.config, "Config file (key = value, or a resolved-config JSON)");
  cmd->add_option("--set", c.overrides, "Override one key, key=value (repeatable)");
  cmd->add_option("--seed", c.seed, "Random seed");
  cmd->add_option("--output", c.output_dir, "Run directory (default: $RC_OUTPUT_DIR, then ./run)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Rate control for learned video codecs on a synthetic environment"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train an agent");
  add_common(train_cmd, train.common);
  train_cmd->add_flag("--resume", train.resume, "Continue from checkpoints/last.ckpt");

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  add_common(eval_cmd, eval.common);
  eval_cmd->add_option("checkpoint", eval.checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--suite", eval.suite, "held-out or validation");
  eval_cmd->add_option("--trace", eval.trace, "Bandwidth trace CSV (start_frame,bpp)");
  eval_cmd->add_option("--method", eval.method, "agent or static-model");

  CompareArgs compare;
  auto* compare_cmd = app.add_subcommand("compare", "RD curves, BD-rate vs fixed lambda and rate error per method");
  add_common(compare_cmd, compare.common);
  compare_cmd->add_option("--checkpoint", compare.checkpoint, "Agent checkpoint");
  compare_cmd->add_option("--methods", compare.methods, "agent, static-model, fixed-lambda")->delimiter(',');

  OracleArgs oracle;
  auto* oracle_cmd = app.add_subcommand("oracle", "Exhaustive search over the action grid");
  add_common(oracle_cmd, oracle.common);
  oracle_cmd->add_option("-n,--frames", oracle.frames, "Sequence length");
  oracle_cmd->add_option("--checkpoint", oracle.checkpoint, "Also score this agent against the oracle");

  AblateArgs ablate;
  auto* ablate_cmd = app.add_subcommand("ablate", "Paired training runs: reward, frames, action-space, state");
  add_common(ablate_cmd, ablate.common);
  ablate_cmd->add_option("name", ablate.name, "Ablation name")->required();
  ablate_cmd->add_option("--variants", ablate.variants, "Subset of variants")->delimiter(',');
  ablate_cmd->add_option("--cache", ablate.cache_dir, "Directory of cached training runs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsageError;
  }

  if (*train_cmd) return cmd_train(train, std::cout, std::cerr);
  if (*eval_cmd) return cmd_eval(eval, std::cout, std::cerr);
  if (*compare_cmd) return cmd_compare(compare, std::cout, std::cerr);
  if (*oracle_cmd) return cmd_oracle(oracle, std::cout, std::cerr);
  return cmd_ablate(ablate, std::cout, std::cerr);
}
