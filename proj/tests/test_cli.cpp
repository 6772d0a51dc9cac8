#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <iterator>
#include <json.hpp>
#include <sstream>

#include "commands.hpp"
#include "test_util.hpp"

using namespace ratelab;
using namespace ratelab::cli;
using nlohmann::json;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Small enough to train in a second.
std::vector<std::string> tiny() {
  return {"epochs=2",       "iterations_per_epoch=2", "phase1_epochs=1", "phase2_frames=8",
          "hidden_units=16", "hidden_layers=2",        "batch_size=4",    "learning_starts=1",
          "validation_seeds=1", "eval_seeds=3",        "eval_frames=12"};
}

CommonArgs common(const fs::path& out, std::vector<std::string> extra = {}) {
  CommonArgs a;
  a.overrides = tiny();
  a.overrides.insert(a.overrides.end(), extra.begin(), extra.end());
  a.output_dir = out;
  return a;
}

// Trains the tiny configuration once per process.
const fs::path& trained_run() {
  static const fs::path dir = [] {
    auto d = test_util::temp_dir("cli_trained");
    std::ostringstream out;
    std::ostringstream err;
    if (cmd_train({common(d), false}, out, err) != kOk) throw std::runtime_error(err.str());
    return d;
  }();
  return dir;
}

}  // namespace

TEST(Config, MissingFileIsUsageError) {
  const fs::path missing = test_util::temp_dir("cli_missing") / "base.cfg";
  TrainArgs args;
  args.common.config = missing;
  std::ostringstream out;
  std::ostringstream err;
  EXPECT_EQ(cmd_train(args, out, err), kUsageError);
  EXPECT_NE(err.str().find(missing.string()), std::string::npos) << err.str();
}

TEST(Config, UnknownKeyReportsLine) {
  const auto dir = test_util::temp_dir("cli_badkey");
  std::ofstream(dir / "bad.cfg") << "# comment\n[train]\ngamma = 0.9\nbogus = 1\n";
  const fs::path file = dir / "bad.cfg";
  try {
    load_config(&file, {});
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("bad.cfg:4"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("bogus"), std::string::npos) << e.what();
  }
  EXPECT_THROW(load_config(nullptr, {"gamma"}), ConfigError);
  EXPECT_THROW(load_config(nullptr, {"epochs=ten"}), ConfigError);
}

TEST(Config, FileThenOverrides) {
  const auto dir = test_util::temp_dir("cli_layers");
  std::ofstream(dir / "base.cfg") << "[train]\ngamma = 0.9\nepochs = 10\n[env]\na_d = 0.25\n";
  const fs::path file = dir / "base.cfg";
  const auto c = load_config(&file, {"epochs=12"});
  EXPECT_EQ(c.train.gamma, 0.9);
  EXPECT_EQ(c.train.epochs, 12);
  EXPECT_EQ(c.env.coupling.a_d, 0.25);
  // A resolved JSON reloads to the same configuration.
  std::ofstream(dir / "resolved.json") << c.resolved_json();
  const fs::path again = dir / "resolved.json";
  EXPECT_EQ(load_config(&again, {}).resolved_json(), c.resolved_json());
}

TEST(Config, ProfileSetsRanges) {
  const auto c = load_config(nullptr, {"profile=dcvc-dc"});
  EXPECT_EQ(c.env.profile.lambda_min, 85.0);
  EXPECT_EQ(c.env.profile.lambda_max, 840.0);
  EXPECT_THROW(load_config(nullptr, {"profile=h264"}), ConfigError);
}

TEST(Config, OutputDirFromEnvironment) {
  ::setenv("RC_OUTPUT_DIR", "/tmp/ratelab_env_out", 1);
  EXPECT_EQ(resolve({}).output_dir, "/tmp/ratelab_env_out");
  ::unsetenv("RC_OUTPUT_DIR");
  EXPECT_EQ(resolve({}).output_dir, "run");
  CommonArgs a;
  a.seed = 77;
  EXPECT_EQ(resolve(a).train.seed, 77u);
}

TEST(Train, SmokeAndResolvedConfig) {
  const auto dir = test_util::temp_dir("cli_smoke");
  std::ostringstream out;
  std::ostringstream err;
  TrainArgs args{common(dir, {"epochs=1", "gamma=0.98"}), false};
  ASSERT_EQ(cmd_train(args, out, err), kOk) << err.str();
  EXPECT_TRUE(fs::exists(dir / "train_log.csv"));
  EXPECT_TRUE(fs::exists(dir / "checkpoints" / "best.ckpt"));
  const auto j = json::parse(slurp(dir / "resolved_config.json"));
  EXPECT_EQ(j.at("gamma").get<double>(), 0.98);
  EXPECT_EQ(j.at("epochs").get<int>(), 1);
}

TEST(Eval, ReportSchema) {
  const auto& run = trained_run();
  const auto dir = test_util::temp_dir("cli_eval");
  EvalArgs args;
  args.common.output_dir = dir;
  args.checkpoint = run / "checkpoints" / "best.ckpt";
  std::ostringstream out;
  std::ostringstream err;
  ASSERT_EQ(cmd_eval(args, out, err), kOk) << err.str();
  const auto j = json::parse(slurp(dir / "eval_report.json"));
  EXPECT_EQ(j.at("method"), "agent");
  EXPECT_EQ(j.at("suite"), "held-out");
  EXPECT_EQ(j.at("seeds").size(), 3u);
  for (const char* k : {"delta_r_pct", "bd_rate_pct", "mean_psnr", "mean_bpp"}) EXPECT_TRUE(j.at("summary").contains(k));
  ASSERT_EQ(j.at("sequences").size(), 12u);
  for (const auto& s : j.at("sequences")) {
    for (const char* k : {"seed", "r_tar", "n_frames", "achieved_bpp", "delta_r_pct", "mean_psnr", "segments"}) {
      EXPECT_TRUE(s.contains(k)) << k;
    }
  }
  EXPECT_EQ(read_logs(dir / "eval_frames.csv").size(), 12u * 12u);
}

TEST(Eval, ConstantTraceEqualsNoTrace) {
  const auto& run = trained_run();
  const auto trace_dir = test_util::temp_dir("cli_trace_const");
  BandwidthTrace::constant(0.6).save_csv(trace_dir / "flat.csv");
  auto run_eval = [&](const std::string& name, bool with_trace) {
    EvalArgs args;
    args.common.output_dir = trace_dir / name;
    args.common.overrides = {"eval_targets=0.6"};
    args.checkpoint = run / "checkpoints" / "best.ckpt";
    if (with_trace) args.trace = trace_dir / "flat.csv";
    std::ostringstream out;
    std::ostringstream err;
    EXPECT_EQ(cmd_eval(args, out, err), kOk) << err.str();
    return slurp(trace_dir / name / "eval_frames.csv");
  };
  EXPECT_EQ(run_eval("plain", false), run_eval("traced", true));
}

TEST(Eval, ThreeSegmentTrace) {
  const auto& run = trained_run();
  const auto dir = test_util::temp_dir("cli_trace3");
  reference_trace(0.6, 12).save_csv(dir / "johnny.csv");
  EvalArgs args;
  args.common.output_dir = dir;
  args.common.overrides = {"eval_frames=36"};
  args.checkpoint = run / "checkpoints" / "best.ckpt";
  args.trace = dir / "johnny.csv";
  std::ostringstream out;
  std::ostringstream err;
  ASSERT_EQ(cmd_eval(args, out, err), kOk) << err.str();
  const auto j = json::parse(slurp(dir / "eval_report.json"));
  for (const auto& s : j.at("sequences")) {
    ASSERT_EQ(s.at("segments").size(), 3u);
    EXPECT_EQ(s.at("segments")[1].at("start_frame"), 12);
  }
  const auto t = reference_trace(0.6, 12);
  EXPECT_NEAR((t.segments[0].r_tar + t.segments[1].r_tar + t.segments[2].r_tar) / 3.0, 0.6, 1e-12);
  EXPECT_NEAR(t.segments[1].r_tar / t.segments[0].r_tar, 0.0173 / 0.0163, 1e-12);
}

TEST(Eval, CorruptVersionIsRuntimeFailure) {
  const auto& run = trained_run();
  const auto dir = test_util::temp_dir("cli_version");
  std::string bytes = slurp(run / "checkpoints" / "best.ckpt");
  bytes[8] = static_cast<char>(bytes[8] + 1);
  std::ofstream(dir / "bad.ckpt", std::ios::binary) << bytes;
  EvalArgs args;
  args.common.config = run / "resolved_config.json";
  args.common.output_dir = dir;
  args.checkpoint = dir / "bad.ckpt";
  std::ostringstream out;
  std::ostringstream err;
  EXPECT_EQ(cmd_eval(args, out, err), kRuntimeFailure);
  EXPECT_NE(err.str().find("version"), std::string::npos) << err.str();
}

TEST(Compare, SelfIsZeroAndAnchorsRequired) {
  const auto dir = test_util::temp_dir("cli_compare");
  CompareArgs args;
  args.common = common(dir);
  args.methods = {"fixed-lambda", "static-model"};
  std::ostringstream out;
  std::ostringstream err;
  ASSERT_EQ(cmd_compare(args, out, err), kOk) << err.str();
  const auto j = json::parse(slurp(dir / "compare.json"));
  const auto cfg = load_config(nullptr, tiny());
  const auto cmp = compare(cfg, nullptr, {"fixed-lambda", "static-model"});
  EXPECT_EQ(*cmp.method("fixed-lambda").bd_rate_pct, 0.0);
  ASSERT_EQ(cmp.anchor_lambdas.size(), 4u);
  EXPECT_EQ(cmp.anchor_lambdas.front(), cfg.env.profile.lambda_min);
  for (std::size_t i = 1; i < 4; ++i) EXPECT_GT(cmp.anchor_lambdas[i], cmp.anchor_lambdas[i - 1]);
  for (const auto& m : cmp.methods) EXPECT_EQ(m.delta_r_pct.size(), 4u);
  EXPECT_NE(out.str().find("static-model"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "curves" / "anchor.csv"));

  args.common.overrides.push_back("anchor_fractions=0,0.5,1");
  EXPECT_EQ(cmd_compare(args, out, err), kUsageError);
  args.common.overrides.pop_back();
  args.methods = {"agent"};
  EXPECT_EQ(cmd_compare(args, out, err), kUsageError);
}

TEST(Oracle, CountsAndDeterminism) {
  const auto a = test_util::temp_dir("cli_oracle_a");
  const auto b = test_util::temp_dir("cli_oracle_b");
  auto run = [](const fs::path& dir, int frames) {
    OracleArgs args;
    args.common.output_dir = dir;
    args.common.overrides = {"oracle_seeds=2"};
    args.frames = frames;
    std::ostringstream out;
    std::ostringstream err;
    EXPECT_EQ(cmd_oracle(args, out, err), kOk) << err.str();
    return out.str();
  };
  const std::string text = run(a, 4);
  EXPECT_NE(text.find("enumerated 331776 sequences"), std::string::npos) << text;
  EXPECT_EQ(json::parse(slurp(a / "oracle.json")).at("enumerated_per_instance"), 331776);
  run(b, 4);
  EXPECT_EQ(slurp(a / "oracle.json"), slurp(b / "oracle.json"));
  run(b, 1);
  EXPECT_EQ(json::parse(slurp(b / "oracle.json")).at("enumerated_per_instance"), 24);

  OracleArgs big;
  big.common.output_dir = b;
  big.frames = 7;
  std::ostringstream out;
  std::ostringstream err;
  EXPECT_EQ(cmd_oracle(big, out, err), kUsageError);
  EXPECT_NE(err.str().find("24^7"), std::string::npos) << err.str();
}

TEST(Ablate, Variants) {
  EXPECT_EQ(ablation_names(), (std::vector<std::string>{"reward", "frames", "action-space", "state"}));
  EXPECT_EQ(ablation_variants("reward").size(), 3u);
  EXPECT_EQ(ablation_variants("action-space").size(), 2u);
  const auto frames = ablation_variants("frames");
  ASSERT_EQ(frames.size(), 4u);
  EXPECT_EQ(frames.front().name, "4");
  EXPECT_EQ(frames.back().name, "32");

  AblateArgs args;
  args.name = "bogus";
  std::ostringstream out;
  std::ostringstream err;
  EXPECT_EQ(cmd_ablate(args, out, err), kUsageError);
  for (const auto& n : ablation_names()) EXPECT_NE(err.str().find(n), std::string::npos) << err.str();
}

TEST(Ablate, PairedRunsShareTheCache) {
  const auto dir = test_util::temp_dir("cli_ablate");
  AblateArgs args;
  args.common = common(dir, {"eval_seeds=2"});
  args.name = "action-space";
  std::ostringstream out;
  std::ostringstream err;
  ASSERT_EQ(cmd_ablate(args, out, err), kOk) << err.str();
  const auto j = json::parse(slurp(dir / "ablate_action-space.json"));
  EXPECT_EQ(j.at("rows").size(), 2u);
  const auto first = slurp(dir / "ablate_action-space.json");
  ASSERT_EQ(cmd_ablate(args, out, err), kOk) << err.str();
  EXPECT_EQ(slurp(dir / "ablate_action-space.json"), first);
}
