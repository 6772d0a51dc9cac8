#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ratelab/baselines.hpp"
#include "ratelab/error.hpp"
#include "ratelab/trainer.hpp"

using namespace ratelab;

namespace {

EnvSetup coupled_setup() { return EnvSetup{}; }

EnvSetup memoryless_setup() {
  EnvSetup s;
  s.coupling = CouplingParams::memoryless();
  return s;
}

// Records the allocation the static controller chose for every frame.
class AllocationProbe final : public Controller {
 public:
  explicit AllocationProbe(StaticModelController& inner) : inner_(inner) {}
  std::string name() const override { return "probe"; }
  void begin_episode(const Environment& env) override { inner_.begin_episode(env); }
  Action act(const ControlContext& ctx) override {
    const Action a = inner_.act(ctx);
    allocations.push_back(inner_.last_allocation());
    return a;
  }
  void observe(const ControlContext& ctx, const Action& action, const StepOutcome& outcome, double reward) override {
    rates.push_back(outcome.r_bpp);
    inner_.observe(ctx, action, outcome, reward);
  }
  std::vector<double> allocations;
  std::vector<double> rates;

 private:
  StaticModelController& inner_;
};

// Memoryless, one hyperbola exponent matching the model's b = 1 / (k + 1),
// and no scene cuts.
EnvSetup on_model_setup() {
  EnvSetup s = memoryless_setup();
  s.sequence.k_min = 1.0;
  s.sequence.k_max = 1.0;
  s.sequence.scene_change_prob = 0.0;
  return s;
}

}  // namespace

TEST(FixedLambda, ConstantAction) {
  const CodecProfile p;
  FixedLambdaController c(512.0, p);
  auto env = coupled_setup().make_env(3, 5);
  const auto res = run_episode(env, c, BandwidthTrace::constant(0.6), {});
  for (const auto& f : res.frames) {
    EXPECT_EQ(f.lambda, 512.0);
    EXPECT_EQ(f.m, 1.0);
  }
  EXPECT_THROW(FixedLambdaController(100.0, p), InvalidArgument);
  EXPECT_THROW(FixedLambdaController(4096.0, p), InvalidArgument);
}

TEST(FixedLambda, AnchorSweepIsMonotone) {
  const CodecProfile p;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    double prev_bpp = 0.0;
    double prev_psnr = -1e9;
    for (double f : {0.0, 1.0 / 3, 2.0 / 3, 1.0}) {
      const double lambda = p.lambda_min * std::pow(p.lambda_max / p.lambda_min, f);
      FixedLambdaController c(std::min(lambda, p.lambda_max), p);
      auto env = coupled_setup().make_env(seed, 16);
      const auto res = run_episode(env, c, BandwidthTrace::constant(0.6), {});
      EXPECT_GT(res.mean_bpp, prev_bpp);
      EXPECT_GT(res.mean_psnr, prev_psnr);
      prev_bpp = res.mean_bpp;
      prev_psnr = res.mean_psnr;
    }
  }
}

TEST(StaticModelUpdate, ExactPredictionKeepsModel) {
  HyperbolicModel m{0.4, 0.6, 0.1, 0.05, 900.0, true};
  const auto next = static_model_update(m, 1300.0, m.predict(1300.0));
  EXPECT_NEAR(next.a, m.a, 1e-15);
  EXPECT_NEAR(next.b, m.b, 1e-15);
}

TEST(StaticModelUpdate, SingleStepArithmetic) {
  HyperbolicModel m{0.5, 0.5, 0.1, 0.05, 1000.0, true};
  // At lambda_ref only `a` moves.
  auto next = static_model_update(m, 1000.0, 0.5 * std::exp(0.1));
  EXPECT_NEAR(next.a, 0.5 * std::exp(0.01), 1e-14);
  EXPECT_NEAR(next.b, 0.5, 1e-15);
  // Away from it b moves by mu_b e ln(lambda / lambda_ref).
  const double lambda = 2000.0;
  next = static_model_update(m, lambda, m.predict(lambda) * std::exp(0.1));
  EXPECT_NEAR(next.b, 0.5 + 0.05 * 0.1 * std::log(2.0), 1e-14);
  // Floor.
  next = static_model_update(m, 4000.0, m.predict(4000.0) * std::exp(-40.0));
  EXPECT_EQ(next.b, HyperbolicModel::kMinB);
  EXPECT_THROW(static_model_update(m, 1000.0, 0.0), InvalidArgument);
}

TEST(StaticModelUpdate, ConvergesOnTrueHyperbola) {
  const HyperbolicModel truth{0.3, 0.4, 0.1, 0.05, 724.0, true};
  HyperbolicModel m{1.0, 0.6, 0.1, 0.05, 724.0, true};
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> log_lambda(std::log(256.0), std::log(2048.0));
  double e = 1.0;
  int steps = 0;
  for (; steps < 200; ++steps) {
    const double lambda = std::exp(log_lambda(gen));
    e = std::log(truth.predict(lambda)) - std::log(m.predict(lambda));
    if (std::abs(e) < 1e-3) break;
    m = static_model_update(m, lambda, truth.predict(lambda));
  }
  EXPECT_LT(std::abs(e), 1e-3) << "after " << steps << " updates";
}

TEST(StaticModelStep, UniformAllocation) {
  EXPECT_NEAR(uniform_allocation({1.0, 4.0, 4, 8}), 1.0, 1e-15);
  EXPECT_NEAR(uniform_allocation({1.0, 5.0, 4, 8}), 0.75, 1e-15);
  EXPECT_THROW(uniform_allocation({1.0, 8.0, 8, 8}), InvalidArgument);
}

TEST(StaticModelStep, OnModelInversionHitsAllocation) {
  const CodecProfile p;
  const auto model = CodecModel::with_signaling(p, CouplingParams::memoryless(), 1920, 1080);
  for (double k : {0.8, 1.0, 1.4}) {
    const FrameDescriptor frame{1.3, k, false, false};
    const double cc = model.coupling.rd_scale * frame.c;
    HyperbolicModel hm;
    hm.lambda_ref = std::sqrt(p.lambda_min * p.lambda_max);
    hm.b = 1.0 / (k + 1.0);
    hm.a = std::pow(cc * k * hm.lambda_ref, hm.b);
    for (double r_tar : {0.8, 1.0, 1.2}) {
      const RateLedger ledger{r_tar, 0.9 * r_tar * 3, 3, 10};
      const Action a = static_model_step(hm, ledger, p, model.overhead_bpp);
      ASSERT_GT(a.lambda, p.lambda_min);
      ASSERT_LT(a.lambda, p.lambda_max);
      EXPECT_EQ(a.m, 1.0);
      const auto out = encode_frame(initial_state(p, r_tar, 10), frame, a, model);
      EXPECT_NEAR(out.r_bpp, uniform_allocation(ledger), 1e-6);
    }
  }
}

TEST(StaticModelStep, DegenerateBudgetGivesLambdaMin) {
  const CodecProfile p;
  HyperbolicModel hm;
  const Action a = static_model_step(hm, {0.5, 10.0, 4, 8}, p, 1e-5);
  EXPECT_EQ(a.lambda, p.lambda_min);
}

TEST(StaticModelController, RateErrorLargerUnderCoupling) {
  auto per_frame_error = [](const EnvSetup& setup) {
    double sum = 0.0;
    int n = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      auto env = setup.make_env(seed, 32);
      StaticModelController ctl(env.profile(), env.model().overhead_bpp);
      AllocationProbe probe(ctl);
      run_episode(env, probe, BandwidthTrace::constant(0.8), {});
      for (std::size_t t = 2; t < probe.rates.size(); ++t) {
        sum += std::abs(probe.rates[t] - probe.allocations[t]) / probe.allocations[t];
        ++n;
      }
    }
    return sum / n;
  };
  EnvSetup coupled = on_model_setup();
  coupled.coupling = CouplingParams{};
  EXPECT_GT(per_frame_error(coupled), per_frame_error(on_model_setup()));
}

TEST(StaticModelController, MeetsTargetOnModel) {
  // Targets inside the range reachable at m = 1.
  const auto setup = on_model_setup();
  for (double r_tar : {0.85, 1.0}) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      auto env = setup.make_env(seed, 32);
      StaticModelController ctl(env.profile(), env.model().overhead_bpp);
      const auto res = run_episode(env, ctl, BandwidthTrace::constant(r_tar), {});
      EXPECT_LE(res.delta_r_pct, 1.0) << "seed " << seed << " target " << r_tar;
    }
  }
}

TEST(Bisection, MatchesClosedFormInverse) {
  const CodecProfile p;
  const auto model = CodecModel::with_signaling(p, CouplingParams::memoryless(), 1920, 1080);
  const FrameDescriptor frame{1.1, 1.2, false, false};
  const SyntheticEnv env(model, {frame});
  const double r_tar = 0.7;
  const auto res = lagrangian_bisection(env, r_tar);
  const double cc = model.coupling.rd_scale * frame.c;
  const double expected = std::pow(r_tar - model.overhead_bpp, frame.k + 1.0) / (cc * frame.k);
  EXPECT_EQ(res.saturated, 0);
  EXPECT_LE(res.iterations, 60);
  EXPECT_LE(std::abs(res.achieved_bpp - r_tar), 1e-4 * r_tar);
  EXPECT_NEAR(res.lambda / expected, 1.0, 3e-4);
}

TEST(Bisection, SaturatesAtEndpoints) {
  auto env = memoryless_setup().make_env(4, 6);
  auto hi = lagrangian_bisection(env, 50.0);
  EXPECT_EQ(hi.saturated, 1);
  EXPECT_EQ(hi.lambda, env.profile().lambda_max);
  auto lo = lagrangian_bisection(env, 1e-3);
  EXPECT_EQ(lo.saturated, -1);
  EXPECT_EQ(lo.lambda, env.profile().lambda_min);
  auto mid = lagrangian_bisection(env, 0.6, 1e-12, 60);
  EXPECT_LE(mid.iterations, 60);
}

TEST(Oracle, Sizes) {
  EXPECT_EQ(oracle_size(24, 4), 331'776u);
  EXPECT_EQ(oracle_size(24, 0), 1u);
  EXPECT_EQ(oracle_size(1000, 10), std::numeric_limits<std::uint64_t>::max());
  const auto g = OracleGrid::spanning(CodecProfile{}, 8, 3);
  EXPECT_EQ(g.size(), 24u);
  EXPECT_EQ(g.lambdas.front(), 256.0);
  EXPECT_EQ(g.lambdas.back(), 2048.0);
  EXPECT_EQ(g.ms, (std::vector<double>{0.5, 0.75, 1.0}));
  EXPECT_EQ(g.action(4), (Action{g.lambdas[1], 0.75}));
}

TEST(Oracle, SingleFrameIsGridArgmin) {
  auto env = coupled_setup().make_env(9, 1);
  const auto g = OracleGrid::spanning(env.profile(), 8, 3);
  const double pen = 1.0 / env.profile().lambda_min;
  for (double r_tar : {0.3, 0.6, 1.2}) {
    double best = 1e300;
    Action arg;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const auto o = encode_frame(initial_state(env.profile(), r_tar, 1), env.frame(0), g.action(i), env.model());
      const double j = o.d_mse + pen * std::max(0.0, o.r_bpp - r_tar);
      if (j < best) {
        best = j;
        arg = g.action(i);
      }
    }
    const auto res = oracle_search(env.frames(), env.model(), r_tar, g);
    EXPECT_EQ(res.actions.front(), arg);
    EXPECT_NEAR(res.objective, best, 1e-15);
    EXPECT_EQ(res.enumerated, 24u);
  }
}

TEST(Oracle, MemorylessLagrangianSeparates) {
  OracleOptions opt;
  opt.mode = OracleMode::kLagrangian;
  opt.penalty = 1.0 / 700.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto env = memoryless_setup().make_env(seed, 3);
    const auto g = OracleGrid::spanning(env.profile(), 8, 3);
    const auto res = oracle_search(env.frames(), env.model(), 0.6, g, opt);
    for (int t = 0; t < 3; ++t) {
      double best = 1e300;
      Action arg;
      for (std::size_t i = 0; i < g.size(); ++i) {
        const auto o = encode_frame(initial_state(env.profile(), 0.6, 3), env.frame(t), g.action(i), env.model());
        const double j = o.d_mse + opt.penalty * o.r_bpp;
        if (j < best) {
          best = j;
          arg = g.action(i);
        }
      }
      EXPECT_EQ(res.actions[t], arg) << "seed " << seed << " frame " << t;
    }
  }
}

TEST(Oracle, CouplingChangesTheOptimum) {
  int differs = 0;
  int memoryless_differs = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    for (bool coupled : {true, false}) {
      auto env = (coupled ? coupled_setup() : memoryless_setup()).make_env(seed, 3);
      const auto g = OracleGrid::spanning(env.profile(), 8, 3);
      const auto joint = oracle_search(env.frames(), env.model(), 0.6, g);
      const auto indep = independent_solution(env.frames(), env.model(), 0.6, g);
      const bool d = joint.actions != indep.actions;
      (coupled ? differs : memoryless_differs) += d ? 1 : 0;
      EXPECT_LE(joint.objective, indep.objective);
    }
  }
  EXPECT_GE(differs, 10);
  EXPECT_EQ(memoryless_differs, 0);
}

TEST(Oracle, NoRandomSequenceBeatsIt) {
  auto env = coupled_setup().make_env(17, 3);
  const auto g = OracleGrid::spanning(env.profile(), 8, 3);
  const auto res = oracle_search(env.frames(), env.model(), 0.5, g);
  std::mt19937_64 gen(1);
  std::uniform_int_distribution<std::size_t> pick(0, g.size() - 1);
  for (int i = 0; i < 500; ++i) {
    std::vector<Action> s{g.action(pick(gen)), g.action(pick(gen)), g.action(pick(gen))};
    const auto e = evaluate_sequence(env.frames(), env.model(), 0.5, s, res.mode, res.penalty);
    EXPECT_GE(e.objective, res.objective);
  }
  const auto replay = evaluate_sequence(env.frames(), env.model(), 0.5, res.actions, res.mode, res.penalty);
  EXPECT_EQ(replay.objective, res.objective);
}

TEST(Oracle, DoublingPenaltyNeverRaisesRate) {
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    auto env = coupled_setup().make_env(seed, 3);
    const auto g = OracleGrid::spanning(env.profile(), 8, 3);
    double prev = 1e300;
    for (double pen : {1e-4, 2e-4, 4e-4, 8e-4, 1.6e-3, 3.2e-3}) {
      OracleOptions opt;
      opt.penalty = pen;
      const auto res = oracle_search(env.frames(), env.model(), 0.5, g, opt);
      EXPECT_LE(res.avg_bpp, prev + 1e-15);
      prev = res.avg_bpp;
    }
  }
}

TEST(Oracle, ConstrainedModeFlagsInfeasibleTargets) {
  auto env = coupled_setup().make_env(2, 2);
  const auto g = OracleGrid::spanning(env.profile(), 8, 3);
  OracleOptions opt;
  opt.mode = OracleMode::kConstrained;
  const auto ok = oracle_search(env.frames(), env.model(), 0.6, g, opt);
  EXPECT_TRUE(ok.feasible);
  EXPECT_LE(ok.avg_bpp, 0.6);
  const auto bad = oracle_search(env.frames(), env.model(), 1e-3, g, opt);
  EXPECT_FALSE(bad.feasible);
}

TEST(Oracle, RejectsOversizedInstances) {
  auto env = coupled_setup().make_env(2, 7);
  const auto g = OracleGrid::spanning(env.profile(), 8, 3);
  EXPECT_THROW(oracle_search(env.frames(), env.model(), 0.6, g), BudgetExceeded);
  auto env6 = coupled_setup().make_env(2, 6);
  try {
    oracle_search(env6.frames(), env6.model(), 0.6, g);
    FAIL() << "expected BudgetExceeded";
  } catch (const BudgetExceeded& e) {
    EXPECT_NE(std::string(e.what()).find("191102976"), std::string::npos) << e.what();
  }
}

TEST(Oracle, JsonExport) {
  auto env = coupled_setup().make_env(2, 2);
  const auto g = OracleGrid::spanning(env.profile(), 8, 3);
  const auto res = oracle_search(env.frames(), env.model(), 0.6, g);
  const std::string j = oracle_json(res);
  for (const char* key : {"\"mode\"", "\"penalty\"", "\"objective\"", "\"frames\"", "\"lambda\"", "\"d_mse\""}) {
    EXPECT_NE(j.find(key), std::string::npos) << key;
  }
  EXPECT_EQ(oracle_mode_from_string(to_string(OracleMode::kConstrained)), OracleMode::kConstrained);
  EXPECT_THROW(oracle_mode_from_string("greedy"), InvalidArgument);
}
