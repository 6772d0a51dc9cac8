#pragma once

// Non-learning controllers and the exhaustive oracle.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "ratelab/episode.hpp"

namespace ratelab {

// Codes every frame with (lambda0, m_max).
class FixedLambdaController final : public Controller {
 public:
  FixedLambdaController(double lambda0, const CodecProfile& profile);

  std::string name() const override { return "fixed-lambda"; }
  Action act(const ControlContext& ctx) override;

  double lambda() const { return lambda0_; }

 private:
  double lambda0_;
  double m_;
};

// R(lambda) = a * (lambda / lambda_ref)^b, rate net of signaling overhead.
struct HyperbolicModel {
  double a = 1.0;
  double b = 0.5;
  double mu_a = 0.1;
  double mu_b = 0.05;
  double lambda_ref = 1.0;
  bool initialized = false;

  static constexpr double kMinB = 0.05;

  double predict(double lambda) const { return a * std::pow(lambda / lambda_ref, b); }
  double invert(double rate) const { return lambda_ref * std::pow(rate / a, 1.0 / b); }
  // Fits `a` through one observation keeping b.
  void initialize(double lambda, double rate);
};

// e = ln r - ln(predict(lambda)); ln a += mu_a e; b += mu_b e ln(lambda / lambda_ref);
// b >= 0.05.
HyperbolicModel static_model_update(const HyperbolicModel& model, double lambda_used, double r_actual);

// Uniform per-window allocation through per-class hyperbolic models. The
// first two frames of a sequence (intra and first inter) are coded at the
// lambda midpoint to initialize the models. Models are referenced to the
// geometric midpoint of the lambda range.
class StaticModelController final : public Controller {
 public:
  StaticModelController(const CodecProfile& profile, double overhead_bpp, HyperbolicModel prototype = {});

  std::string name() const override { return "static-model"; }
  void begin_episode(const Environment& env) override;
  Action act(const ControlContext& ctx) override;
  void observe(const ControlContext& ctx, const Action& action, const StepOutcome& outcome, double reward) override;

  const HyperbolicModel& intra_model() const { return intra_; }
  const HyperbolicModel& inter_model() const { return inter_; }
  // Allocation of the last act() call, bpp including overhead.
  double last_allocation() const { return last_allocation_; }

 private:
  CodecProfile profile_;
  double overhead_;
  HyperbolicModel prototype_;
  HyperbolicModel intra_;
  HyperbolicModel inter_;
  double last_allocation_ = 0.0;
};

// Frame budget of static_model_step: remaining window budget over the frames
// left, uniform weights.
double uniform_allocation(const RateLedger& ledger);

// Action for the current frame given a model and the window ledger.
Action static_model_step(const HyperbolicModel& model, const RateLedger& ledger, const CodecProfile& profile,
                         double overhead_bpp);

struct BisectionResult {
  double lambda = 0.0;
  double achieved_bpp = 0.0;
  int iterations = 0;
  // -1: target below the lowest achievable rate, +1: above the highest.
  int saturated = 0;
};

// Global lambda (uniform weights) whose fixed-lambda episode on a copy of the
// environment meets r_tar within rel_tol, or after max_iterations.
BisectionResult lagrangian_bisection(const SyntheticEnv& replica, double r_tar, double rel_tol = 1e-4,
                                     int max_iterations = 60);

enum class OracleMode { kPenalized, kLagrangian, kConstrained };

std::string to_string(OracleMode mode);
OracleMode oracle_mode_from_string(const std::string& name);

struct OracleGrid {
  std::vector<double> lambdas;
  std::vector<double> ms;

  // n_lambda log-spaced lambdas and n_m linearly spaced m over the profile.
  static OracleGrid spanning(const CodecProfile& profile, int n_lambda, int n_m);
  std::size_t size() const { return lambdas.size() * ms.size(); }
  // Index order: lambda-major, m-minor.
  Action action(std::size_t i) const { return {lambdas[i / ms.size()], ms[i % ms.size()]}; }
};

struct OracleOptions {
  OracleMode mode = OracleMode::kPenalized;
  double penalty = 0.0;  // Lambda; 0 selects 1 / lambda_min of the profile
  int max_frames = 6;
  std::uint64_t max_sequences = 10'000'000;
};

struct OracleResult {
  std::vector<Action> actions;
  std::vector<double> r_bpp;
  std::vector<double> d_mse;
  double objective = 0.0;
  double avg_bpp = 0.0;
  double sum_distortion = 0.0;
  bool feasible = true;
  std::uint64_t enumerated = 0;
  OracleMode mode = OracleMode::kPenalized;
  double penalty = 0.0;
  double r_tar = 0.0;
};

double effective_penalty(const OracleOptions& options, const CodecProfile& profile);

// Penalized: sum D + Lambda * max(0, sum R - N r_tar).
// Lagrangian: sum D + Lambda * (sum R - N r_tar).
// Constrained: sum D; sequences with avg R > r_tar are infeasible.
double oracle_objective(double sum_d, double sum_r, int n, double r_tar, OracleMode mode, double penalty);

// grid.size()^n, saturating at UINT64_MAX.
std::uint64_t oracle_size(std::size_t grid_size, int n);

// Exhaustive search over grid^N with exact replay. Ties keep the first
// sequence in lambda-major lexicographic order. Throws BudgetExceeded when
// the instance is larger than the configured bounds. In constrained mode an
// instance without a feasible sequence returns the lowest-rate sequence with
// feasible = false.
OracleResult oracle_search(const std::vector<FrameDescriptor>& frames, const CodecModel& model, double r_tar,
                           const OracleGrid& grid, const OracleOptions& options = {});

// The same search planned on a coupling-free copy of the model (each frame
// treated as independent of its reference), then replayed on `model`. In
// Lagrangian mode the plan is the per-frame argmin.
OracleResult independent_solution(const std::vector<FrameDescriptor>& frames, const CodecModel& model, double r_tar,
                                  const OracleGrid& grid, const OracleOptions& options = {});

// Replays an action sequence on `model` and scores it.
OracleResult evaluate_sequence(const std::vector<FrameDescriptor>& frames, const CodecModel& model, double r_tar,
                               const std::vector<Action>& actions, OracleMode mode, double penalty);

// {mode, penalty, r_tar, objective, feasible, enumerated, avg_bpp, frames: [{lambda, m, r_bpp, d_mse}]}.
std::string oracle_json(const OracleResult& result);

}  // namespace ratelab
