#pragma once

// Closed-loop coding of one sequence by a controller, with per-window rate
// accounting and rewards.

#include <string>
#include <vector>

#include "ratelab/budget.hpp"
#include "ratelab/env.hpp"
#include "ratelab/metrics.hpp"
#include "ratelab/reward.hpp"

namespace ratelab {

struct ControlContext {
  const Environment& env;
  const RateLedger& ledger;  // current window, before this frame
  BudgetContext budget;
  const BudgetWindow& window;
};

class Controller {
 public:
  virtual ~Controller() = default;

  virtual std::string name() const = 0;
  // Called after env.reset() and before the first frame.
  virtual void begin_episode(const Environment& /*env*/) {}
  virtual Action act(const ControlContext& ctx) = 0;
  virtual void observe(const ControlContext& /*ctx*/, const Action& /*action*/, const StepOutcome& /*outcome*/,
                       double /*reward*/) {}
};

struct WindowResult {
  BudgetWindow window;
  double achieved_bpp = 0.0;
  double delta_r_pct = 0.0;
};

struct EpisodeResult {
  std::vector<FrameLogRow> frames;
  std::vector<WindowResult> windows;
  double mean_bpp = 0.0;
  double mean_distortion = 0.0;
  double mean_psnr = 0.0;
  double episode_return = 0.0;
  // Frame-weighted mean of the per-window rate errors.
  double delta_r_pct = 0.0;
};

struct EpisodeOptions {
  RewardConfig reward;
  double r_tar_scale = 1.0;
};

// Resets `env` to the first window's target and codes every frame.
EpisodeResult run_episode(Environment& env, Controller& controller, const BandwidthTrace& trace,
                          const EpisodeOptions& options);

}  // namespace ratelab
