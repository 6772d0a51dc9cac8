#pragma once

// Per-frame reward: r = -(delta * D + eta * |R_rem| / R_tar), with the rate
// term multiplied by zeta when the budget is overspent.

namespace ratelab {

struct RateLedger {
  double r_tar = 0.0;      // target average rate, bpp
  double spent_bpp = 0.0;  // rate spent so far in the budget window
  int t = 0;               // frames encoded so far in the window
  int n_frames = 0;        // window length
};

// R_rem = r_tar - spent / t. Positive means under-spend. Throws for t = 0.
double remaining_rate_deviation(const RateLedger& ledger);

struct RewardWeights {
  double delta = 40.0;
  double eta = 0.0;
  double zeta = 2.0;
};

struct RewardConfig {
  double delta = 40.0;
  double eta_gain = 20.0;       // eta = eta_gain * poc / N before the last frame
  double eta_terminal = 200.0;  // eta at the last frame
  double zeta = 2.0;
  bool per_frame_rate_term = true;  // r_rem
  bool terminal_rate_term = true;   // r_acc

  void validate() const;
};

// poc is the 1-based count of frames encoded in the window, 1 <= poc <= N.
RewardWeights weight_schedule(int poc, int n_frames, const RewardConfig& cfg);

double frame_reward(double d_mse, const RateLedger& ledger, const RewardWeights& weights);

// Hook for adapting reward weights every `period` training steps from a
// validation signal. The default keeps the configured schedule unchanged.
class RewardWeightAdapter {
 public:
  explicit RewardWeightAdapter(int period = 0) : period_(period) {}
  virtual ~RewardWeightAdapter() = default;

  // Called once per training step with the latest validation score (lower is
  // better). Returns true when the adapter fired on this step.
  bool on_step(long long step, double validation_score, RewardConfig& cfg);

 protected:
  virtual void adapt(double /*validation_score*/, RewardConfig& /*cfg*/) {}

 private:
  int period_;
};

}  // namespace ratelab
