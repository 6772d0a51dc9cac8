#include "ratelab/reward.hpp"

#include <cmath>

#include "ratelab/error.hpp"

namespace ratelab {

double remaining_rate_deviation(const RateLedger& ledger) {
  if (ledger.t <= 0) throw InvalidArgument("remaining-rate deviation needs at least one encoded frame");
  return ledger.r_tar - ledger.spent_bpp / static_cast<double>(ledger.t);
}

void RewardConfig::validate() const {
  if (!(delta >= 0.0) || !(eta_gain >= 0.0) || !(eta_terminal >= 0.0)) {
    throw InvalidArgument("reward weights must be nonnegative");
  }
  if (!(zeta >= 1.0)) throw InvalidArgument("over-allocation gain zeta must be >= 1");
}

RewardWeights weight_schedule(int poc, int n_frames, const RewardConfig& cfg) {
  if (n_frames < 1 || poc < 1 || poc > n_frames) throw InvalidArgument("weight schedule needs 1 <= poc <= N");
  RewardWeights w;
  w.delta = cfg.delta;
  w.zeta = cfg.zeta;
  if (poc == n_frames && cfg.terminal_rate_term) {
    w.eta = cfg.eta_terminal;
  } else if (cfg.per_frame_rate_term) {
    w.eta = cfg.eta_gain * static_cast<double>(poc) / static_cast<double>(n_frames);
  } else {
    w.eta = 0.0;
  }
  return w;
}

double frame_reward(double d_mse, const RateLedger& ledger, const RewardWeights& weights) {
  if (!(ledger.r_tar > 0.0)) throw InvalidArgument("reward needs a positive target rate");
  if (!(d_mse >= 0.0)) throw InvalidArgument("distortion must be nonnegative");
  const double rem = remaining_rate_deviation(ledger);
  double rate_term = weights.eta * std::abs(rem) / ledger.r_tar;
  if (rem < 0.0) rate_term *= weights.zeta;
  return -(weights.delta * d_mse + rate_term);
}

bool RewardWeightAdapter::on_step(long long step, double validation_score, RewardConfig& cfg) {
  if (period_ <= 0 || step <= 0 || step % period_ != 0) return false;
  adapt(validation_score, cfg);
  return true;
}

}  // namespace ratelab
