#include "ratelab/episode.hpp"

#include "ratelab/error.hpp"

namespace ratelab {

EpisodeResult run_episode(Environment& env, Controller& controller, const BandwidthTrace& trace,
                          const EpisodeOptions& options) {
  const int n = env.n_frames();
  BudgetTracker budget(trace, n, options.r_tar_scale);
  env.reset(budget.windows().front().r_tar);
  controller.begin_episode(env);

  EpisodeResult result;
  result.frames.reserve(static_cast<std::size_t>(n));
  std::vector<double> window_spent(budget.windows().size(), 0.0);
  double psnr_sum = 0.0;
  for (int t = 0; t < n; ++t) {
    budget.begin_frame(t);
    if (budget.window_starts_here()) env.set_target(budget.window().r_tar);
    const RateLedger before = budget.ledger();
    const ControlContext ctx{env, before, budget.context(), budget.window()};
    const Action action = controller.act(ctx);
    StepOutcome out;
    try {
      out = env.step(action);
    } catch (const InvalidArgument& e) {
      throw InvalidArgument(controller.name() + " at frame " + std::to_string(t) + ": " + e.what());
    }
    budget.record(out.r_bpp);
    const auto& ledger = budget.ledger();
    const double reward =
        frame_reward(out.d_mse, ledger, weight_schedule(ledger.t, ledger.n_frames, options.reward));
    controller.observe(ctx, action, out, reward);

    FrameLogRow row;
    row.poc = t;
    row.lambda = action.lambda;
    row.m = action.m;
    row.r_bpp = out.r_bpp;
    row.d_mse = out.d_mse;
    row.psnr = psnr(out.d_mse);
    row.r_tar = ledger.r_tar;
    row.reward = reward;
    result.frames.push_back(row);

    window_spent[budget.window_index()] += out.r_bpp;
    result.mean_bpp += out.r_bpp;
    result.mean_distortion += out.d_mse;
    psnr_sum += row.psnr;
    result.episode_return += reward;
  }
  result.mean_bpp /= n;
  result.mean_distortion /= n;
  result.mean_psnr = psnr_sum / n;
  for (std::size_t i = 0; i < budget.windows().size(); ++i) {
    const auto& w = budget.windows()[i];
    WindowResult wr{w, window_spent[i] / w.length, 0.0};
    wr.delta_r_pct = delta_r(wr.achieved_bpp, w.r_tar);
    result.delta_r_pct += wr.delta_r_pct * w.length;
    result.windows.push_back(wr);
  }
  result.delta_r_pct /= n;
  return result;
}

}  // namespace ratelab
