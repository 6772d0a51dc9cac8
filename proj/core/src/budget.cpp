#include "ratelab/budget.hpp"

#include "ratelab/error.hpp"

namespace ratelab {

std::vector<BudgetWindow> budget_windows(const BandwidthTrace& trace, int n_frames) {
  trace.validate();
  if (n_frames < 1) throw InvalidArgument("budget windows need at least one frame");
  std::vector<BudgetWindow> out;
  for (std::size_t i = 0; i < trace.segments.size(); ++i) {
    const int start = trace.segments[i].start_frame;
    if (start >= n_frames) break;
    const int end = i + 1 < trace.segments.size() ? std::min(trace.segments[i + 1].start_frame, n_frames) : n_frames;
    out.push_back({start, end - start, trace.segments[i].r_tar});
  }
  return out;
}

BudgetTracker::BudgetTracker(const BandwidthTrace& trace, int n_frames, double r_tar_scale)
    : windows_(budget_windows(trace, n_frames)), r_tar_scale_(r_tar_scale) {
  if (!(r_tar_scale > 0.0)) throw InvalidArgument("r_tar_scale must be positive");
  ledger_ = {windows_.front().r_tar, 0.0, 0, windows_.front().length};
}

void BudgetTracker::begin_frame(int t) {
  if (open_) throw InvalidArgument("previous frame was not recorded");
  if (t != next_frame_) throw InvalidArgument("frames must be coded in order");
  const auto& w = windows_.at(window_);
  if (t >= w.start + w.length) {
    if (window_ + 1 >= windows_.size()) throw InvalidArgument("frame past the end of the episode");
    ++window_;
    const auto& nw = windows_[window_];
    ledger_ = {nw.r_tar, 0.0, 0, nw.length};
  }
  open_ = true;
}

void BudgetTracker::record(double r_bpp) {
  if (!open_) throw InvalidArgument("record() without begin_frame()");
  ledger_.spent_bpp += r_bpp;
  ledger_.t += 1;
  ++next_frame_;
  open_ = false;
}

BudgetContext BudgetTracker::context() const {
  BudgetContext c;
  c.r_tar = ledger_.r_tar;
  c.r_tar_scale = r_tar_scale_;
  c.r_rem = ledger_.t == 0 ? 0.0 : remaining_rate_deviation(ledger_);
  c.window_frames = ledger_.n_frames;
  c.frames_left = ledger_.n_frames - ledger_.t;
  return c;
}

}  // namespace ratelab
