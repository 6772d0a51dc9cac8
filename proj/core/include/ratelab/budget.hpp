#pragma once

// Rate budget windows. Every segment of a bandwidth trace is its own budget
// window: its ledger starts empty at the segment's first frame and the
// reward schedule runs over the window length.

#include <cstddef>
#include <vector>

#include "ratelab/env.hpp"
#include "ratelab/reward.hpp"

namespace ratelab {

// Budget context of the current rate window (the whole sequence for a
// constant target, a trace segment otherwise).
struct BudgetContext {
  double r_tar = 0.0;
  double r_tar_scale = 1.0;
  double r_rem = 0.0;   // signed remaining-rate deviation, 0 before any frame
  int frames_left = 0;  // including the current frame
  int window_frames = 0;
};

struct BudgetWindow {
  int start = 0;
  int length = 0;
  double r_tar = 0.0;
};

// Windows of `trace` clipped to an n-frame episode. Segments starting at or
// after n are dropped.
std::vector<BudgetWindow> budget_windows(const BandwidthTrace& trace, int n_frames);

class BudgetTracker {
 public:
  BudgetTracker(const BandwidthTrace& trace, int n_frames, double r_tar_scale = 1.0);

  // Frame t must be the next frame of the episode.
  void begin_frame(int t);
  // Books the rate of the frame opened by begin_frame.
  void record(double r_bpp);

  std::size_t window_index() const { return window_; }
  const BudgetWindow& window() const { return windows_.at(window_); }
  const std::vector<BudgetWindow>& windows() const { return windows_; }
  bool window_starts_here() const { return ledger_.t == 0; }
  // Ledger of the current window (before the open frame until record()).
  const RateLedger& ledger() const { return ledger_; }
  BudgetContext context() const;

 private:
  std::vector<BudgetWindow> windows_;
  double r_tar_scale_;
  std::size_t window_ = 0;
  int next_frame_ = 0;
  bool open_ = false;
  RateLedger ledger_;
};

}  // namespace ratelab
