#pragma once

// Rate accuracy, PSNR, BD-rate and the per-frame / curve CSV files.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace ratelab {

// |r_tar - achieved| / r_tar * 100.
double delta_r(double achieved_avg_bpp, double r_tar);

// 10 log10(1 / d) for MSE on [0, 1]-normalized pixels.
double psnr(double d_mse);

struct RdPoint {
  double bpp = 0.0;
  double psnr = 0.0;

  bool operator==(const RdPoint&) const = default;
};

using RdCurve = std::vector<RdPoint>;

// Sorted copy of the curve; throws unless it has at least 4 points with
// strictly increasing bpp and nondecreasing PSNR.
RdCurve checked_curve(const RdCurve& curve);

// Least-squares cubic fit of log10(bpp) against PSNR for each curve, averaged
// over the shared PSNR interval with a 1000-point trapezoid rule. Negative
// means the test curve needs fewer bits for the same quality.
double bd_rate(const RdCurve& anchor, const RdCurve& test);

struct FrameLogRow {
  int poc = 0;
  double lambda = 0.0;
  double m = 1.0;
  double r_bpp = 0.0;
  double d_mse = 0.0;
  double psnr = 0.0;
  double r_tar = 0.0;
  double reward = 0.0;

  bool operator==(const FrameLogRow&) const = default;
};

inline constexpr const char* kFrameLogHeader = "poc,lambda,m,r_bpp,d_mse,psnr,r_tar,reward";
inline constexpr const char* kCurveHeader = "bpp,psnr";

void emit_logs(const std::vector<FrameLogRow>& rows, const std::filesystem::path& path);
std::vector<FrameLogRow> read_logs(const std::filesystem::path& path);

void emit_curve(const RdCurve& points, const std::filesystem::path& path);
RdCurve read_curve(const std::filesystem::path& path);

struct EvalSummary {
  double delta_r_pct = 0.0;
  std::optional<double> bd_rate_pct;
  double mean_psnr = 0.0;
  double mean_bpp = 0.0;
};

// {"delta_r_pct", "bd_rate_pct" (null when absent), "mean_psnr", "mean_bpp"}.
std::string summary_json(const EvalSummary& summary);

}  // namespace ratelab
