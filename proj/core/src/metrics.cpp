#include "ratelab/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <json.hpp>

#include "csv_util.hpp"
#include "ratelab/error.hpp"

namespace ratelab {

double delta_r(double achieved_avg_bpp, double r_tar) {
  if (!(r_tar > 0.0) || !std::isfinite(r_tar)) throw InvalidArgument("delta_r needs a positive target");
  if (!std::isfinite(achieved_avg_bpp)) throw InvalidArgument("delta_r needs a finite achieved rate");
  return std::abs(r_tar - achieved_avg_bpp) / r_tar * 100.0;
}

double psnr(double d_mse) {
  if (!(d_mse > 0.0) || !std::isfinite(d_mse)) throw InvalidArgument("psnr needs a positive distortion");
  return -10.0 * std::log10(d_mse);
}

RdCurve checked_curve(const RdCurve& curve) {
  if (curve.size() < 4) throw InvalidArgument("an R-D curve needs at least 4 points");
  RdCurve sorted = curve;
  std::sort(sorted.begin(), sorted.end(),
            [](const RdPoint& a, const RdPoint& b) { return a.bpp < b.bpp || (a.bpp == b.bpp && a.psnr < b.psnr); });
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (!(sorted[i].bpp > 0.0) || !std::isfinite(sorted[i].bpp) || !std::isfinite(sorted[i].psnr)) {
      throw InvalidArgument("R-D curve points need positive finite bpp and finite PSNR");
    }
    if (i > 0 && (sorted[i].bpp <= sorted[i - 1].bpp || sorted[i].psnr < sorted[i - 1].psnr)) {
      throw InvalidArgument("R-D curve is not monotone");
    }
  }
  return sorted;
}

namespace {

struct Cubic {
  double center = 0.0;
  double scale = 1.0;
  Eigen::Vector4d coef = Eigen::Vector4d::Zero();

  double operator()(double x) const {
    const double z = (x - center) / scale;
    return coef(0) + z * (coef(1) + z * (coef(2) + z * coef(3)));
  }
};

Cubic fit_log_rate(const RdCurve& c) {
  const auto n = static_cast<Eigen::Index>(c.size());
  Cubic f;
  const double lo = c.front().psnr;
  const double hi = c.back().psnr;
  f.center = 0.5 * (lo + hi);
  f.scale = hi > lo ? 0.5 * (hi - lo) : 1.0;
  Eigen::MatrixXd a(n, 4);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double z = (c[static_cast<std::size_t>(i)].psnr - f.center) / f.scale;
    a.row(i) << 1.0, z, z * z, z * z * z;
    y(i) = std::log10(c[static_cast<std::size_t>(i)].bpp);
  }
  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  if (qr.rank() < 4) throw InvalidArgument("R-D curve needs at least 4 distinct PSNR values");
  f.coef = qr.solve(y);
  return f;
}

}  // namespace

double bd_rate(const RdCurve& anchor, const RdCurve& test) {
  const RdCurve a = checked_curve(anchor);
  const RdCurve b = checked_curve(test);
  const double lo = std::max(a.front().psnr, b.front().psnr);
  const double hi = std::min(a.back().psnr, b.back().psnr);
  if (!(hi > lo)) throw InvalidArgument("R-D curves have no overlapping PSNR interval");
  const Cubic fa = fit_log_rate(a);
  const Cubic fb = fit_log_rate(b);
  constexpr int kPoints = 1000;
  const double h = (hi - lo) / (kPoints - 1);
  double integral = 0.0;
  for (int i = 0; i < kPoints; ++i) {
    const double x = i + 1 == kPoints ? hi : lo + h * i;
    const double w = (i == 0 || i + 1 == kPoints) ? 0.5 : 1.0;
    integral += w * (fb(x) - fa(x));
  }
  const double avg = integral * h / (hi - lo);
  return (std::pow(10.0, avg) - 1.0) * 100.0;
}

void emit_logs(const std::vector<FrameLogRow>& rows, const std::filesystem::path& path) {
  auto out = csv::open_for_write(path);
  out << kFrameLogHeader << '\n';
  for (const auto& r : rows) {
    out << r.poc << ',' << csv::format17(r.lambda) << ',' << csv::format17(r.m) << ',' << csv::format17(r.r_bpp) << ','
        << csv::format17(r.d_mse) << ',' << csv::format17(r.psnr) << ',' << csv::format17(r.r_tar) << ','
        << csv::format17(r.reward) << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<FrameLogRow> read_logs(const std::filesystem::path& path) {
  std::vector<FrameLogRow> rows;
  for (const auto& f : csv::read_rows(path, kFrameLogHeader)) {
    FrameLogRow r;
    r.poc = static_cast<int>(csv::to_int(f[0]));
    r.lambda = csv::to_double(f[1]);
    r.m = csv::to_double(f[2]);
    r.r_bpp = csv::to_double(f[3]);
    r.d_mse = csv::to_double(f[4]);
    r.psnr = csv::to_double(f[5]);
    r.r_tar = csv::to_double(f[6]);
    r.reward = csv::to_double(f[7]);
    rows.push_back(r);
  }
  return rows;
}

void emit_curve(const RdCurve& points, const std::filesystem::path& path) {
  auto out = csv::open_for_write(path);
  out << kCurveHeader << '\n';
  for (const auto& p : points) out << csv::format17(p.bpp) << ',' << csv::format17(p.psnr) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

RdCurve read_curve(const std::filesystem::path& path) {
  RdCurve c;
  for (const auto& f : csv::read_rows(path, kCurveHeader)) c.push_back({csv::to_double(f[0]), csv::to_double(f[1])});
  return c;
}

std::string summary_json(const EvalSummary& s) {
  nlohmann::ordered_json j;
  j["delta_r_pct"] = s.delta_r_pct;
  j["bd_rate_pct"] = s.bd_rate_pct ? nlohmann::ordered_json(*s.bd_rate_pct) : nlohmann::ordered_json(nullptr);
  j["mean_psnr"] = s.mean_psnr;
  j["mean_bpp"] = s.mean_bpp;
  return j.dump(2);
}

}  // namespace ratelab
