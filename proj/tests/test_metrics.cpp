#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <json.hpp>
#include <random>
#include <sstream>

#include "ratelab/error.hpp"
#include "ratelab/metrics.hpp"
#include "test_util.hpp"

using namespace ratelab;

namespace {

const RdCurve kAnchor{{0.21, 30.4}, {0.38, 33.1}, {0.77, 36.2}, {1.52, 38.9}, {2.60, 40.3}};

RdCurve scaled(const RdCurve& c, double ratio) {
  RdCurve out = c;
  for (auto& p : out) p.bpp *= ratio;
  return out;
}

}  // namespace

TEST(DeltaR, Examples) {
  EXPECT_EQ(delta_r(0.1, 0.1), 0.0);
  EXPECT_NEAR(delta_r(0.105, 0.100), 5.0, 1e-9);
  EXPECT_NEAR(delta_r(0.095, 0.100), 5.0, 1e-9);
  EXPECT_THROW(delta_r(0.1, 0.0), InvalidArgument);
  EXPECT_THROW(delta_r(0.1, -1.0), InvalidArgument);
}

TEST(DeltaR, ScaleInvariant) {
  for (double k : {1e-3, 0.5, 3.0, 1e4}) {
    EXPECT_NEAR(delta_r(k * 0.93, k * 0.8), delta_r(0.93, 0.8), 1e-9);
  }
}

TEST(Psnr, Examples) {
  EXPECT_EQ(psnr(1.0), 0.0);
  EXPECT_NEAR(psnr(0.01), 20.0, 1e-9);
  EXPECT_NEAR(psnr(1e-4), 40.0, 1e-9);
  EXPECT_THROW(psnr(0.0), InvalidArgument);
  EXPECT_THROW(psnr(-1.0), InvalidArgument);
}

TEST(BdRate, IdenticalCurvesGiveZero) {
  EXPECT_EQ(bd_rate(kAnchor, kAnchor), 0.0);
  RdCurve shuffled = kAnchor;
  std::reverse(shuffled.begin(), shuffled.end());
  std::swap(shuffled[1], shuffled[3]);
  EXPECT_EQ(bd_rate(kAnchor, shuffled), 0.0);
  const RdCurve test = scaled(kAnchor, 0.87);
  EXPECT_EQ(bd_rate(kAnchor, test), bd_rate(shuffled, test));
}

TEST(BdRate, ConstantRatio) {
  EXPECT_NEAR(bd_rate(kAnchor, scaled(kAnchor, 1.10)), 10.0, 0.1);
  EXPECT_NEAR(bd_rate(kAnchor, scaled(kAnchor, 0.90)), -10.0, 0.1);
  for (double ratio = 0.5; ratio <= 2.0; ratio += 0.125) {
    EXPECT_NEAR(bd_rate(kAnchor, scaled(kAnchor, ratio)), (ratio - 1.0) * 100.0, 0.1) << ratio;
  }
}

TEST(BdRate, Rejections) {
  const RdCurve three{{0.2, 30}, {0.4, 33}, {0.8, 36}};
  EXPECT_THROW(bd_rate(three, kAnchor), InvalidArgument);
  RdCurve bent = kAnchor;
  bent[2].psnr = 32.0;
  EXPECT_THROW(bd_rate(kAnchor, bent), InvalidArgument);
  RdCurve far = kAnchor;
  for (auto& p : far) p.psnr += 20.0;
  EXPECT_THROW(bd_rate(kAnchor, far), InvalidArgument);
}

TEST(FrameLog, RoundTrip) {
  const auto dir = test_util::temp_dir("metrics_log");
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<FrameLogRow> rows;
  for (int i = 0; i < 20; ++i) {
    rows.push_back({i, 256 + 1792 * u(gen), 0.5 + 0.5 * u(gen), u(gen), 1e-3 * u(gen), 30 + 10 * u(gen), u(gen),
                    -u(gen) / 3.0});
  }
  emit_logs(rows, dir / "frames.csv");
  EXPECT_EQ(read_logs(dir / "frames.csv"), rows);

  std::ifstream in(dir / "frames.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "poc,lambda,m,r_bpp,d_mse,psnr,r_tar,reward");
  std::string line;
  std::getline(in, line);
  std::stringstream ss(line);
  std::string field;
  std::getline(ss, field, ',');
  std::getline(ss, field, ',');
  std::string digits;
  for (char ch : field) {
    if (std::isdigit(static_cast<unsigned char>(ch))) digits += ch;
  }
  EXPECT_GE(digits.size(), 9u) << field;
}

TEST(FrameLog, ReadErrors) {
  const auto dir = test_util::temp_dir("metrics_bad");
  EXPECT_THROW(read_logs(dir / "missing.csv"), IoError);
  std::ofstream(dir / "bad.csv") << "poc,lambda\n1,2\n";
  EXPECT_ANY_THROW(read_logs(dir / "bad.csv"));
}

TEST(Curve, RoundTrip) {
  const auto dir = test_util::temp_dir("metrics_curve");
  emit_curve(kAnchor, dir / "c.csv");
  EXPECT_EQ(read_curve(dir / "c.csv"), kAnchor);
}

TEST(Summary, Json) {
  const auto j = nlohmann::json::parse(summary_json({1.5, std::nullopt, 35.2, 0.61}));
  EXPECT_TRUE(j.at("bd_rate_pct").is_null());
  EXPECT_EQ(j.at("delta_r_pct").get<double>(), 1.5);
  const auto k = nlohmann::json::parse(summary_json({1.5, -3.25, 35.2, 0.61}));
  EXPECT_EQ(k.at("bd_rate_pct").get<double>(), -3.25);
  EXPECT_EQ(k.size(), 4u);
}
