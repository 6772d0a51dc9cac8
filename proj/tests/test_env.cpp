#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "ratelab/baselines.hpp"
#include "ratelab/env.hpp"
#include "ratelab/error.hpp"
#include "ratelab/rng.hpp"
#include "test_util.hpp"

using namespace ratelab;

namespace {

// Direct evaluation of the coupled hyperbolic model.
struct Closed {
  double r;
  double d;
};

Closed closed_form(double c, double k, bool intra, double d_prev, double lambda, double m, const CouplingParams& p,
                   double overhead) {
  const double cc = intra ? p.rd_scale * c * p.intra_factor : p.rd_scale * c * (1.0 + p.a_d * d_prev / p.d_ref);
  const double r_base = std::pow(cc * k * lambda, 1.0 / (k + 1.0));
  const double d_base = cc * std::pow(r_base, -k);
  const double r1 = intra ? r_base : r_base * (1.0 + p.a_r * d_prev / p.d_ref);
  return {std::pow(m, p.rho) * r1 + overhead, d_base + p.u * c * std::pow(1.0 - m, p.q)};
}

CodecModel unit_model(CouplingParams p) {
  CodecProfile profile;
  profile.lambda_min = 1.0;
  profile.lambda_max = 8.0;
  p.rd_scale = 1.0;
  return CodecModel{profile, p, 0.0};
}

EnvState inter_state(double d_prev) {
  EnvState s;
  s.t = 1;
  s.n_frames = 4;
  s.d_prev = d_prev;
  s.r_tar = 1.0;
  return s;
}

}  // namespace

TEST(Sequence, ZeroVolatilityIsFlat) {
  SequenceSpec spec;
  spec.n_frames = 20;
  spec.sigma = 0.0;
  spec.scene_change_prob = 0.0;
  spec.c0 = 1.0;
  for (const auto& f : new_sequence(spec)) EXPECT_EQ(f.c, 1.0);
}

TEST(Sequence, Deterministic) {
  SequenceSpec spec;
  spec.seed = 42;
  spec.n_frames = 50;
  spec.scene_change_prob = 0.2;
  EXPECT_EQ(new_sequence(spec), new_sequence(spec));
  spec.seed = 43;
  auto other = new_sequence(spec);
  spec.seed = 42;
  EXPECT_NE(new_sequence(spec), other);
}

TEST(Sequence, MatchesReferenceWalk) {
  SequenceSpec spec;
  spec.sigma = 0.2;
  spec.seed = 7;
  spec.n_frames = 64;
  const auto frames = new_sequence(spec);

  // Reference walk written against the raw engine.
  std::mt19937_64 e(7);
  auto u01 = [&] { return static_cast<double>(e() >> 11) * 0x1.0p-53; };
  double c = 1.0;
  std::vector<double> ref;
  for (int t = 0; t < 64; ++t) {
    if (t > 0) {
      const double a = 1.0 - u01();
      const double b = u01();
      const double xi = std::sqrt(-2.0 * std::log(a)) * std::cos(2.0 * M_PI * b);
      c = std::min(5.0, std::max(0.2, c * std::exp(0.2 * xi)));
      if (u01() < spec.scene_change_prob) {
        c = std::min(5.0, std::max(0.2, c * (u01() < 0.5 ? 2.0 : 0.5)));
      }
    }
    ref.push_back(c);
    u01();  // k draw
  }
  ASSERT_EQ(frames.size(), 64u);
  for (int t = 0; t < 64; ++t) EXPECT_DOUBLE_EQ(frames[t].c, ref[t]) << t;
  EXPECT_TRUE(frames[0].intra);
  for (int t = 1; t < 64; ++t) EXPECT_FALSE(frames[t].intra);
  for (const auto& f : frames) {
    EXPECT_GE(f.k, 0.8);
    EXPECT_LE(f.k, 1.5);
  }
}

TEST(Sequence, RejectsInvalidSpec) {
  SequenceSpec spec;
  spec.n_frames = 0;
  EXPECT_THROW(new_sequence(spec), InvalidArgument);
  spec.n_frames = 4;
  spec.c0 = 0.0;
  EXPECT_THROW(new_sequence(spec), InvalidArgument);
}

TEST(EncodeFrame, IntraClosedForm) {
  CouplingParams p = CouplingParams::memoryless();
  p.intra_factor = 1.0;
  const auto model = unit_model(p);
  FrameDescriptor f{1.0, 1.0, false, true};
  EnvState s;
  s.n_frames = 4;
  s.r_tar = 1.0;
  const auto out = encode_frame(s, f, {4.0, 1.0}, model);
  EXPECT_NEAR(out.r_bpp, 2.0, 1e-12);
  EXPECT_NEAR(out.d_mse, 0.5, 1e-12);
}

TEST(EncodeFrame, InterCoupledClosedForm) {
  CouplingParams p;
  p.a_d = 0.5;
  p.a_r = 0.2;
  p.d_ref = 1e-2;
  const auto model = unit_model(p);
  FrameDescriptor f{1.0, 1.0, false, false};
  const auto out = encode_frame(inter_state(1e-2), f, {4.0, 1.0}, model);
  const auto ref = closed_form(1.0, 1.0, false, 1e-2, 4.0, 1.0, model.coupling, 0.0);
  EXPECT_NEAR(out.r_bpp, ref.r, 1e-12);
  EXPECT_NEAR(out.d_mse, ref.d, 1e-12);
  EXPECT_NEAR(out.r_bpp, 2.9394, 1e-4);
  EXPECT_NEAR(out.d_mse, 0.6124, 1e-4);

  const auto half = encode_frame(inter_state(1e-2), f, {4.0, 0.5}, model);
  const auto ref_half = closed_form(1.0, 1.0, false, 1e-2, 4.0, 0.5, model.coupling, 0.0);
  EXPECT_NEAR(half.r_bpp, ref_half.r, 1e-12);
  EXPECT_NEAR(half.d_mse, ref_half.d, 1e-12);
  EXPECT_NEAR(half.r_bpp, 1.0393, 1e-4);
  EXPECT_NEAR(half.d_mse, 0.6134, 1e-4);
}

TEST(EncodeFrame, UpdatesState) {
  const auto model = CodecModel::with_signaling(CodecProfile{}, CouplingParams{}, 1920, 1080);
  EnvState s = initial_state(model.profile, 0.8, 2);
  FrameDescriptor f{1.2, 1.1, false, true};
  const auto a = encode_frame(s, f, {600.0, 0.8}, model);
  EXPECT_EQ(a.next_state.t, 1);
  EXPECT_EQ(a.next_state.d_prev, a.d_mse);
  EXPECT_EQ(a.next_state.spent_bpp, a.r_bpp);
  EXPECT_EQ(a.next_state.lambda_prev, 600.0);
  EXPECT_EQ(a.next_state.m_prev, 0.8);
  EXPECT_FALSE(a.done);
  const auto b = encode_frame(a.next_state, FrameDescriptor{1.2, 1.1, false, false}, {600.0, 0.8}, model);
  EXPECT_TRUE(b.done);
}

TEST(EncodeFrame, RejectsOutOfRangeAction) {
  const auto model = CodecModel::with_signaling(CodecProfile{}, CouplingParams{}, 1920, 1080);
  const EnvState s = initial_state(model.profile, 0.8, 2);
  FrameDescriptor f{1.0, 1.0, false, true};
  EXPECT_THROW(encode_frame(s, f, {255.0, 1.0}, model), InvalidArgument);
  EXPECT_THROW(encode_frame(s, f, {2049.0, 1.0}, model), InvalidArgument);
  EXPECT_THROW(encode_frame(s, f, {1000.0, 0.49}, model), InvalidArgument);
  EXPECT_THROW(encode_frame(s, f, {1000.0, 1.01}, model), InvalidArgument);
}

TEST(Signaling, BitCounts) {
  EXPECT_EQ(lambda_signaling_bits(CodecProfile::by_name("dvc")), 11);
  EXPECT_EQ(lambda_signaling_bits(CodecProfile::by_name("dcvc-dc")), 10);
  EXPECT_NEAR(signaling_overhead_bpp(CodecProfile::by_name("dvc"), 1920, 1080), 17.0 / 2073600.0, 1e-18);
  EXPECT_NEAR(signaling_overhead_bpp(CodecProfile::by_name("dvc"), 1920, 1080), 8.199e-6, 1e-9);
  EXPECT_THROW(signaling_overhead_bpp(CodecProfile{}, 0, 1080), InvalidArgument);
}

TEST(Trace, SegmentLookup) {
  EXPECT_EQ(target_bitrate(BandwidthTrace::constant(0.10), 0), 0.10);
  EXPECT_EQ(target_bitrate(BandwidthTrace::constant(0.10), 1000), 0.10);
  BandwidthTrace t{{{0, 0.0163}, {12, 0.0173}, {24, 0.0166}}};
  EXPECT_EQ(target_bitrate(t, 11), 0.0163);
  EXPECT_EQ(target_bitrate(t, 12), 0.0173);
  EXPECT_EQ(target_bitrate(t, 23), 0.0173);
  EXPECT_EQ(target_bitrate(t, 24), 0.0166);
}

TEST(Trace, CsvRoundTripAndValidation) {
  BandwidthTrace t{{{0, 0.5}, {10, 0.7}}};
  const auto path = test_util::temp_dir("trace") / "t.csv";
  t.save_csv(path);
  EXPECT_EQ(BandwidthTrace::load_csv(path).segments, t.segments);
  BandwidthTrace bad{{{1, 0.5}}};
  EXPECT_THROW(bad.validate(), InvalidArgument);
  BandwidthTrace unsorted{{{0, 0.5}, {5, 0.6}, {5, 0.7}}};
  EXPECT_THROW(unsorted.validate(), InvalidArgument);
}

namespace {

RdTable small_table() {
  FrameDescriptor f{1.0, 1.2, false, false};
  const auto model = CodecModel::with_signaling(CodecProfile{}, CouplingParams{}, 1920, 1080);
  return RdTable::tabulate(f, model, {256.0, 512.0, 1024.0, 2048.0}, {0.5, 0.75, 1.0}, {0.0625, 0.1875});
}

EnvState with_dprev(double d) {
  EnvState s;
  s.t = 1;
  s.n_frames = 4;
  s.d_prev = d;
  s.r_tar = 1.0;
  return s;
}

}  // namespace

TEST(Tabulated, GridPointVerbatim) {
  const auto table = small_table();
  const auto out = tabulated_encode(table, with_dprev(0.1875), {512.0, 0.75});
  EXPECT_EQ(out.r_bpp, table.at(1, 1, 1).r_bpp);
  EXPECT_EQ(out.d_mse, table.at(1, 1, 1).d_mse);
}

TEST(Tabulated, GeometricMidpointIsArithmeticMean) {
  const auto table = small_table();
  const auto out = tabulated_encode(table, with_dprev(0.0625), {std::sqrt(512.0 * 1024.0), 1.0});
  EXPECT_NEAR(out.r_bpp, 0.5 * (table.at(0, 1, 2).r_bpp + table.at(0, 2, 2).r_bpp), 1e-12);
  EXPECT_NEAR(out.d_mse, 0.5 * (table.at(0, 1, 2).d_mse + table.at(0, 2, 2).d_mse), 1e-15);
}

TEST(Tabulated, NearestBucketTiesLow) {
  const auto table = small_table();
  EXPECT_EQ(nearest_bucket(table, 0.12), 0u);
  EXPECT_EQ(nearest_bucket(table, 0.125), 0u);
  EXPECT_EQ(nearest_bucket(table, 0.13), 1u);
  const auto out = tabulated_encode(table, with_dprev(0.125), {512.0, 0.75});
  EXPECT_EQ(out.r_bpp, table.at(0, 1, 1).r_bpp);
  EXPECT_THROW(tabulated_encode(table, with_dprev(0.0625), {300.0, 0.4}), InvalidArgument);
}

TEST(Tabulated, CsvRoundTrip) {
  const auto table = small_table();
  const auto path = test_util::temp_dir("table") / "rd.csv";
  table.save_csv(path);
  const auto back = RdTable::load_csv(path);
  EXPECT_EQ(back.lambdas, table.lambdas);
  EXPECT_EQ(back.ms, table.ms);
  EXPECT_EQ(back.buckets, table.buckets);
  ASSERT_EQ(back.entries.size(), table.entries.size());
  for (std::size_t i = 0; i < back.entries.size(); ++i) {
    EXPECT_EQ(back.entries[i].r_bpp, table.entries[i].r_bpp);
    EXPECT_EQ(back.entries[i].d_mse, table.entries[i].d_mse);
  }
}

TEST(EnvProperties, MonotoneInLambda) {
  const auto model = CodecModel::with_signaling(CodecProfile{}, CouplingParams{}, 1920, 1080);
  FrameDescriptor f{1.3, 1.1, false, false};
  for (double m : {0.5, 0.75, 1.0}) {
    double r_prev = -1.0, d_prev = 1e9;
    for (int i = 0; i < 32; ++i) {
      const double lambda = 256.0 * std::pow(8.0, i / 31.0);
      const auto out = encode_frame(inter_state(3e-3), f, {std::min(lambda, 2048.0), m}, model);
      EXPECT_GT(out.r_bpp, r_prev);
      EXPECT_LT(out.d_mse, d_prev);
      r_prev = out.r_bpp;
      d_prev = out.d_mse;
    }
  }
}

TEST(EnvProperties, SlopeIsInverseLambda) {
  CodecModel model{CodecProfile{}, CouplingParams::memoryless(), 0.0};
  FrameDescriptor f{0.9, 1.3, false, false};
  for (double lambda = 704.0; lambda <= 1600.0; lambda += 64.0) {
    const double h = 1e-3 * lambda;
    const auto hi = encode_frame(inter_state(0.0), f, {lambda + h, 1.0}, model);
    const auto lo = encode_frame(inter_state(0.0), f, {lambda - h, 1.0}, model);
    const double slope = -(hi.d_mse - lo.d_mse) / (hi.r_bpp - lo.r_bpp);
    EXPECT_NEAR(slope * lambda, 1.0, 0.02);
  }
}

TEST(EnvProperties, CouplingSigns) {
  const auto model = CodecModel::with_signaling(CodecProfile{}, CouplingParams{}, 1920, 1080);
  FrameDescriptor f{1.0, 1.0, false, false};
  const auto a = encode_frame(inter_state(1e-3), f, {800.0, 0.8}, model);
  const auto b = encode_frame(inter_state(5e-3), f, {800.0, 0.8}, model);
  EXPECT_GT(b.r_bpp, a.r_bpp);
  EXPECT_GT(b.d_mse, a.d_mse);
}

TEST(EnvProperties, LedgerAndDeterminism) {
  const auto model = CodecModel::with_signaling(CodecProfile{}, CouplingParams{}, 1920, 1080);
  SequenceSpec spec;
  spec.seed = 11;
  spec.n_frames = 32;
  SyntheticEnv a(model, new_sequence(spec));
  SyntheticEnv b(model, new_sequence(spec));
  a.reset(0.7);
  b.reset(0.7);
  Rng rng(3);
  double sum = 0.0;
  for (int t = 0; t < 32; ++t) {
    const Action act{rng.uniform(256.0, 2048.0), rng.uniform(0.5, 1.0)};
    const auto x = a.step(act);
    const auto y = b.step(act);
    EXPECT_EQ(x.r_bpp, y.r_bpp);
    EXPECT_EQ(x.d_mse, y.d_mse);
    EXPECT_EQ(x.next_state, y.next_state);
    EXPECT_EQ(x.done, t == 31);
    sum += x.r_bpp;
  }
  EXPECT_NEAR(a.state().spent_bpp, sum, 1e-12 * 32);
}

TEST(EnvProperties, DownsamplingPaysOffSomewhere) {
  const auto model = CodecModel::with_signaling(CodecProfile{}, CouplingParams{}, 1920, 1080);
  const auto grid = OracleGrid::spanning(model.profile, 8, 3);
  FrameDescriptor f{1.0, 1.1, false, false};
  bool found = false;
  for (double r_tar = 0.3; r_tar <= 2.5 && !found; r_tar += 0.05) {
    OracleOptions o;
    o.mode = OracleMode::kConstrained;
    const auto best = oracle_search({f}, model, r_tar, grid, o);
    found = best.feasible && best.actions[0].m < 1.0;
  }
  EXPECT_TRUE(found);
}
