#include "ratelab/env.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "csv_util.hpp"
#include "ratelab/error.hpp"
#include "ratelab/rng.hpp"

namespace ratelab {

CodecProfile CodecProfile::by_name(std::string_view name) {
  CodecProfile p;
  p.name = std::string(name);
  if (name == "dvc" || name == "dcvc") {
    p.lambda_min = 256.0;
    p.lambda_max = 2048.0;
  } else if (name == "dcvc-dc") {
    p.lambda_min = 85.0;
    p.lambda_max = 840.0;
  } else if (name == "dcvc-rt") {
    p.lambda_min = 1.0;
    p.lambda_max = 768.0;
  } else {
    throw InvalidArgument("unknown codec profile '" + std::string(name) +
                          "' (expected dvc, dcvc, dcvc-dc or dcvc-rt)");
  }
  return p;
}

bool CodecProfile::contains(double lambda, double m) const {
  return lambda >= lambda_min && lambda <= lambda_max && m >= m_min && m <= m_max;
}

void CodecProfile::validate() const {
  if (!(lambda_min > 0.0) || !(lambda_max > lambda_min)) {
    throw InvalidArgument("profile lambda range must satisfy 0 < min < max");
  }
  if (!(m_min > 0.0) || !(m_max >= m_min) || m_max > 1.0) {
    throw InvalidArgument("profile m range must satisfy 0 < min <= max <= 1");
  }
  if (m_bits < 0) throw InvalidArgument("profile m_bits must be nonnegative");
}

void SequenceSpec::validate() const {
  if (n_frames < 1) throw InvalidArgument("sequence needs n_frames >= 1, got " + std::to_string(n_frames));
  if (!(c0 > 0.0)) throw InvalidArgument("sequence needs c0 > 0");
  if (!(c_min > 0.0) || !(c_max > c_min)) throw InvalidArgument("sequence needs 0 < c_min < c_max");
  if (!(sigma >= 0.0)) throw InvalidArgument("sequence needs sigma >= 0");
  if (!(scene_change_prob >= 0.0 && scene_change_prob <= 1.0)) {
    throw InvalidArgument("scene_change_prob must lie in [0, 1]");
  }
  if (!(scene_change_gain > 0.0)) throw InvalidArgument("scene_change_gain must be positive");
  if (!(k_min > 0.0) || !(k_max >= k_min)) throw InvalidArgument("sequence needs 0 < k_min <= k_max");
  if (frame_width <= 0 || frame_height <= 0) throw InvalidArgument("frame dimensions must be positive");
}

std::vector<FrameDescriptor> new_sequence(const SequenceSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  std::vector<FrameDescriptor> frames;
  frames.reserve(static_cast<std::size_t>(spec.n_frames));
  double c = std::clamp(spec.c0, spec.c_min, spec.c_max);
  for (int t = 0; t < spec.n_frames; ++t) {
    FrameDescriptor f;
    if (t > 0) {
      const double xi = rng.normal();
      c = std::clamp(c * std::exp(spec.sigma * xi), spec.c_min, spec.c_max);
      if (rng.uniform() < spec.scene_change_prob) {
        const double jump = rng.uniform() < 0.5 ? spec.scene_change_gain : 1.0 / spec.scene_change_gain;
        c = std::clamp(c * jump, spec.c_min, spec.c_max);
        f.scene_change = true;
      }
    }
    f.c = c;
    f.k = spec.k_min + (spec.k_max - spec.k_min) * rng.uniform();
    f.intra = (t == 0);
    frames.push_back(f);
  }
  return frames;
}

CouplingParams CouplingParams::memoryless() {
  CouplingParams p;
  p.a_d = 0.0;
  p.a_r = 0.0;
  return p;
}

void CouplingParams::validate() const {
  if (!(a_d >= 0.0) || !(a_r >= 0.0)) throw InvalidArgument("coupling strengths must be nonnegative");
  if (!(d_ref > 0.0)) throw InvalidArgument("d_ref must be positive");
  if (!(rho > 0.0) || !(q > 0.0)) throw InvalidArgument("rho and q must be positive");
  if (!(u >= 0.0)) throw InvalidArgument("u must be nonnegative");
  if (!(intra_factor > 0.0)) throw InvalidArgument("intra_factor must be positive");
  if (!(rd_scale > 0.0)) throw InvalidArgument("rd_scale must be positive");
}

int lambda_signaling_bits(const CodecProfile& profile) {
  const double span = std::floor(profile.lambda_max) - std::ceil(profile.lambda_min) + 1.0;
  if (span <= 1.0) return 0;
  return static_cast<int>(std::ceil(std::log2(span)));
}

double signaling_overhead_bpp(const CodecProfile& profile, int width, int height) {
  if (width <= 0 || height <= 0) throw InvalidArgument("signaling overhead needs a nonzero frame area");
  const double bits = lambda_signaling_bits(profile) + profile.m_bits;
  return bits / (static_cast<double>(width) * static_cast<double>(height));
}

CodecModel CodecModel::with_signaling(CodecProfile profile, CouplingParams coupling, int width,
                                      int height) {
  CodecModel model{std::move(profile), coupling, 0.0};
  model.overhead_bpp = signaling_overhead_bpp(model.profile, width, height);
  return model;
}

EnvState initial_state(const CodecProfile& profile, double r_tar, int n_frames) {
  EnvState s;
  s.t = 0;
  s.d_prev = 0.0;
  s.lambda_prev = profile.lambda_mid();
  s.m_prev = profile.m_max;
  s.spent_bpp = 0.0;
  s.r_tar = r_tar;
  s.n_frames = n_frames;
  return s;
}

StepOutcome encode_frame(const EnvState& state, const FrameDescriptor& frame, const Action& action,
                         const CodecModel& model) {
  const auto& p = model.profile;
  if (!std::isfinite(action.lambda) || !std::isfinite(action.m) || !p.contains(action.lambda, action.m)) {
    throw InvalidArgument("action (lambda=" + std::to_string(action.lambda) + ", m=" + std::to_string(action.m) +
                          ") outside profile '" + p.name + "'");
  }
  if (state.t >= state.n_frames) throw InvalidArgument("episode already finished");
  const auto& cp = model.coupling;
  const double ref_ratio = state.d_prev / cp.d_ref;

  const double complexity =
      cp.rd_scale * (frame.intra ? frame.c * cp.intra_factor : frame.c * (1.0 + cp.a_d * ref_ratio));
  const double k = frame.k;
  const double r_base = std::pow(complexity * k * action.lambda, 1.0 / (k + 1.0));
  const double d_base = complexity * std::pow(r_base, -k);
  const double r_coupled = frame.intra ? r_base : r_base * (1.0 + cp.a_r * ref_ratio);

  StepOutcome out;
  out.r_bpp = std::pow(action.m, cp.rho) * r_coupled + model.overhead_bpp;
  out.d_mse = d_base + cp.u * frame.c * std::pow(1.0 - action.m, cp.q);

  out.next_state = state;
  out.next_state.t = state.t + 1;
  out.next_state.d_prev = out.d_mse;
  out.next_state.lambda_prev = action.lambda;
  out.next_state.m_prev = action.m;
  out.next_state.spent_bpp = state.spent_bpp + out.r_bpp;
  out.done = (out.next_state.t == state.n_frames);
  return out;
}

// ---------------------------------------------------------------------------
// Bandwidth traces

BandwidthTrace BandwidthTrace::constant(double r_tar) {
  BandwidthTrace trace;
  trace.segments.push_back({0, r_tar});
  trace.validate();
  return trace;
}

void BandwidthTrace::validate() const {
  if (segments.empty()) throw InvalidArgument("bandwidth trace has no segments");
  if (segments.front().start_frame != 0) throw InvalidArgument("first trace segment must start at frame 0");
  for (std::size_t i = 0; i < segments.size(); ++i) {
    if (!(segments[i].r_tar > 0.0)) throw InvalidArgument("trace targets must be positive");
    if (i > 0 && segments[i].start_frame <= segments[i - 1].start_frame) {
      throw InvalidArgument("trace start frames must be strictly increasing");
    }
  }
}

std::size_t BandwidthTrace::segment_index(int t) const {
  std::size_t idx = 0;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    if (segments[i].start_frame <= t) idx = i;
  }
  return idx;
}

BandwidthTrace BandwidthTrace::scaled(double factor) const {
  BandwidthTrace out = *this;
  for (auto& s : out.segments) s.r_tar *= factor;
  out.validate();
  return out;
}

double target_bitrate(const BandwidthTrace& trace, int t) {
  return trace.segments[trace.segment_index(t)].r_tar;
}

BandwidthTrace BandwidthTrace::load_csv(const std::filesystem::path& path) {
  BandwidthTrace trace;
  for (const auto& row : csv::read_rows(path, "start_frame,bpp")) {
    if (row.size() != 2) throw InvalidArgument(path.string() + ": expected 2 columns");
    trace.segments.push_back({static_cast<int>(csv::to_int(row[0])), csv::to_double(row[1])});
  }
  trace.validate();
  return trace;
}

void BandwidthTrace::save_csv(const std::filesystem::path& path) const {
  auto out = csv::open_for_write(path);
  out << "start_frame,bpp\n";
  for (const auto& s : segments) out << s.start_frame << ',' << csv::format(s.r_tar) << '\n';
}

// ---------------------------------------------------------------------------
// Tabulated R-D grid

const RdEntry& RdTable::at(std::size_t bucket, std::size_t li, std::size_t mi) const {
  return entries.at((bucket * lambdas.size() + li) * ms.size() + mi);
}

RdEntry& RdTable::at(std::size_t bucket, std::size_t li, std::size_t mi) {
  return entries.at((bucket * lambdas.size() + li) * ms.size() + mi);
}

void RdTable::validate() const {
  if (lambdas.empty() || ms.empty() || buckets.empty()) throw InvalidArgument("RD table grid is empty");
  auto ascending = [](const std::vector<double>& v) { return std::adjacent_find(v.begin(), v.end(), std::greater_equal<>()) == v.end(); };
  if (!ascending(lambdas) || !ascending(ms) || !ascending(buckets)) {
    throw InvalidArgument("RD table axes must be strictly ascending");
  }
  if (lambdas.front() <= 0.0) throw InvalidArgument("RD table lambdas must be positive");
  if (entries.size() != lambdas.size() * ms.size() * buckets.size()) {
    throw InvalidArgument("RD table is missing grid cells");
  }
  for (const auto& e : entries) {
    if (!(e.r_bpp > 0.0) || !(e.d_mse >= 0.0)) throw InvalidArgument("RD table entries need positive rates");
  }
}

RdTable RdTable::tabulate(const FrameDescriptor& frame, const CodecModel& model, std::vector<double> lambdas,
                          std::vector<double> ms, std::vector<double> buckets) {
  RdTable table;
  table.lambdas = std::move(lambdas);
  table.ms = std::move(ms);
  table.buckets = std::move(buckets);
  table.entries.resize(table.lambdas.size() * table.ms.size() * table.buckets.size());
  for (std::size_t b = 0; b < table.buckets.size(); ++b) {
    EnvState s = initial_state(model.profile, 1.0, 2);
    s.t = 1;
    s.d_prev = table.buckets[b];
    for (std::size_t li = 0; li < table.lambdas.size(); ++li) {
      for (std::size_t mi = 0; mi < table.ms.size(); ++mi) {
        const auto out = encode_frame(s, frame, {table.lambdas[li], table.ms[mi]}, model);
        table.at(b, li, mi) = {out.r_bpp, out.d_mse};
      }
    }
  }
  table.validate();
  return table;
}

RdTable RdTable::load_csv(const std::filesystem::path& path) {
  struct Key {
    double l, m, b;
    bool operator<(const Key& o) const { return std::tie(b, l, m) < std::tie(o.b, o.l, o.m); }
  };
  std::map<Key, RdEntry> cells;
  std::set<double> ls, mset, bs;
  for (const auto& row : csv::read_rows(path, "lambda,m,ref_bucket,r_bpp,d_mse")) {
    if (row.size() != 5) throw InvalidArgument(path.string() + ": expected 5 columns");
    Key key{csv::to_double(row[0]), csv::to_double(row[1]), csv::to_double(row[2])};
    ls.insert(key.l);
    mset.insert(key.m);
    bs.insert(key.b);
    if (!cells.emplace(key, RdEntry{csv::to_double(row[3]), csv::to_double(row[4])}).second) {
      throw InvalidArgument(path.string() + ": duplicate grid cell");
    }
  }
  RdTable table;
  table.lambdas.assign(ls.begin(), ls.end());
  table.ms.assign(mset.begin(), mset.end());
  table.buckets.assign(bs.begin(), bs.end());
  if (cells.size() != table.lambdas.size() * table.ms.size() * table.buckets.size()) {
    throw InvalidArgument(path.string() + ": RD grid is not fully populated");
  }
  table.entries.resize(cells.size());
  for (std::size_t b = 0; b < table.buckets.size(); ++b) {
    for (std::size_t li = 0; li < table.lambdas.size(); ++li) {
      for (std::size_t mi = 0; mi < table.ms.size(); ++mi) {
        table.at(b, li, mi) = cells.at(Key{table.lambdas[li], table.ms[mi], table.buckets[b]});
      }
    }
  }
  table.validate();
  return table;
}

void RdTable::save_csv(const std::filesystem::path& path) const {
  auto out = csv::open_for_write(path);
  out << "lambda,m,ref_bucket,r_bpp,d_mse\n";
  for (std::size_t b = 0; b < buckets.size(); ++b) {
    for (std::size_t li = 0; li < lambdas.size(); ++li) {
      for (std::size_t mi = 0; mi < ms.size(); ++mi) {
        const auto& e = at(b, li, mi);
        out << csv::format(lambdas[li]) << ',' << csv::format(ms[mi]) << ',' << csv::format(buckets[b]) << ','
            << csv::format(e.r_bpp) << ',' << csv::format(e.d_mse) << '\n';
      }
    }
  }
}

std::size_t nearest_bucket(const RdTable& table, double d_prev) {
  std::size_t best = 0;
  double best_dist = std::abs(d_prev - table.buckets[0]);
  for (std::size_t b = 1; b < table.buckets.size(); ++b) {
    const double dist = std::abs(d_prev - table.buckets[b]);
    if (dist < best_dist) {  // strict: ties stay with the lower-distortion bucket
      best = b;
      best_dist = dist;
    }
  }
  return best;
}

namespace {

// Index i with axis[i] <= x <= axis[i+1] and the interpolation weight.
std::pair<std::size_t, double> bracket(const std::vector<double>& axis, double x, bool log_scale) {
  if (axis.size() == 1) return {0, 0.0};
  std::size_t i = static_cast<std::size_t>(std::upper_bound(axis.begin(), axis.end(), x) - axis.begin());
  i = std::clamp<std::size_t>(i, 1, axis.size() - 1) - 1;
  const double lo = log_scale ? std::log(axis[i]) : axis[i];
  const double hi = log_scale ? std::log(axis[i + 1]) : axis[i + 1];
  const double v = log_scale ? std::log(x) : x;
  return {i, (v - lo) / (hi - lo)};
}

}  // namespace

StepOutcome tabulated_encode(const RdTable& table, const EnvState& state, const Action& action) {
  if (!(action.lambda >= table.lambdas.front() && action.lambda <= table.lambdas.back() &&
        action.m >= table.ms.front() && action.m <= table.ms.back())) {
    throw InvalidArgument("action outside the RD table hull");
  }
  if (state.t >= state.n_frames) throw InvalidArgument("episode already finished");
  const std::size_t b = nearest_bucket(table, state.d_prev);
  const auto [li, wl] = bracket(table.lambdas, action.lambda, true);
  const auto [mi, wm] = bracket(table.ms, action.m, false);
  const std::size_t li1 = std::min(li + 1, table.lambdas.size() - 1);
  const std::size_t mi1 = std::min(mi + 1, table.ms.size() - 1);

  auto blend = [&](auto field) {
    const double v00 = field(table.at(b, li, mi));
    const double v10 = field(table.at(b, li1, mi));
    const double v01 = field(table.at(b, li, mi1));
    const double v11 = field(table.at(b, li1, mi1));
    return (1 - wl) * (1 - wm) * v00 + wl * (1 - wm) * v10 + (1 - wl) * wm * v01 + wl * wm * v11;
  };

  StepOutcome out;
  out.r_bpp = blend([](const RdEntry& e) { return e.r_bpp; });
  out.d_mse = blend([](const RdEntry& e) { return e.d_mse; });
  out.next_state = state;
  out.next_state.t = state.t + 1;
  out.next_state.d_prev = out.d_mse;
  out.next_state.lambda_prev = action.lambda;
  out.next_state.m_prev = action.m;
  out.next_state.spent_bpp = state.spent_bpp + out.r_bpp;
  out.done = (out.next_state.t == state.n_frames);
  return out;
}

// ---------------------------------------------------------------------------
// Episodic wrappers

SyntheticEnv::SyntheticEnv(CodecModel model, std::vector<FrameDescriptor> frames)
    : model_(std::move(model)), frames_(std::move(frames)) {
  model_.profile.validate();
  model_.coupling.validate();
  if (frames_.empty()) throw InvalidArgument("environment needs at least one frame");
  state_ = initial_state(model_.profile, 1.0, n_frames());
}

const FrameDescriptor& SyntheticEnv::frame(int t) const {
  return frames_.at(static_cast<std::size_t>(t));
}

const EnvState& SyntheticEnv::reset(double r_tar) {
  if (!(r_tar > 0.0)) throw InvalidArgument("target bitrate must be positive");
  state_ = initial_state(model_.profile, r_tar, n_frames());
  return state_;
}

StepOutcome SyntheticEnv::step(const Action& action) {
  auto out = encode_frame(state_, frames_.at(static_cast<std::size_t>(state_.t)), action, model_);
  state_ = out.next_state;
  return out;
}

TabulatedEnv::TabulatedEnv(RdTable table, CodecProfile profile, int n_frames)
    : table_(std::move(table)), profile_(std::move(profile)), n_frames_(n_frames) {
  table_.validate();
  if (n_frames_ < 1) throw InvalidArgument("environment needs at least one frame");
  state_ = initial_state(profile_, 1.0, n_frames_);
}

const FrameDescriptor& TabulatedEnv::frame(int t) const {
  if (t < 0 || t >= n_frames_) throw InvalidArgument("frame index out of range");
  return nominal_;
}

const EnvState& TabulatedEnv::reset(double r_tar) {
  if (!(r_tar > 0.0)) throw InvalidArgument("target bitrate must be positive");
  state_ = initial_state(profile_, r_tar, n_frames_);
  return state_;
}

StepOutcome TabulatedEnv::step(const Action& action) {
  auto out = tabulated_encode(table_, state_, action);
  state_ = out.next_state;
  return out;
}

}  // namespace ratelab
