#pragma once

// Simulated neural-video-codec environment.
//
// Each frame follows a hyperbolic R-D model R = (C k lambda)^(1/(k+1)),
// D = C R^-k whose effective complexity C and rate are inflated by the
// distortion of the decoded reference. Larger lambda means higher rate and
// lower distortion; the R-D slope magnitude at lambda is exactly 1/lambda.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace ratelab {

// Lambda range and down-sampling range accepted by one codec.
struct CodecProfile {
  std::string name = "dvc";
  double lambda_min = 256.0;
  double lambda_max = 2048.0;
  double m_min = 0.5;
  double m_max = 1.0;
  int m_bits = 6;

  // "dvc", "dcvc" -> [256, 2048]; "dcvc-dc" -> [85, 840]; "dcvc-rt" -> [1, 768].
  static CodecProfile by_name(std::string_view name);

  double lambda_mid() const { return 0.5 * (lambda_min + lambda_max); }
  bool contains(double lambda, double m) const;
  void validate() const;
};

struct Action {
  double lambda = 0.0;
  double m = 1.0;

  bool operator==(const Action&) const = default;
};

struct FrameDescriptor {
  double c = 1.0;  // content complexity
  double k = 1.0;  // hyperbolic exponent
  bool scene_change = false;
  bool intra = false;

  bool operator==(const FrameDescriptor&) const = default;
};

struct SequenceSpec {
  int n_frames = 32;
  std::uint64_t seed = 0;
  double c0 = 1.0;
  double sigma = 0.05;
  double scene_change_prob = 0.02;
  double scene_change_gain = 2.0;
  double c_min = 0.2;
  double c_max = 5.0;
  double k_min = 0.8;
  double k_max = 1.5;
  int frame_width = 1920;
  int frame_height = 1080;

  void validate() const;
};

// Seeded log random walk of content complexity with scene-change jumps.
// Frame 0 is the only intra frame.
std::vector<FrameDescriptor> new_sequence(const SequenceSpec& spec);

struct CouplingParams {
  double a_d = 0.5;   // distortion propagation strength
  double a_r = 0.3;   // rate dependency strength
  double d_ref = 1e-2;
  double rho = 1.5;   // rate exponent of m
  double u = 4e-3;    // upsampling-loss gain
  double q = 2.0;     // upsampling-loss exponent
  double intra_factor = 3.0;
  // Converts unitless content complexity into the codec's complexity scale.
  double rd_scale = 1e-3;

  static CouplingParams memoryless();
  bool is_memoryless() const { return a_d == 0.0 && a_r == 0.0; }
  void validate() const;
};

// Bits spent per frame to signal (lambda, m) divided by the frame area.
double signaling_overhead_bpp(const CodecProfile& profile, int width, int height);
int lambda_signaling_bits(const CodecProfile& profile);

// Everything needed to evaluate one frame besides the frame and the state.
struct CodecModel {
  CodecProfile profile;
  CouplingParams coupling;
  double overhead_bpp = 0.0;

  // Model with signaling overhead computed for the given frame dimensions.
  static CodecModel with_signaling(CodecProfile profile, CouplingParams coupling,
                                   int width, int height);
};

struct EnvState {
  int t = 0;
  double d_prev = 0.0;
  double lambda_prev = 0.0;
  double m_prev = 1.0;
  double spent_bpp = 0.0;
  double r_tar = 0.0;
  int n_frames = 0;

  bool operator==(const EnvState&) const = default;
};

// State before frame 0: previous action set to the lambda midpoint and m = 1.
EnvState initial_state(const CodecProfile& profile, double r_tar, int n_frames);

struct StepOutcome {
  double r_bpp = 0.0;
  double d_mse = 0.0;
  EnvState next_state;
  bool done = false;
};

// Encodes one frame. Throws InvalidArgument if the action is outside the
// profile; the action is never clamped.
StepOutcome encode_frame(const EnvState& state, const FrameDescriptor& frame,
                         const Action& action, const CodecModel& model);

struct TraceSegment {
  int start_frame = 0;
  double r_tar = 0.0;

  bool operator==(const TraceSegment&) const = default;
};

// Piecewise-constant target bitrate over frames.
struct BandwidthTrace {
  std::vector<TraceSegment> segments;

  static BandwidthTrace constant(double r_tar);
  // CSV with header `start_frame,bpp`.
  static BandwidthTrace load_csv(const std::filesystem::path& path);
  void save_csv(const std::filesystem::path& path) const;

  void validate() const;
  std::size_t segment_index(int t) const;
  // Returns a copy with every target multiplied by `factor`.
  BandwidthTrace scaled(double factor) const;
};

double target_bitrate(const BandwidthTrace& trace, int t);

struct RdEntry {
  double r_bpp = 0.0;
  double d_mse = 0.0;
};

// Measured (rate, distortion) grid over lambda levels, m levels and
// reference-distortion buckets.
struct RdTable {
  std::vector<double> lambdas;  // ascending
  std::vector<double> ms;       // ascending
  std::vector<double> buckets;  // ascending reference distortions
  std::vector<RdEntry> entries; // [bucket][lambda][m]

  const RdEntry& at(std::size_t bucket, std::size_t li, std::size_t mi) const;
  RdEntry& at(std::size_t bucket, std::size_t li, std::size_t mi);
  void validate() const;

  // Tabulates one inter frame of the synthetic model at every grid point.
  static RdTable tabulate(const FrameDescriptor& frame, const CodecModel& model,
                          std::vector<double> lambdas, std::vector<double> ms,
                          std::vector<double> buckets);
  // CSV with header `lambda,m,ref_bucket,r_bpp,d_mse`.
  static RdTable load_csv(const std::filesystem::path& path);
  void save_csv(const std::filesystem::path& path) const;
};

std::size_t nearest_bucket(const RdTable& table, double d_prev);

// Bilinear interpolation in (log lambda, m) inside the nearest reference
// bucket. Throws InvalidArgument outside the grid hull.
StepOutcome tabulated_encode(const RdTable& table, const EnvState& state, const Action& action);

// Episodic environment interface used by rollouts and controllers.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual int n_frames() const = 0;
  virtual const CodecProfile& profile() const = 0;
  virtual const FrameDescriptor& frame(int t) const = 0;
  virtual const EnvState& state() const = 0;
  virtual const EnvState& reset(double r_tar) = 0;
  virtual StepOutcome step(const Action& action) = 0;
  // Changes the target seen in the state from the next frame on.
  virtual void set_target(double r_tar) = 0;
};

class SyntheticEnv final : public Environment {
 public:
  SyntheticEnv(CodecModel model, std::vector<FrameDescriptor> frames);

  int n_frames() const override { return static_cast<int>(frames_.size()); }
  const CodecProfile& profile() const override { return model_.profile; }
  const FrameDescriptor& frame(int t) const override;
  const EnvState& state() const override { return state_; }
  const EnvState& reset(double r_tar) override;
  StepOutcome step(const Action& action) override;
  void set_target(double r_tar) override { state_.r_tar = r_tar; }

  const CodecModel& model() const { return model_; }
  const std::vector<FrameDescriptor>& frames() const { return frames_; }

 private:
  CodecModel model_;
  std::vector<FrameDescriptor> frames_;
  EnvState state_;
};

// Replays an RdTable for every frame of a fixed-length episode.
class TabulatedEnv final : public Environment {
 public:
  TabulatedEnv(RdTable table, CodecProfile profile, int n_frames);

  int n_frames() const override { return n_frames_; }
  const CodecProfile& profile() const override { return profile_; }
  const FrameDescriptor& frame(int t) const override;
  const EnvState& state() const override { return state_; }
  const EnvState& reset(double r_tar) override;
  StepOutcome step(const Action& action) override;
  void set_target(double r_tar) override { state_.r_tar = r_tar; }

 private:
  RdTable table_;
  CodecProfile profile_;
  int n_frames_;
  FrameDescriptor nominal_;
  EnvState state_;
};

}  // namespace ratelab
