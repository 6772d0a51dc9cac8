#pragma once

// Training loop, rollouts and greedy evaluation of the agent.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ratelab/agent.hpp"
#include "ratelab/episode.hpp"

namespace ratelab {

// Codec, coupling and content settings shared by training and evaluation.
struct EnvSetup {
  CodecProfile profile;
  CouplingParams coupling;
  SequenceSpec sequence;

  CodecModel model() const;
  SyntheticEnv make_env(std::uint64_t seed, int n_frames, double c0) const;
  SyntheticEnv make_env(std::uint64_t seed, int n_frames) const { return make_env(seed, n_frames, sequence.c0); }
  void validate() const;
};

struct TrainConfig {
  double gamma = 0.98;
  double xi = 0.995;
  double epsilon_start = 5e-4;
  double epsilon_end = 1e-5;
  double actor_lr_start = 5e-4;
  double actor_lr_end = 5e-5;
  double critic_lr_start = 5e-3;
  double critic_lr_end = 5e-4;
  double feature_lr = 1e-4;
  int lr_warmup_epochs = 5;
  int batch_size = 32;
  int buffer_capacity = 200;
  int learning_starts = 4;
  int epochs = 300;
  int iterations_per_epoch = 24;
  int phase1_epochs = 50;
  int phase1_frames = 4;
  int phase2_frames = 32;
  int actor_update_period = 2;
  double grad_clip = 1.0;
  int hidden_units = 128;
  int hidden_layers = 3;
  double log_std_bias_init = -1.0;
  std::string features = "descriptor";
  bool joint_action = true;
  double target_min_bpp = 0.35;
  double target_max_bpp = 1.4;
  double c0_min = 0.7;
  double c0_max = 1.4;
  double trace_augment_prob = 0.25;
  int validation_period = 25;
  int validation_seeds = 8;
  std::vector<double> validation_targets{0.45, 0.6, 0.8, 1.05};
  int max_consecutive_failures = 100;
  RewardConfig reward;
  std::uint64_t seed = 1;

  void validate() const;
  double r_tar_scale() const;  // geometric mean of the target range
  double epsilon_at(int epoch) const;
  LrSchedule actor_schedule() const;
  LrSchedule critic_schedule() const;
  int frames_at(int epoch) const { return epoch < phase1_epochs ? phase1_frames : phase2_frames; }
  bool features_trainable_at(int epoch) const { return epoch < phase1_epochs; }
  bool actor_update_at(long long iteration) const { return iteration % actor_update_period == 0; }
  SacStepConfig step_config(int epoch, long long iteration) const;
};

// Held-out seeds are disjoint from validation seeds; training sequences use
// seeds drawn from the training generator.
inline constexpr std::uint64_t kValidationSeedBase = 1'000'000;
inline constexpr std::uint64_t kEvalSeedBase = 2'000'000;

std::vector<std::uint64_t> validation_seed_list(int count);
std::vector<std::uint64_t> eval_seed_list(int count, std::uint64_t base = kEvalSeedBase);

SacAgent make_agent(const TrainConfig& config, const EnvSetup& env, Rng& rng);

// Drives the agent as a Controller. In sample mode it draws stochastic
// actions from `rng` and records transitions.
class AgentController final : public Controller {
 public:
  AgentController(const SacAgent& agent, bool sample, Rng* rng = nullptr);

  std::string name() const override { return sample_ ? "agent-sample" : "agent"; }
  void begin_episode(const Environment& env) override;
  Action act(const ControlContext& ctx) override;
  void observe(const ControlContext& ctx, const Action& action, const StepOutcome& outcome, double reward) override;

  Trajectory take_trajectory();

 private:
  const SacAgent& agent_;
  bool sample_;
  Rng* rng_;
  Trajectory trajectory_;
  std::optional<Transition> pending_;
  StateVector current_;
  Eigen::VectorXd current_pre_squash_;
};

enum class RolloutMode { kSample, kGreedy };

struct Rollout {
  Trajectory trajectory;
  EpisodeResult episode;
};

Rollout rollout(Environment& env, const SacAgent& agent, const BandwidthTrace& trace, const EpisodeOptions& options,
                Rng& rng, RolloutMode mode);

// Log-uniform targets for one epoch, stratified so that the sampled values
// span most of the configured log range, in shuffled order.
std::vector<double> epoch_targets(int count, double lo, double hi, Rng& rng);

struct TrainLogRow {
  int epoch = 0;
  int iter = 0;
  double actor_loss = 0.0;
  double critic_loss = 0.0;
  double mean_return = 0.0;
  double epsilon = 0.0;
  double lr_actor = 0.0;
  double lr_critic = 0.0;
};

inline constexpr const char* kTrainLogHeader = "epoch,iter,actor_loss,critic_loss,mean_return,epsilon,lr_actor,lr_critic";

struct ValidationRow {
  int epoch = 0;
  double score = 0.0;
  double delta_r_pct = 0.0;
  double mean_psnr = 0.0;
};

struct TrainResult {
  std::filesystem::path last_checkpoint;
  std::filesystem::path best_checkpoint;
  std::vector<TrainLogRow> log;
  std::vector<ValidationRow> validation;
  int best_epoch = -1;
  double best_score = 0.0;
  long long skipped_updates = 0;
};

struct TrainOptions {
  std::filesystem::path output_dir;
  bool resume = false;
  // Stops after this many epochs of the schedule (for tests); -1 runs all.
  int stop_after_epoch = -1;
  std::function<void(const std::string&)> progress;
};

// Writes train_log.csv, validation_log.csv and checkpoints/{last,best}.ckpt
// under output_dir. With resume, continues from checkpoints/last.ckpt.
TrainResult train(const TrainConfig& config, const EnvSetup& env, const TrainOptions& options);

// Validation score: mean over validation episodes of delta * mean D + |R_rem| / r_tar.
double validation_score(const std::vector<EpisodeResult>& episodes, const RewardConfig& reward);

// Agent stored in a training checkpoint. Throws VersionMismatch / InvalidArgument.
SacAgent load_agent(const std::filesystem::path& checkpoint, const TrainConfig& config, const EnvSetup& env);

struct EvalSuite {
  std::vector<std::uint64_t> seeds;
  std::vector<double> targets;  // used when per_seed_targets is empty
  std::vector<std::vector<double>> per_seed_targets;
  int n_frames = 32;
  std::optional<BandwidthTrace> trace;  // overrides the targets
  std::string label = "held-out";
};

struct SequenceReport {
  std::uint64_t seed = 0;
  double r_tar = 0.0;
  int n_frames = 0;
  EpisodeResult episode;
};

struct EvalReport {
  std::string method;
  std::string suite;
  std::vector<std::uint64_t> seeds;
  std::vector<SequenceReport> sequences;
  EvalSummary summary;

  std::vector<FrameLogRow> frame_rows() const;
  std::string to_json() const;
};

using ControllerFactory = std::function<std::unique_ptr<Controller>(const SyntheticEnv& env)>;

EvalReport evaluate(const std::string& method, const ControllerFactory& factory, const EnvSetup& env,
                    const EvalSuite& suite, const EpisodeOptions& options);
EvalReport evaluate(const SacAgent& agent, const EnvSetup& env, const EvalSuite& suite,
                    const EpisodeOptions& options);

}  // namespace ratelab
