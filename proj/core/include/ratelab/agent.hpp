#pragma once

// Soft actor-critic over the joint (lambda, m) action.
//
// The actor emits a mean and a log standard deviation per action dimension.
// Actions are sampled as u ~ N(mean, std^2) and squashed into the box with
// a = low + (high - low) * (tanh(u) + 1) / 2, so they can never leave the
// profile. Critics see the state followed by tanh(u), i.e. the action
// normalized to [-1, 1] per dimension.

#include <Eigen/Dense>
#include <cstdint>
#include <deque>
#include <memory>
#include <vector>

#include "ratelab/budget.hpp"
#include "ratelab/checkpoint.hpp"
#include "ratelab/env.hpp"
#include "ratelab/features.hpp"
#include "ratelab/neural.hpp"
#include "ratelab/rng.hpp"

namespace ratelab {

struct ActionSpace {
  double lambda_min = 256.0;
  double lambda_max = 2048.0;
  double m_min = 0.5;
  double m_max = 1.0;
  bool joint = true;  // false: lambda only, m pinned to m_max

  static ActionSpace from_profile(const CodecProfile& profile, bool joint = true);

  int dims() const { return joint ? 2 : 1; }
  double low(int dim) const { return dim == 0 ? lambda_min : m_min; }
  double high(int dim) const { return dim == 0 ? lambda_max : m_max; }

  // Maps tanh(u) in (-1, 1)^dims into the action box.
  Action from_squashed(const Eigen::VectorXd& squashed) const;
  // Inverse of from_squashed: action -> [-1, 1]^dims.
  Eigen::VectorXd normalize(const Action& action) const;
  // sum_i log((high_i - low_i) / 2), the log-Jacobian of the affine map.
  double log_half_range() const;
  bool contains(const Action& action) const;
};

struct StateVector {
  Eigen::VectorXd feature_slots;  // raw provider output
  double poc_norm = 0.0;
  double r_rem_norm = 0.0;
  double r_tar_norm = 0.0;
  double lambda_prev_norm = 0.0;
  double m_prev_norm = 0.0;
  double frames_left_norm = 0.0;
  double first_p_flag = 0.0;

  static constexpr int kAuxDims = 7;

  Eigen::VectorXd aux() const;
  Eigen::VectorXd to_vector() const;
  bool operator==(const StateVector& other) const;
};

// Deterministic normalization of the environment and budget context. Throws
// InvalidArgument on non-finite inputs or t >= N.
StateVector assemble_state(const Eigen::VectorXd& features, const EnvState& env, const CodecProfile& profile,
                           const BudgetContext& budget);

struct PolicyOutput {
  Eigen::VectorXd mean;     // pre-squash
  Eigen::VectorXd log_std;  // clamped to [kLogStdMin, kLogStdMax]
  Eigen::VectorXd raw_log_std;
};

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;

PolicyOutput policy_output(const DenseNetwork& actor, const Eigen::VectorXd& x, const ActionSpace& space);

// log density of the squashed action produced by pre-squash sample u,
// including the tanh and affine change-of-variables terms.
double squashed_log_prob(const PolicyOutput& policy, const Eigen::VectorXd& u, const ActionSpace& space);

struct SampledAction {
  Action action;
  Eigen::VectorXd pre_squash;
  double log_prob = 0.0;
};

SampledAction sample_action(const DenseNetwork& actor, const ActionSpace& space, const Eigen::VectorXd& x, Rng& rng);
// Same as sample_action with the standard-normal draw supplied by the caller.
SampledAction sample_action_with_noise(const DenseNetwork& actor, const ActionSpace& space, const Eigen::VectorXd& x,
                                       const Eigen::VectorXd& noise);
// Squash of the mean: the most likely pre-squash point.
Action greedy_action(const DenseNetwork& actor, const ActionSpace& space, const Eigen::VectorXd& x);

Eigen::VectorXd critic_input(const Eigen::VectorXd& x, const Eigen::VectorXd& action_norm);
double critic_value(const DenseNetwork& critic, const Eigen::VectorXd& x, const Action& action, const ActionSpace& space);

struct Transition {
  StateVector s;
  Action a;
  Eigen::VectorXd pre_squash;
  double r = 0.0;
  StateVector s_next;
  bool done = false;
};

struct TrajectoryMeta {
  std::uint64_t seed = 0;
  double r_tar = 0.0;          // first-frame target
  double achieved_bpp = 0.0;   // mean emitted rate
  double mean_distortion = 0.0;
  double episode_return = 0.0;
};

struct Trajectory {
  std::vector<Transition> transitions;
  TrajectoryMeta meta;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 200);

  // FIFO eviction at capacity. The trajectory must end with its only done flag.
  void push(Trajectory trajectory);
  // Uniform without replacement when at least `count` are stored, with
  // replacement otherwise. Throws InvalidArgument when empty.
  std::vector<const Trajectory*> sample(Rng& rng, std::size_t count = 32) const;

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Trajectory& at(std::size_t i) const { return items_.at(i); }

 private:
  std::size_t capacity_;
  std::deque<Trajectory> items_;
};

struct TargetNetworks {
  DenseNetwork q1;
  DenseNetwork q2;
};

struct TwinCritics {
  DenseNetwork q1;
  DenseNetwork q2;
  OptimizerState opt1;
  OptimizerState opt2;
};

// Network-ready batch: columns are samples.
struct TransitionBatch {
  Eigen::MatrixXd x;       // state inputs
  Eigen::MatrixXd a_norm;  // tanh(pre_squash)
  Eigen::VectorXd r;
  Eigen::MatrixXd x_next;
  Eigen::VectorXd done;    // 0 or 1

  Eigen::Index size() const { return x.cols(); }
};

// y = r + gamma (1 - done) (min(Q1', Q2')(s', a') - eps log pi(a'|s')),
// a' = squash(mean + std * noise) drawn from the current policy at s'.
double critic_target(double r, bool done, const Eigen::VectorXd& x_next, const DenseNetwork& actor,
                     const TargetNetworks& targets, const ActionSpace& space, double gamma, double eps,
                     const Eigen::VectorXd& noise);
Eigen::VectorXd critic_targets(const TransitionBatch& batch, const DenseNetwork& actor, const TargetNetworks& targets,
                               const ActionSpace& space, double gamma, double eps, const Eigen::MatrixXd& noise);

struct CriticUpdateResult {
  double loss1 = 0.0;
  double loss2 = 0.0;
  bool skipped = false;
  Eigen::MatrixXd state_grad;  // d(loss1 + loss2)/dx, if requested
};

// One Adam step on each twin toward the shared targets y (mean squared
// error), each twin's gradient clipped to grad_clip. A non-finite loss or
// gradient skips both steps.
CriticUpdateResult critic_update(const TransitionBatch& batch, const Eigen::VectorXd& y, TwinCritics& critics, double lr,
                                 double grad_clip, bool want_state_grad = false);

struct ActorLossResult {
  double loss = 0.0;
  NetworkGrads grads;
};

// J = mean(eps * log pi(a|s) - min(Q1, Q2)(s, a)) with a = squash(mean + std *
// noise). Gradients flow into the actor only.
ActorLossResult actor_loss(const Eigen::MatrixXd& x, const DenseNetwork& actor, const DenseNetwork& q1,
                           const DenseNetwork& q2, const ActionSpace& space, double eps, const Eigen::MatrixXd& noise,
                           bool want_grads = true);

struct ReparamGradient {
  Eigen::VectorXd d_mean;
  Eigen::VectorXd d_log_std;
};

// Per-sample gradient of eps * log pi - Q with respect to the policy head for
// a fixed noise draw, given dQ/d(normalized action).
ReparamGradient reparam_gradient(const Eigen::VectorXd& mean, const Eigen::VectorXd& log_std,
                                 const Eigen::VectorXd& noise, const Eigen::VectorXd& dq_daction, double eps);

// target <- (1 - xi) * online + xi * target; xi is the retention factor.
void soft_update(const DenseNetwork& online, DenseNetwork& target, double xi);

struct SacConfig {
  int hidden_units = 128;
  int hidden_layers = 3;
  double log_std_bias_init = -1.0;
  double feature_lr = 1e-4;
};

struct SacStepConfig {
  double gamma = 0.98;
  double xi = 0.995;
  double epsilon = 5e-4;
  double actor_lr = 5e-4;
  double critic_lr = 5e-3;
  double grad_clip = 1.0;
  bool update_actor = true;
  bool update_features = false;
};

struct SacStepResult {
  double critic_loss = 0.0;  // mean of both twins
  double actor_loss = 0.0;
  bool critic_skipped = false;
  bool actor_skipped = false;
  bool actor_updated = false;
};

// Actor, twin critics, delayed critic targets and the feature provider.
class SacAgent {
 public:
  SacAgent(ActionSpace space, std::unique_ptr<FeatureProvider> provider, SacConfig config, Rng& rng);
  SacAgent(const SacAgent& other);
  SacAgent& operator=(const SacAgent& other);
  SacAgent(SacAgent&&) noexcept = default;
  SacAgent& operator=(SacAgent&&) noexcept = default;

  const ActionSpace& space() const { return space_; }
  const FeatureProvider& provider() const { return *provider_; }
  int input_dim() const { return provider_->feature_dim() + StateVector::kAuxDims; }

  // Network input for one state / a batch of states.
  Eigen::VectorXd input(const StateVector& s) const;
  Eigen::MatrixXd inputs(const std::vector<const StateVector*>& states, ForwardCache* feature_cache = nullptr) const;

  SampledAction act(const StateVector& s, Rng& rng) const;
  Action act_greedy(const StateVector& s) const;

  // One update on the transitions of the sampled trajectories.
  SacStepResult update(const std::vector<const Trajectory*>& batch, const SacStepConfig& step, Rng& rng);

  const DenseNetwork& actor() const { return actor_; }
  DenseNetwork& mutable_actor() { return actor_; }
  const TwinCritics& critics() const { return critics_; }
  TwinCritics& mutable_critics() { return critics_; }
  const TargetNetworks& targets() const { return targets_; }
  TargetNetworks& mutable_targets() { return targets_; }

  void save_to(Checkpoint& ckpt) const;
  void load_from(const Checkpoint& ckpt);

 private:
  ActionSpace space_;
  std::unique_ptr<FeatureProvider> provider_;
  SacConfig config_;
  DenseNetwork actor_;
  OptimizerState actor_opt_;
  TwinCritics critics_;
  TargetNetworks targets_;
  OptimizerState feature_opt_;
};

}  // namespace ratelab
