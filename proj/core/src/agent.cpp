#include "ratelab/agent.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <json.hpp>
#include <numbers>
#include <numeric>

#include "ratelab/error.hpp"

namespace ratelab {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * log(2 pi)

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

// log(1 - tanh(u)^2), stable for large |u|.
double log_one_minus_tanh_sq(double u) { return 2.0 * (std::numbers::ln2 - u - softplus(-2.0 * u)); }

double clamp_log_std(double v) { return std::clamp(v, kLogStdMin, kLogStdMax); }

}  // namespace

// ---------------------------------------------------------------------------
// Action space

ActionSpace ActionSpace::from_profile(const CodecProfile& profile, bool joint) {
  ActionSpace s;
  s.lambda_min = profile.lambda_min;
  s.lambda_max = profile.lambda_max;
  s.m_min = profile.m_min;
  s.m_max = profile.m_max;
  s.joint = joint;
  return s;
}

Action ActionSpace::from_squashed(const Eigen::VectorXd& squashed) const {
  if (squashed.size() != dims()) throw InvalidArgument("squashed action has wrong dimension");
  auto map = [&](int i) {
    const double frac = 0.5 * (squashed(i) + 1.0);
    return std::min(high(i), low(i) + (high(i) - low(i)) * frac);
  };
  Action a;
  a.lambda = map(0);
  a.m = joint ? map(1) : m_max;
  return a;
}

Eigen::VectorXd ActionSpace::normalize(const Action& action) const {
  Eigen::VectorXd v(dims());
  v(0) = 2.0 * (action.lambda - lambda_min) / (lambda_max - lambda_min) - 1.0;
  if (joint) v(1) = 2.0 * (action.m - m_min) / (m_max - m_min) - 1.0;
  return v;
}

double ActionSpace::log_half_range() const {
  double s = std::log(0.5 * (lambda_max - lambda_min));
  if (joint) s += std::log(0.5 * (m_max - m_min));
  return s;
}

bool ActionSpace::contains(const Action& a) const {
  const bool lambda_ok = a.lambda >= lambda_min && a.lambda <= lambda_max;
  const bool m_ok = joint ? (a.m >= m_min && a.m <= m_max) : a.m == m_max;
  return lambda_ok && m_ok;
}

// ---------------------------------------------------------------------------
// State assembly

Eigen::VectorXd StateVector::aux() const {
  Eigen::VectorXd v(kAuxDims);
  v << poc_norm, r_rem_norm, r_tar_norm, lambda_prev_norm, m_prev_norm, frames_left_norm, first_p_flag;
  return v;
}

Eigen::VectorXd StateVector::to_vector() const {
  Eigen::VectorXd v(feature_slots.size() + kAuxDims);
  v << feature_slots, aux();
  return v;
}

bool StateVector::operator==(const StateVector& o) const {
  return feature_slots.size() == o.feature_slots.size() && feature_slots == o.feature_slots && aux() == o.aux();
}

StateVector assemble_state(const Eigen::VectorXd& features, const EnvState& env, const CodecProfile& profile,
                           const BudgetContext& budget) {
  if (env.n_frames < 1 || env.t < 0 || env.t >= env.n_frames) {
    throw InvalidArgument("state assembly needs 0 <= t < N");
  }
  if (!features.allFinite()) throw InvalidArgument("non-finite feature slots");
  if (!std::isfinite(budget.r_tar) || !(budget.r_tar > 0.0) || !(budget.r_tar_scale > 0.0) ||
      !std::isfinite(budget.r_rem) || !std::isfinite(env.lambda_prev) || !std::isfinite(env.m_prev)) {
    throw InvalidArgument("non-finite or invalid budget context");
  }
  if (budget.window_frames < 1 || budget.frames_left < 0 || budget.frames_left > budget.window_frames) {
    throw InvalidArgument("invalid budget window");
  }
  StateVector s;
  s.feature_slots = features;
  s.poc_norm = static_cast<double>(env.t) / env.n_frames;
  s.r_rem_norm = budget.r_rem / budget.r_tar;
  s.r_tar_norm = budget.r_tar / budget.r_tar_scale;
  s.lambda_prev_norm = (env.lambda_prev - profile.lambda_min) / (profile.lambda_max - profile.lambda_min);
  s.m_prev_norm = (env.m_prev - profile.m_min) / (profile.m_max - profile.m_min);
  s.frames_left_norm = static_cast<double>(budget.frames_left) / budget.window_frames;
  s.first_p_flag = env.t == 1 ? 1.0 : 0.0;
  return s;
}

// ---------------------------------------------------------------------------
// Policy

PolicyOutput policy_output(const DenseNetwork& actor, const Eigen::VectorXd& x, const ActionSpace& space) {
  const int d = space.dims();
  if (actor.output_dim() != 2 * d) throw InvalidArgument("actor head does not match the action space");
  const Eigen::VectorXd out = forward(actor, x);
  PolicyOutput p;
  p.mean = out.head(d);
  p.raw_log_std = out.tail(d);
  p.log_std = p.raw_log_std.unaryExpr(&clamp_log_std);
  return p;
}

double squashed_log_prob(const PolicyOutput& policy, const Eigen::VectorXd& u, const ActionSpace& space) {
  double lp = -space.log_half_range();
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    const double z = (u(i) - policy.mean(i)) * std::exp(-policy.log_std(i));
    lp += -0.5 * z * z - policy.log_std(i) - kHalfLog2Pi - log_one_minus_tanh_sq(u(i));
  }
  return lp;
}

SampledAction sample_action_with_noise(const DenseNetwork& actor, const ActionSpace& space, const Eigen::VectorXd& x,
                                       const Eigen::VectorXd& noise) {
  const auto p = policy_output(actor, x, space);
  if (noise.size() != space.dims()) throw InvalidArgument("noise has wrong dimension");
  SampledAction s;
  s.pre_squash = p.mean + (p.log_std.array().exp() * noise.array()).matrix();
  s.action = space.from_squashed(s.pre_squash.array().tanh().matrix());
  s.log_prob = squashed_log_prob(p, s.pre_squash, space);
  return s;
}

SampledAction sample_action(const DenseNetwork& actor, const ActionSpace& space, const Eigen::VectorXd& x, Rng& rng) {
  Eigen::VectorXd noise(space.dims());
  for (Eigen::Index i = 0; i < noise.size(); ++i) noise(i) = rng.normal();
  return sample_action_with_noise(actor, space, x, noise);
}

Action greedy_action(const DenseNetwork& actor, const ActionSpace& space, const Eigen::VectorXd& x) {
  const auto p = policy_output(actor, x, space);
  return space.from_squashed(p.mean.array().tanh().matrix());
}

Eigen::VectorXd critic_input(const Eigen::VectorXd& x, const Eigen::VectorXd& action_norm) {
  Eigen::VectorXd v(x.size() + action_norm.size());
  v << x, action_norm;
  return v;
}

double critic_value(const DenseNetwork& critic, const Eigen::VectorXd& x, const Action& action,
                    const ActionSpace& space) {
  const Eigen::VectorXd out = forward(critic, critic_input(x, space.normalize(action)));
  if (out.size() != 1) throw InvalidArgument("critic must have a scalar head");
  return out(0);
}

// ---------------------------------------------------------------------------
// Replay buffer

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) throw InvalidArgument("replay buffer capacity must be positive");
}

void ReplayBuffer::push(Trajectory trajectory) {
  const auto& tr = trajectory.transitions;
  if (tr.empty() || !tr.back().done) throw InvalidArgument("only complete trajectories can be stored");
  for (std::size_t i = 0; i + 1 < tr.size(); ++i) {
    if (tr[i].done) throw InvalidArgument("trajectory has a done flag before its last transition");
  }
  if (items_.size() == capacity_) items_.pop_front();
  items_.push_back(std::move(trajectory));
}

std::vector<const Trajectory*> ReplayBuffer::sample(Rng& rng, std::size_t count) const {
  if (items_.empty()) throw InvalidArgument("cannot sample from an empty replay buffer");
  std::vector<const Trajectory*> out;
  out.reserve(count);
  if (items_.size() >= count) {
    std::vector<std::size_t> idx(items_.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.index(idx.size() - i));
      std::swap(idx[i], idx[j]);
      out.push_back(&items_[idx[i]]);
    }
  } else {
    for (std::size_t i = 0; i < count; ++i) out.push_back(&items_[rng.index(items_.size())]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Critic targets and updates

namespace {

struct BatchPolicy {
  Eigen::MatrixXd mean;
  Eigen::MatrixXd log_std;
  Eigen::MatrixXd in_range;  // 1 where the raw log-std was inside the clamp
  Eigen::MatrixXd u;
  Eigen::MatrixXd squashed;
  Eigen::VectorXd log_prob;
};

BatchPolicy batch_policy(const Eigen::MatrixXd& out, const ActionSpace& space, const Eigen::MatrixXd& noise) {
  const int d = space.dims();
  if (noise.rows() != d || noise.cols() != out.cols()) throw InvalidArgument("noise has wrong shape");
  BatchPolicy p;
  p.mean = out.topRows(d);
  const Eigen::MatrixXd raw = out.bottomRows(d);
  p.log_std = raw.unaryExpr(&clamp_log_std);
  p.in_range = ((raw.array() >= kLogStdMin) && (raw.array() <= kLogStdMax)).cast<double>().matrix();
  p.u = p.mean + (p.log_std.array().exp() * noise.array()).matrix();
  p.squashed = p.u.array().tanh().matrix();
  p.log_prob.resize(out.cols());
  const double base = -space.log_half_range() - d * kHalfLog2Pi;
  for (Eigen::Index j = 0; j < out.cols(); ++j) {
    double lp = base;
    for (int i = 0; i < d; ++i) {
      lp += -0.5 * noise(i, j) * noise(i, j) - p.log_std(i, j) - log_one_minus_tanh_sq(p.u(i, j));
    }
    p.log_prob(j) = lp;
  }
  return p;
}

Eigen::MatrixXd stack(const Eigen::MatrixXd& top, const Eigen::MatrixXd& bottom) {
  Eigen::MatrixXd m(top.rows() + bottom.rows(), top.cols());
  m << top, bottom;
  return m;
}

}  // namespace

Eigen::VectorXd critic_targets(const TransitionBatch& batch, const DenseNetwork& actor, const TargetNetworks& targets,
                               const ActionSpace& space, double gamma, double eps, const Eigen::MatrixXd& noise) {
  const auto p = batch_policy(forward_batch(actor, batch.x_next), space, noise);
  const Eigen::MatrixXd c_in = stack(batch.x_next, p.squashed);
  const Eigen::RowVectorXd q1 = forward_batch(targets.q1, c_in);
  const Eigen::RowVectorXd q2 = forward_batch(targets.q2, c_in);
  const Eigen::VectorXd soft_value = q1.cwiseMin(q2).transpose() - eps * p.log_prob;
  return batch.r + gamma * ((1.0 - batch.done.array()) * soft_value.array()).matrix();
}

double critic_target(double r, bool done, const Eigen::VectorXd& x_next, const DenseNetwork& actor,
                     const TargetNetworks& targets, const ActionSpace& space, double gamma, double eps,
                     const Eigen::VectorXd& noise) {
  TransitionBatch b;
  b.x_next = x_next;
  b.x = x_next;
  b.r = Eigen::VectorXd::Constant(1, r);
  b.done = Eigen::VectorXd::Constant(1, done ? 1.0 : 0.0);
  b.a_norm = Eigen::MatrixXd::Zero(space.dims(), 1);
  return critic_targets(b, actor, targets, space, gamma, eps, noise)(0);
}

CriticUpdateResult critic_update(const TransitionBatch& batch, const Eigen::VectorXd& y, TwinCritics& critics,
                                 double lr, double grad_clip, bool want_state_grad) {
  const Eigen::Index n = batch.size();
  if (n == 0) throw InvalidArgument("critic update needs a nonempty batch");
  if (y.size() != n) throw InvalidArgument("target vector does not match the batch");
  const Eigen::MatrixXd c_in = stack(batch.x, batch.a_norm);

  CriticUpdateResult result;
  ForwardCache cache1, cache2;
  const Eigen::RowVectorXd q1 = forward_batch(critics.q1, c_in, &cache1);
  const Eigen::RowVectorXd q2 = forward_batch(critics.q2, c_in, &cache2);
  const Eigen::RowVectorXd e1 = q1 - y.transpose();
  const Eigen::RowVectorXd e2 = q2 - y.transpose();
  result.loss1 = e1.squaredNorm() / static_cast<double>(n);
  result.loss2 = e2.squaredNorm() / static_cast<double>(n);

  auto g1 = backward(critics.q1, cache1, (2.0 / static_cast<double>(n)) * e1);
  auto g2 = backward(critics.q2, cache2, (2.0 / static_cast<double>(n)) * e2);
  if (!std::isfinite(result.loss1) || !std::isfinite(result.loss2) || !g1.params.all_finite() ||
      !g2.params.all_finite()) {
    result.skipped = true;
    return result;
  }
  if (want_state_grad) result.state_grad = (g1.input + g2.input).topRows(batch.x.rows());
  clip_by_global_norm(g1.params, grad_clip);
  clip_by_global_norm(g2.params, grad_clip);
  adam_step(critics.q1, g1.params, critics.opt1, lr);
  adam_step(critics.q2, g2.params, critics.opt2, lr);
  return result;
}

ReparamGradient reparam_gradient(const Eigen::VectorXd& mean, const Eigen::VectorXd& log_std,
                                 const Eigen::VectorXd& noise, const Eigen::VectorXd& dq_daction, double eps) {
  ReparamGradient g;
  g.d_mean.resize(mean.size());
  g.d_log_std.resize(mean.size());
  for (Eigen::Index i = 0; i < mean.size(); ++i) {
    const double sigma = std::exp(log_std(i));
    const double u = mean(i) + sigma * noise(i);
    const double t = std::tanh(u);
    // d(eps log pi - Q)/du, then chain through u = mean + sigma * noise.
    const double d_u = eps * 2.0 * t - dq_daction(i) * (1.0 - t * t);
    g.d_mean(i) = d_u;
    g.d_log_std(i) = d_u * sigma * noise(i) - eps;
  }
  return g;
}

ActorLossResult actor_loss(const Eigen::MatrixXd& x, const DenseNetwork& actor, const DenseNetwork& q1,
                           const DenseNetwork& q2, const ActionSpace& space, double eps, const Eigen::MatrixXd& noise,
                           bool want_grads) {
  const Eigen::Index n = x.cols();
  if (n == 0) throw InvalidArgument("actor loss needs a nonempty batch");
  const int d = space.dims();
  ForwardCache actor_cache;
  const Eigen::MatrixXd out = forward_batch(actor, x, &actor_cache);
  const auto p = batch_policy(out, space, noise);
  const Eigen::MatrixXd c_in = stack(x, p.squashed);
  ForwardCache cache1, cache2;
  const Eigen::RowVectorXd v1 = forward_batch(q1, c_in, &cache1);
  const Eigen::RowVectorXd v2 = forward_batch(q2, c_in, &cache2);
  Eigen::RowVectorXd pick1(n), pick2(n);
  double total = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    const bool first = v1(j) <= v2(j);
    pick1(j) = first ? 1.0 : 0.0;
    pick2(j) = first ? 0.0 : 1.0;
    total += eps * p.log_prob(j) - (first ? v1(j) : v2(j));
  }
  ActorLossResult result;
  result.loss = total / static_cast<double>(n);
  if (!want_grads) return result;

  const Eigen::MatrixXd dq = backward(q1, cache1, pick1, false).input.bottomRows(d) +
                             backward(q2, cache2, pick2, false).input.bottomRows(d);
  Eigen::MatrixXd upstream(2 * d, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto g = reparam_gradient(p.mean.col(j), p.log_std.col(j), noise.col(j), dq.col(j), eps);
    upstream.col(j).head(d) = g.d_mean;
    upstream.col(j).tail(d) = g.d_log_std.cwiseProduct(p.in_range.col(j));
  }
  upstream /= static_cast<double>(n);
  result.grads = backward(actor, actor_cache, upstream).params;
  return result;
}

void soft_update(const DenseNetwork& online, DenseNetwork& target, double xi) { blend_parameters(online, target, xi); }

// ---------------------------------------------------------------------------
// Agent

SacAgent::SacAgent(ActionSpace space, std::unique_ptr<FeatureProvider> provider, SacConfig config, Rng& rng)
    : space_(space), provider_(std::move(provider)), config_(config) {
  if (!provider_) throw InvalidArgument("agent needs a feature provider");
  if (config_.hidden_layers < 1 || config_.hidden_units < 1) throw InvalidArgument("invalid hidden layer sizes");
  const int d = space_.dims();
  std::vector<int> actor_sizes{input_dim()};
  std::vector<int> critic_sizes{input_dim() + d};
  for (int i = 0; i < config_.hidden_layers; ++i) {
    actor_sizes.push_back(config_.hidden_units);
    critic_sizes.push_back(config_.hidden_units);
  }
  actor_sizes.push_back(2 * d);
  critic_sizes.push_back(1);
  actor_ = DenseNetwork::make(actor_sizes, Activation::kRelu, Activation::kIdentity, rng);
  actor_.mutable_layers().back().bias.tail(d).setConstant(config_.log_std_bias_init);
  critics_.q1 = DenseNetwork::make(critic_sizes, Activation::kRelu, Activation::kIdentity, rng);
  critics_.q2 = DenseNetwork::make(critic_sizes, Activation::kRelu, Activation::kIdentity, rng);
  critics_.opt1 = OptimizerState::for_network(critics_.q1);
  critics_.opt2 = OptimizerState::for_network(critics_.q2);
  targets_.q1 = critics_.q1;
  targets_.q2 = critics_.q2;
  actor_opt_ = OptimizerState::for_network(actor_);
  if (const auto* net = provider_->trainable()) feature_opt_ = OptimizerState::for_network(*net);
}

SacAgent::SacAgent(const SacAgent& other)
    : space_(other.space_),
      provider_(other.provider_->clone()),
      config_(other.config_),
      actor_(other.actor_),
      actor_opt_(other.actor_opt_),
      critics_(other.critics_),
      targets_(other.targets_),
      feature_opt_(other.feature_opt_) {}

SacAgent& SacAgent::operator=(const SacAgent& other) {
  if (this != &other) {
    SacAgent copy(other);
    *this = std::move(copy);
  }
  return *this;
}

Eigen::VectorXd SacAgent::input(const StateVector& s) const {
  Eigen::VectorXd v(input_dim());
  v << provider_->embed(s.feature_slots), s.aux();
  return v;
}

Eigen::MatrixXd SacAgent::inputs(const std::vector<const StateVector*>& states, ForwardCache* feature_cache) const {
  const auto n = static_cast<Eigen::Index>(states.size());
  Eigen::MatrixXd raw(provider_->raw_dim(), n);
  Eigen::MatrixXd aux(StateVector::kAuxDims, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    raw.col(j) = states[static_cast<std::size_t>(j)]->feature_slots;
    aux.col(j) = states[static_cast<std::size_t>(j)]->aux();
  }
  return stack(provider_->embed(raw, feature_cache), aux);
}

SampledAction SacAgent::act(const StateVector& s, Rng& rng) const { return sample_action(actor_, space_, input(s), rng); }

Action SacAgent::act_greedy(const StateVector& s) const { return greedy_action(actor_, space_, input(s)); }

SacStepResult SacAgent::update(const std::vector<const Trajectory*>& batch, const SacStepConfig& step, Rng& rng) {
  std::vector<const StateVector*> states, next_states;
  std::vector<const Transition*> transitions;
  for (const auto* traj : batch) {
    for (const auto& tr : traj->transitions) {
      states.push_back(&tr.s);
      next_states.push_back(&tr.s_next);
      transitions.push_back(&tr);
    }
  }
  if (transitions.empty()) throw InvalidArgument("update needs at least one transition");
  const auto n = static_cast<Eigen::Index>(transitions.size());
  const int d = space_.dims();

  const bool learn_features = step.update_features && provider_->trainable() != nullptr;
  ForwardCache feature_cache;
  TransitionBatch tb;
  tb.x = inputs(states, learn_features ? &feature_cache : nullptr);
  tb.x_next = inputs(next_states);
  tb.a_norm.resize(d, n);
  tb.r.resize(n);
  tb.done.resize(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto& tr = *transitions[static_cast<std::size_t>(j)];
    if (tr.pre_squash.size() != d) throw InvalidArgument("stored pre-squash sample has wrong dimension");
    tb.a_norm.col(j) = tr.pre_squash.array().tanh().matrix();
    tb.r(j) = tr.r;
    tb.done(j) = tr.done ? 1.0 : 0.0;
  }

  auto draw_noise = [&]() {
    Eigen::MatrixXd noise(d, n);
    for (Eigen::Index j = 0; j < n; ++j) {
      for (int i = 0; i < d; ++i) noise(i, j) = rng.normal();
    }
    return noise;
  };

  SacStepResult result;
  const Eigen::VectorXd y = critic_targets(tb, actor_, targets_, space_, step.gamma, step.epsilon, draw_noise());
  auto critic = critic_update(tb, y, critics_, step.critic_lr, step.grad_clip, learn_features);
  result.critic_loss = 0.5 * (critic.loss1 + critic.loss2);
  result.critic_skipped = critic.skipped;

  if (learn_features && !critic.skipped) {
    auto* net = provider_->trainable();
    const Eigen::MatrixXd upstream = critic.state_grad.topRows(provider_->feature_dim());
    auto g = backward(*net, feature_cache, upstream).params;
    if (g.all_finite()) {
      clip_by_global_norm(g, step.grad_clip);
      adam_step(*net, g, feature_opt_, config_.feature_lr);
    }
  }

  if (step.update_actor) {
    const Eigen::MatrixXd noise = draw_noise();
    auto actor = actor_loss(tb.x, actor_, critics_.q1, critics_.q2, space_, step.epsilon, noise);
    result.actor_loss = actor.loss;
    if (std::isfinite(actor.loss) && actor.grads.all_finite()) {
      clip_by_global_norm(actor.grads, step.grad_clip);
      adam_step(actor_, actor.grads, actor_opt_, step.actor_lr);
      result.actor_updated = true;
    } else {
      result.actor_skipped = true;
    }
  }

  soft_update(critics_.q1, targets_.q1, step.xi);
  soft_update(critics_.q2, targets_.q2, step.xi);
  return result;
}

void SacAgent::save_to(Checkpoint& ckpt) const {
  ckpt.networks["actor"] = actor_;
  ckpt.networks["critic1"] = critics_.q1;
  ckpt.networks["critic2"] = critics_.q2;
  ckpt.networks["target1"] = targets_.q1;
  ckpt.networks["target2"] = targets_.q2;
  ckpt.optimizers["actor"] = actor_opt_;
  ckpt.optimizers["critic1"] = critics_.opt1;
  ckpt.optimizers["critic2"] = critics_.opt2;
  if (const auto* net = provider_->trainable()) {
    ckpt.networks["features"] = *net;
    ckpt.optimizers["features"] = feature_opt_;
  }
  nlohmann::json meta = {{"provider", provider_->name()},
                         {"joint_action", space_.joint},
                         {"lambda_min", space_.lambda_min},
                         {"lambda_max", space_.lambda_max},
                         {"m_min", space_.m_min},
                         {"m_max", space_.m_max},
                         {"hidden_units", config_.hidden_units},
                         {"hidden_layers", config_.hidden_layers}};
  ckpt.texts["agent"] = meta.dump();
}

void SacAgent::load_from(const Checkpoint& ckpt) {
  const auto it = ckpt.texts.find("agent");
  if (it == ckpt.texts.end()) throw InvalidArgument("checkpoint has no agent section");
  const auto meta = nlohmann::json::parse(it->second);
  if (meta.at("provider").get<std::string>() != provider_->name() || meta.at("joint_action").get<bool>() != space_.joint ||
      meta.at("lambda_min").get<double>() != space_.lambda_min ||
      meta.at("lambda_max").get<double>() != space_.lambda_max) {
    throw InvalidArgument("checkpoint agent does not match the configured action space or feature provider");
  }
  auto net = [&](const char* name) -> const DenseNetwork& {
    const auto found = ckpt.networks.find(name);
    if (found == ckpt.networks.end()) throw InvalidArgument(std::string("checkpoint is missing network ") + name);
    return found->second;
  };
  auto opt = [&](const char* name) -> const OptimizerState& {
    const auto found = ckpt.optimizers.find(name);
    if (found == ckpt.optimizers.end()) throw InvalidArgument(std::string("checkpoint is missing optimizer ") + name);
    return found->second;
  };
  auto same_shape = [](const DenseNetwork& a, const DenseNetwork& b) {
    if (a.layers().size() != b.layers().size()) return false;
    for (std::size_t i = 0; i < a.layers().size(); ++i) {
      const auto& x = a.layers()[i].weight;
      const auto& y = b.layers()[i].weight;
      if (x.rows() != y.rows() || x.cols() != y.cols()) return false;
    }
    return true;
  };
  for (const auto& [name, current] : {std::pair<const char*, const DenseNetwork*>{"actor", &actor_},
                                      {"critic1", &critics_.q1}, {"critic2", &critics_.q2},
                                      {"target1", &targets_.q1}, {"target2", &targets_.q2}}) {
    if (!same_shape(net(name), *current)) {
      throw InvalidArgument(std::string("checkpoint network ") + name + " does not match the configured shape");
    }
  }
  if (const auto* fnet = provider_->trainable(); fnet && !same_shape(net("features"), *fnet)) {
    throw InvalidArgument("checkpoint network features does not match the configured shape");
  }
  actor_ = net("actor");
  critics_.q1 = net("critic1");
  critics_.q2 = net("critic2");
  targets_.q1 = net("target1");
  targets_.q2 = net("target2");
  actor_opt_ = opt("actor");
  critics_.opt1 = opt("critic1");
  critics_.opt2 = opt("critic2");
  if (auto* fnet = provider_->trainable()) {
    *fnet = net("features");
    feature_opt_ = opt("features");
  }
}

}  // namespace ratelab
