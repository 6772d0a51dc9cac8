#include "ratelab/trainer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <limits>
#include <sstream>

#include "csv_util.hpp"
#include "ratelab/error.hpp"

namespace ratelab {

namespace fs = std::filesystem;

CodecModel EnvSetup::model() const {
  return CodecModel::with_signaling(profile, coupling, sequence.frame_width, sequence.frame_height);
}

SyntheticEnv EnvSetup::make_env(std::uint64_t seed, int n_frames, double c0) const {
  SequenceSpec spec = sequence;
  spec.seed = seed;
  spec.n_frames = n_frames;
  spec.c0 = c0;
  return SyntheticEnv(model(), new_sequence(spec));
}

void EnvSetup::validate() const {
  profile.validate();
  coupling.validate();
  sequence.validate();
}

void TrainConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) throw InvalidArgument(std::string(name) + " must be positive");
  };
  positive(epsilon_start, "epsilon_start");
  positive(epsilon_end, "epsilon_end");
  positive(actor_lr_start, "actor_lr_start");
  positive(actor_lr_end, "actor_lr_end");
  positive(critic_lr_start, "critic_lr_start");
  positive(critic_lr_end, "critic_lr_end");
  positive(feature_lr, "feature_lr");
  positive(grad_clip, "grad_clip");
  positive(target_min_bpp, "target_min_bpp");
  positive(c0_min, "c0_min");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw InvalidArgument("gamma must lie in [0, 1)");
  if (!(xi >= 0.0 && xi < 1.0)) throw InvalidArgument("xi must lie in [0, 1)");
  if (epochs < 1) throw InvalidArgument("epochs must be at least 1");
  if (iterations_per_epoch < 1) throw InvalidArgument("iterations_per_epoch must be at least 1");
  if (phase1_epochs < 0) throw InvalidArgument("phase1_epochs must be >= 0");
  if (phase1_frames < 1 || phase2_frames < 1) throw InvalidArgument("phase frame counts must be positive");
  if (batch_size < 1 || buffer_capacity < 1) throw InvalidArgument("batch_size and buffer_capacity must be positive");
  if (learning_starts < 1) throw InvalidArgument("learning_starts must be at least 1");
  if (actor_update_period < 1) throw InvalidArgument("actor_update_period must be at least 1");
  if (lr_warmup_epochs < 0) throw InvalidArgument("lr_warmup_epochs must be >= 0");
  if (hidden_units < 1 || hidden_layers < 1) throw InvalidArgument("hidden sizes must be positive");
  if (!(target_max_bpp >= target_min_bpp)) throw InvalidArgument("target_max_bpp must be >= target_min_bpp");
  if (!(c0_max >= c0_min)) throw InvalidArgument("c0_max must be >= c0_min");
  if (!(trace_augment_prob >= 0.0 && trace_augment_prob <= 1.0)) throw InvalidArgument("trace_augment_prob must lie in [0, 1]");
  if (validation_seeds < 1 || validation_targets.empty()) throw InvalidArgument("validation needs seeds and targets");
  for (double t : validation_targets) positive(t, "validation target");
  if (max_consecutive_failures < 1) throw InvalidArgument("max_consecutive_failures must be positive");
  if (features != "descriptor" && features != "handcrafted" && features != "learned") {
    throw InvalidArgument("unknown feature provider '" + features + "' (expected descriptor, handcrafted or learned)");
  }
  reward.validate();
}

double TrainConfig::r_tar_scale() const { return std::sqrt(target_min_bpp * target_max_bpp); }

double TrainConfig::epsilon_at(int epoch) const {
  return LrSchedule{epsilon_start, epsilon_end, static_cast<double>(std::max(1, epochs - 1)), 0.0}.at(epoch);
}

LrSchedule TrainConfig::actor_schedule() const {
  return {actor_lr_start, actor_lr_end, static_cast<double>(std::max(1, epochs - 1)),
          static_cast<double>(std::min(lr_warmup_epochs, epochs - 1))};
}

LrSchedule TrainConfig::critic_schedule() const {
  return {critic_lr_start, critic_lr_end, static_cast<double>(std::max(1, epochs - 1)),
          static_cast<double>(std::min(lr_warmup_epochs, epochs - 1))};
}

SacStepConfig TrainConfig::step_config(int epoch, long long iteration) const {
  SacStepConfig s;
  s.gamma = gamma;
  s.xi = xi;
  s.epsilon = epsilon_at(epoch);
  s.actor_lr = actor_schedule().at(epoch);
  s.critic_lr = critic_schedule().at(epoch);
  s.grad_clip = grad_clip;
  s.update_actor = actor_update_at(iteration);
  s.update_features = features_trainable_at(epoch);
  return s;
}

std::vector<std::uint64_t> validation_seed_list(int count) { return eval_seed_list(count, kValidationSeedBase); }

std::vector<std::uint64_t> eval_seed_list(int count, std::uint64_t base) {
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < count; ++i) seeds.push_back(base + static_cast<std::uint64_t>(i));
  return seeds;
}

SacAgent make_agent(const TrainConfig& config, const EnvSetup& env, Rng& rng) {
  SacConfig sc;
  sc.hidden_units = config.hidden_units;
  sc.hidden_layers = config.hidden_layers;
  sc.log_std_bias_init = config.log_std_bias_init;
  sc.feature_lr = config.feature_lr;
  auto provider = make_feature_provider(config.features, env.sequence.c_max, env.coupling.d_ref, rng);
  return SacAgent(ActionSpace::from_profile(env.profile, config.joint_action), std::move(provider), sc, rng);
}

// ---------------------------------------------------------------------------
// Rollouts

AgentController::AgentController(const SacAgent& agent, bool sample, Rng* rng)
    : agent_(agent), sample_(sample), rng_(rng) {
  if (sample_ && rng_ == nullptr) throw InvalidArgument("sampling controller needs a generator");
}

void AgentController::begin_episode(const Environment& /*env*/) {
  trajectory_ = {};
  pending_.reset();
}

Action AgentController::act(const ControlContext& ctx) {
  const auto& env = ctx.env;
  const int t = env.state().t;
  const FeatureContext fc{env.frame(t), t > 0 ? &env.frame(t - 1) : nullptr, env.state()};
  StateVector s = assemble_state(agent_.provider().raw(fc), env.state(), env.profile(), ctx.budget);
  if (pending_) {
    pending_->s_next = s;
    trajectory_.transitions.push_back(std::move(*pending_));
    pending_.reset();
  }
  current_ = std::move(s);
  if (!sample_) {
    current_pre_squash_.resize(0);
    return agent_.act_greedy(current_);
  }
  auto sa = agent_.act(current_, *rng_);
  current_pre_squash_ = std::move(sa.pre_squash);
  return sa.action;
}

void AgentController::observe(const ControlContext& /*ctx*/, const Action& action, const StepOutcome& outcome,
                              double reward) {
  Transition tr;
  tr.s = current_;
  tr.a = action;
  tr.pre_squash = current_pre_squash_;
  tr.r = reward;
  tr.done = outcome.done;
  if (outcome.done) {
    tr.s_next = current_;
    trajectory_.transitions.push_back(std::move(tr));
  } else {
    pending_ = std::move(tr);
  }
}

Trajectory AgentController::take_trajectory() {
  if (pending_) throw InvalidArgument("trajectory taken before the episode finished");
  return std::move(trajectory_);
}

Rollout rollout(Environment& env, const SacAgent& agent, const BandwidthTrace& trace, const EpisodeOptions& options,
                Rng& rng, RolloutMode mode) {
  AgentController controller(agent, mode == RolloutMode::kSample, &rng);
  Rollout r;
  r.episode = run_episode(env, controller, trace, options);
  r.trajectory = controller.take_trajectory();
  r.trajectory.meta.r_tar = trace.segments.front().r_tar;
  r.trajectory.meta.achieved_bpp = r.episode.mean_bpp;
  r.trajectory.meta.mean_distortion = r.episode.mean_distortion;
  r.trajectory.meta.episode_return = r.episode.episode_return;
  return r;
}

std::vector<double> epoch_targets(int count, double lo, double hi, Rng& rng) {
  if (count < 1) throw InvalidArgument("epoch_targets needs count >= 1");
  if (!(lo > 0.0) || !(hi >= lo)) throw InvalidArgument("epoch_targets needs 0 < lo <= hi");
  std::vector<double> pos;
  if (count == 1) {
    pos.push_back(rng.uniform());
  } else {
    const double step = 1.0 / (count - 1);
    for (int i = 0; i < count; ++i) pos.push_back(std::clamp(i * step + (rng.uniform() - 0.5) * 0.2 * step, 0.0, 1.0));
  }
  for (std::size_t i = pos.size(); i > 1; --i) std::swap(pos[i - 1], pos[rng.index(i)]);
  const double a = std::log(lo);
  const double b = std::log(hi);
  std::vector<double> out;
  for (double p : pos) out.push_back(std::clamp(std::exp(a + (b - a) * p), lo, hi));
  return out;
}

namespace {

BandwidthTrace augmented_trace(double r_tar, int n, Rng& rng) {
  constexpr int kMinSegment = 8;
  BandwidthTrace trace;
  std::vector<int> starts{0};
  const bool three = rng.uniform() < 0.5 && n >= 3 * kMinSegment;
  if (three) {
    const int c1 = kMinSegment + static_cast<int>(rng.index(static_cast<std::uint64_t>(n - 3 * kMinSegment + 1)));
    const int c2 = c1 + kMinSegment + static_cast<int>(rng.index(static_cast<std::uint64_t>(n - c1 - 2 * kMinSegment + 1)));
    starts.push_back(c1);
    starts.push_back(c2);
  } else {
    starts.push_back(kMinSegment + static_cast<int>(rng.index(static_cast<std::uint64_t>(n - 2 * kMinSegment + 1))));
  }
  for (int s : starts) trace.segments.push_back({s, r_tar * std::exp(rng.uniform(-0.1, 0.1))});
  return trace;
}

// Little-endian binary writer/reader for the replay buffer blob.
class BlobWriter {
 public:
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void vec(const Eigen::VectorXd& v) {
    u64(static_cast<std::uint64_t>(v.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) f64(v(i));
  }
  void state(const StateVector& s) {
    vec(s.feature_slots);
    vec(s.aux());
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class BlobReader {
 public:
  explicit BlobReader(const std::string& in) : in_(in) {}
  std::uint64_t u64() {
    if (pos_ + 8 > in_.size()) throw InvalidArgument("truncated replay buffer data");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  Eigen::VectorXd vec() {
    const auto n = u64();
    if (n > (in_.size() - pos_) / 8) throw InvalidArgument("corrupt replay buffer data");
    Eigen::VectorXd v(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = f64();
    return v;
  }
  StateVector state() {
    StateVector s;
    s.feature_slots = vec();
    const auto aux = vec();
    if (aux.size() != StateVector::kAuxDims) throw InvalidArgument("corrupt replay buffer state");
    s.poc_norm = aux(0);
    s.r_rem_norm = aux(1);
    s.r_tar_norm = aux(2);
    s.lambda_prev_norm = aux(3);
    s.m_prev_norm = aux(4);
    s.frames_left_norm = aux(5);
    s.first_p_flag = aux(6);
    return s;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  const std::string& in_;
  std::size_t pos_ = 0;
};

std::string serialize_buffer(const ReplayBuffer& buffer) {
  BlobWriter w;
  w.u64(buffer.size());
  for (std::size_t i = 0; i < buffer.size(); ++i) {
    const auto& tr = buffer.at(i);
    w.u64(tr.meta.seed);
    w.f64(tr.meta.r_tar);
    w.f64(tr.meta.achieved_bpp);
    w.f64(tr.meta.mean_distortion);
    w.f64(tr.meta.episode_return);
    w.u64(tr.transitions.size());
    for (const auto& t : tr.transitions) {
      w.state(t.s);
      w.f64(t.a.lambda);
      w.f64(t.a.m);
      w.vec(t.pre_squash);
      w.f64(t.r);
      w.state(t.s_next);
      w.u64(t.done ? 1 : 0);
    }
  }
  return w.take();
}

ReplayBuffer deserialize_buffer(const std::string& blob, std::size_t capacity) {
  ReplayBuffer buffer(capacity);
  BlobReader r(blob);
  const auto n = r.u64();
  for (std::uint64_t i = 0; i < n; ++i) {
    Trajectory tr;
    tr.meta.seed = r.u64();
    tr.meta.r_tar = r.f64();
    tr.meta.achieved_bpp = r.f64();
    tr.meta.mean_distortion = r.f64();
    tr.meta.episode_return = r.f64();
    const auto len = r.u64();
    for (std::uint64_t j = 0; j < len; ++j) {
      Transition t;
      t.s = r.state();
      t.a.lambda = r.f64();
      t.a.m = r.f64();
      t.pre_squash = r.vec();
      t.r = r.f64();
      t.s_next = r.state();
      t.done = r.u64() != 0;
      tr.transitions.push_back(std::move(t));
    }
    buffer.push(std::move(tr));
  }
  if (!r.done()) throw InvalidArgument("trailing bytes in replay buffer data");
  return buffer;
}

std::string train_log_line(const TrainLogRow& r) {
  std::ostringstream os;
  os << r.epoch << ',' << r.iter << ',' << csv::format17(r.actor_loss) << ',' << csv::format17(r.critic_loss) << ','
     << csv::format17(r.mean_return) << ',' << csv::format17(r.epsilon) << ',' << csv::format17(r.lr_actor) << ','
     << csv::format17(r.lr_critic);
  return os.str();
}

inline constexpr const char* kValidationHeader = "epoch,score,delta_r_pct,mean_psnr";

std::string validation_line(const ValidationRow& v) {
  return std::to_string(v.epoch) + ',' + csv::format17(v.score) + ',' + csv::format17(v.delta_r_pct) + ',' +
         csv::format17(v.mean_psnr);
}

// Keeps the header and rows whose leading epoch is below `epoch`.
void truncate_log(const fs::path& path, const std::string& header, int epoch) {
  std::vector<std::string> kept{header};
  std::ifstream in(path);
  std::string line;
  if (in && std::getline(in, line)) {
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto comma = line.find(',');
      if (csv::to_int(line.substr(0, comma)) < epoch) kept.push_back(line);
    }
  }
  in.close();
  auto out = csv::open_for_write(path);
  for (const auto& l : kept) out << l << '\n';
}

struct TrainerState {
  int next_epoch = 0;
  long long iteration = 0;
  int consecutive_failures = 0;
  long long skipped = 0;
  double last_actor_loss = 0.0;
  int best_epoch = -1;
  double best_score = 0.0;
};

void save_training_checkpoint(const fs::path& path, const SacAgent& agent, const TrainerState& st, const Rng& rng,
                              const ReplayBuffer& buffer) {
  Checkpoint ckpt;
  agent.save_to(ckpt);
  nlohmann::ordered_json j;
  j["next_epoch"] = st.next_epoch;
  j["iteration"] = st.iteration;
  j["consecutive_failures"] = st.consecutive_failures;
  j["skipped"] = st.skipped;
  j["last_actor_loss_bits"] = std::bit_cast<std::uint64_t>(st.last_actor_loss);
  j["best_epoch"] = st.best_epoch;
  j["best_score_bits"] = std::bit_cast<std::uint64_t>(st.best_score);
  j["rng"] = rng.serialize();
  ckpt.texts["trainer"] = j.dump();
  ckpt.texts["replay"] = serialize_buffer(buffer);
  ckpt.save(path);
}

}  // namespace

double validation_score(const std::vector<EpisodeResult>& episodes, const RewardConfig& reward) {
  if (episodes.empty()) throw InvalidArgument("validation needs at least one episode");
  double s = 0.0;
  for (const auto& e : episodes) s += reward.delta * e.mean_distortion + e.delta_r_pct / 100.0;
  return s / static_cast<double>(episodes.size());
}

TrainResult train(const TrainConfig& config, const EnvSetup& setup, const TrainOptions& options) {
  config.validate();
  setup.validate();
  if (options.output_dir.empty()) throw InvalidArgument("training needs an output directory");
  const fs::path ckpt_dir = options.output_dir / "checkpoints";
  fs::create_directories(ckpt_dir);
  TrainResult result;
  result.last_checkpoint = ckpt_dir / "last.ckpt";
  result.best_checkpoint = ckpt_dir / "best.ckpt";
  const fs::path log_path = options.output_dir / "train_log.csv";
  const fs::path val_path = options.output_dir / "validation_log.csv";

  Rng rng(config.seed);
  Rng init_rng = rng.fork(1);
  SacAgent agent = make_agent(config, setup, init_rng);
  ReplayBuffer buffer(static_cast<std::size_t>(config.buffer_capacity));
  TrainerState st;

  if (options.resume) {
    if (!fs::exists(result.last_checkpoint)) {
      throw IoError("cannot resume: " + result.last_checkpoint.string() + " does not exist");
    }
    const auto ckpt = Checkpoint::load(result.last_checkpoint);
    agent.load_from(ckpt);
    const auto t = ckpt.texts.find("trainer");
    const auto b = ckpt.texts.find("replay");
    if (t == ckpt.texts.end() || b == ckpt.texts.end()) throw InvalidArgument("checkpoint has no trainer state");
    const auto j = nlohmann::json::parse(t->second);
    st.next_epoch = j.at("next_epoch").get<int>();
    st.iteration = j.at("iteration").get<long long>();
    st.consecutive_failures = j.at("consecutive_failures").get<int>();
    st.skipped = j.at("skipped").get<long long>();
    st.last_actor_loss = std::bit_cast<double>(j.at("last_actor_loss_bits").get<std::uint64_t>());
    st.best_epoch = j.at("best_epoch").get<int>();
    st.best_score = std::bit_cast<double>(j.at("best_score_bits").get<std::uint64_t>());
    rng = Rng::deserialize(j.at("rng").get<std::string>());
    buffer = deserialize_buffer(b->second, static_cast<std::size_t>(config.buffer_capacity));
    truncate_log(log_path, kTrainLogHeader, st.next_epoch);
    truncate_log(val_path, kValidationHeader, st.next_epoch);
  } else {
    csv::open_for_write(log_path) << kTrainLogHeader << '\n';
    csv::open_for_write(val_path) << kValidationHeader << '\n';
  }

  std::ofstream log(log_path, std::ios::app | std::ios::binary);
  std::ofstream val_log(val_path, std::ios::app | std::ios::binary);
  if (!log || !val_log) throw IoError("cannot append to training logs in " + options.output_dir.string());

  EpisodeOptions episode_opts;
  episode_opts.reward = config.reward;
  episode_opts.r_tar_scale = config.r_tar_scale();

  auto validate_now = [&](int epoch) {
    std::vector<EpisodeResult> episodes;
    Rng unused(0);
    double psnr_sum = 0.0;
    double dr_sum = 0.0;
    for (auto seed : validation_seed_list(config.validation_seeds)) {
      for (double target : config.validation_targets) {
        auto env = setup.make_env(seed, config.phase2_frames);
        auto ro = rollout(env, agent, BandwidthTrace::constant(target), episode_opts, unused, RolloutMode::kGreedy);
        psnr_sum += ro.episode.mean_psnr;
        dr_sum += ro.episode.delta_r_pct;
        episodes.push_back(std::move(ro.episode));
      }
    }
    ValidationRow row{epoch, validation_score(episodes, config.reward), dr_sum / episodes.size(),
                      psnr_sum / episodes.size()};
    val_log << validation_line(row) << '\n';
    val_log.flush();
    result.validation.push_back(row);
    if (st.best_epoch < 0 || row.score < st.best_score) {
      st.best_epoch = epoch;
      st.best_score = row.score;
      Checkpoint best;
      agent.save_to(best);
      best.save(result.best_checkpoint);
    }
    if (options.progress) {
      options.progress("epoch " + std::to_string(epoch) + " validation score " + csv::format(row.score) +
                       " delta_r " + csv::format(row.delta_r_pct) + "%");
    }
  };

  for (int epoch = st.next_epoch; epoch < config.epochs; ++epoch) {
    if (options.stop_after_epoch >= 0 && epoch >= options.stop_after_epoch) break;
    const int n_frames = config.frames_at(epoch);
    const auto targets = epoch_targets(config.iterations_per_epoch, config.target_min_bpp, config.target_max_bpp, rng);
    for (int iter = 0; iter < config.iterations_per_epoch; ++iter) {
      const std::uint64_t seq_seed = rng.next_u64();
      const double c0 = std::exp(rng.uniform(std::log(config.c0_min), std::log(config.c0_max)));
      auto env = setup.make_env(seq_seed, n_frames, c0);
      const double r_tar = targets[static_cast<std::size_t>(iter)];
      BandwidthTrace trace = BandwidthTrace::constant(r_tar);
      if (epoch >= config.phase1_epochs && config.trace_augment_prob > 0.0 &&
          rng.uniform() < config.trace_augment_prob && n_frames >= 16) {
        trace = augmented_trace(r_tar, n_frames, rng);
      }
      auto ro = rollout(env, agent, trace, episode_opts, rng, RolloutMode::kSample);
      ro.trajectory.meta.seed = seq_seed;
      buffer.push(std::move(ro.trajectory));

      const auto step = config.step_config(epoch, st.iteration);
      TrainLogRow row;
      row.epoch = epoch;
      row.iter = iter;
      row.epsilon = step.epsilon;
      row.lr_actor = step.actor_lr;
      row.lr_critic = step.critic_lr;
      row.mean_return = ro.episode.episode_return / n_frames;
      if (buffer.size() >= static_cast<std::size_t>(config.learning_starts)) {
        const auto batch = buffer.sample(rng, static_cast<std::size_t>(config.batch_size));
        const auto res = agent.update(batch, step, rng);
        if (res.critic_skipped || res.actor_skipped) {
          ++st.skipped;
          if (++st.consecutive_failures > config.max_consecutive_failures) {
            throw Error("training aborted after " + std::to_string(st.consecutive_failures) +
                        " consecutive non-finite updates");
          }
          if (options.progress) options.progress("non-finite update skipped at epoch " + std::to_string(epoch));
        } else {
          st.consecutive_failures = 0;
        }
        row.critic_loss = res.critic_loss;
        if (res.actor_updated) st.last_actor_loss = res.actor_loss;
        double ret = 0.0;
        for (const auto* tr : batch) ret += tr->meta.episode_return / static_cast<double>(tr->transitions.size());
        row.mean_return = ret / static_cast<double>(batch.size());
      }
      row.actor_loss = st.last_actor_loss;
      log << train_log_line(row) << '\n';
      result.log.push_back(row);
      ++st.iteration;
    }
    log.flush();

    const bool last_epoch = epoch + 1 == config.epochs;
    const bool periodic = config.validation_period > 0 && (epoch + 1) % config.validation_period == 0;
    if (last_epoch || (periodic && epoch >= config.phase1_epochs)) validate_now(epoch);
    st.next_epoch = epoch + 1;
    save_training_checkpoint(result.last_checkpoint, agent, st, rng, buffer);
  }
  if (st.best_epoch < 0) {
    Checkpoint best;
    agent.save_to(best);
    best.save(result.best_checkpoint);
  }
  result.best_epoch = st.best_epoch;
  result.best_score = st.best_score;
  result.skipped_updates = st.skipped;
  return result;
}

SacAgent load_agent(const fs::path& checkpoint, const TrainConfig& config, const EnvSetup& env) {
  const auto ckpt = Checkpoint::load(checkpoint);
  Rng rng(config.seed);
  Rng init_rng = rng.fork(1);
  SacAgent agent = make_agent(config, env, init_rng);
  agent.load_from(ckpt);
  return agent;
}

// ---------------------------------------------------------------------------
// Evaluation

std::vector<FrameLogRow> EvalReport::frame_rows() const {
  std::vector<FrameLogRow> rows;
  for (const auto& s : sequences) rows.insert(rows.end(), s.episode.frames.begin(), s.episode.frames.end());
  return rows;
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["method"] = method;
  j["suite"] = suite;
  j["seeds"] = seeds;
  nlohmann::ordered_json summ;
  summ["delta_r_pct"] = summary.delta_r_pct;
  summ["bd_rate_pct"] = summary.bd_rate_pct ? nlohmann::ordered_json(*summary.bd_rate_pct) : nlohmann::ordered_json();
  summ["mean_psnr"] = summary.mean_psnr;
  summ["mean_bpp"] = summary.mean_bpp;
  j["summary"] = summ;
  auto seqs = nlohmann::ordered_json::array();
  for (const auto& s : sequences) {
    nlohmann::ordered_json e;
    e["seed"] = s.seed;
    e["r_tar"] = s.r_tar;
    e["n_frames"] = s.n_frames;
    e["achieved_bpp"] = s.episode.mean_bpp;
    e["delta_r_pct"] = s.episode.delta_r_pct;
    e["mean_psnr"] = s.episode.mean_psnr;
    auto windows = nlohmann::ordered_json::array();
    for (const auto& w : s.episode.windows) {
      windows.push_back({{"start_frame", w.window.start},
                         {"frames", w.window.length},
                         {"r_tar", w.window.r_tar},
                         {"achieved_bpp", w.achieved_bpp},
                         {"delta_r_pct", w.delta_r_pct}});
    }
    e["segments"] = windows;
    seqs.push_back(e);
  }
  j["sequences"] = seqs;
  return j.dump(2);
}

EvalReport evaluate(const std::string& method, const ControllerFactory& factory, const EnvSetup& setup,
                    const EvalSuite& suite, const EpisodeOptions& options) {
  if (suite.seeds.empty()) throw InvalidArgument("evaluation suite has no seeds");
  if (!suite.per_seed_targets.empty() && suite.per_seed_targets.size() != suite.seeds.size()) {
    throw InvalidArgument("per-seed targets do not match the seed list");
  }
  if (!suite.trace && suite.targets.empty() && suite.per_seed_targets.empty()) {
    throw InvalidArgument("evaluation suite has no targets");
  }
  EvalReport report;
  report.method = method;
  report.suite = suite.label;
  report.seeds = suite.seeds;
  for (std::size_t i = 0; i < suite.seeds.size(); ++i) {
    std::vector<BandwidthTrace> traces;
    if (suite.trace) {
      traces.push_back(*suite.trace);
    } else {
      for (double t : suite.per_seed_targets.empty() ? suite.targets : suite.per_seed_targets[i]) {
        traces.push_back(BandwidthTrace::constant(t));
      }
    }
    for (const auto& trace : traces) {
      auto env = setup.make_env(suite.seeds[i], suite.n_frames);
      auto controller = factory(env);
      SequenceReport sr;
      sr.seed = suite.seeds[i];
      sr.r_tar = trace.segments.front().r_tar;
      sr.n_frames = suite.n_frames;
      sr.episode = run_episode(env, *controller, trace, options);
      report.sequences.push_back(std::move(sr));
    }
  }
  const double n = static_cast<double>(report.sequences.size());
  for (const auto& s : report.sequences) {
    report.summary.delta_r_pct += s.episode.delta_r_pct / n;
    report.summary.mean_psnr += s.episode.mean_psnr / n;
    report.summary.mean_bpp += s.episode.mean_bpp / n;
  }
  return report;
}

EvalReport evaluate(const SacAgent& agent, const EnvSetup& env, const EvalSuite& suite,
                    const EpisodeOptions& options) {
  return evaluate(
      "agent", [&](const SyntheticEnv&) { return std::make_unique<AgentController>(agent, false); }, env, suite,
      options);
}

}  // namespace ratelab
