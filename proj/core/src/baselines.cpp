#include "ratelab/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <json.hpp>
#include <limits>

#include "ratelab/error.hpp"

namespace ratelab {

FixedLambdaController::FixedLambdaController(double lambda0, const CodecProfile& profile)
    : lambda0_(lambda0), m_(profile.m_max) {
  if (!(lambda0 >= profile.lambda_min && lambda0 <= profile.lambda_max)) {
    throw InvalidArgument("fixed lambda " + std::to_string(lambda0) + " outside profile '" + profile.name + "'");
  }
}

Action FixedLambdaController::act(const ControlContext& /*ctx*/) { return {lambda0_, m_}; }

void HyperbolicModel::initialize(double lambda, double rate) {
  if (!(rate > 0.0) || !(lambda > 0.0)) throw InvalidArgument("model initialization needs positive rate and lambda");
  a = rate / std::pow(lambda / lambda_ref, b);
  initialized = true;
}

HyperbolicModel static_model_update(const HyperbolicModel& model, double lambda_used, double r_actual) {
  if (!(r_actual > 0.0)) throw InvalidArgument("model update needs a positive rate");
  if (!(lambda_used > 0.0)) throw InvalidArgument("model update needs a positive lambda");
  HyperbolicModel next = model;
  const double log_lambda = std::log(lambda_used / model.lambda_ref);
  const double e = std::log(r_actual) - (std::log(model.a) + model.b * log_lambda);
  next.a = std::exp(std::log(model.a) + model.mu_a * e);
  next.b = std::max(HyperbolicModel::kMinB, model.b + model.mu_b * e * log_lambda);
  return next;
}

double uniform_allocation(const RateLedger& ledger) {
  const int left = ledger.n_frames - ledger.t;
  if (left <= 0) throw InvalidArgument("no frames left in the budget window");
  return (ledger.r_tar * ledger.n_frames - ledger.spent_bpp) / left;
}

Action static_model_step(const HyperbolicModel& model, const RateLedger& ledger, const CodecProfile& profile,
                         double overhead_bpp) {
  const double net = uniform_allocation(ledger) - overhead_bpp;
  if (!(net > 0.0)) return {profile.lambda_min, profile.m_max};
  const double lambda = std::clamp(model.invert(net), profile.lambda_min, profile.lambda_max);
  return {lambda, profile.m_max};
}

StaticModelController::StaticModelController(const CodecProfile& profile, double overhead_bpp,
                                             HyperbolicModel prototype)
    : profile_(profile), overhead_(overhead_bpp), prototype_(prototype) {
  profile_.validate();
  prototype_.lambda_ref = std::sqrt(profile_.lambda_min * profile_.lambda_max);
  intra_ = prototype_;
  inter_ = prototype_;
  if (!(prototype.a > 0.0) || !(prototype.b > 0.0)) throw InvalidArgument("hyperbolic model needs a > 0 and b > 0");
}

void StaticModelController::begin_episode(const Environment& /*env*/) {
  intra_ = prototype_;
  inter_ = prototype_;
}

Action StaticModelController::act(const ControlContext& ctx) {
  const auto& frame = ctx.env.frame(ctx.env.state().t);
  const auto& model = frame.intra ? intra_ : inter_;
  last_allocation_ = uniform_allocation(ctx.ledger);
  if (!model.initialized) return {profile_.lambda_mid(), profile_.m_max};
  return static_model_step(model, ctx.ledger, profile_, overhead_);
}

void StaticModelController::observe(const ControlContext& ctx, const Action& action, const StepOutcome& outcome,
                                    double /*reward*/) {
  const auto& frame = ctx.env.frame(ctx.env.state().t - 1);
  auto& model = frame.intra ? intra_ : inter_;
  const double net = outcome.r_bpp - overhead_;
  if (!(net > 0.0)) return;
  if (!model.initialized) {
    model.initialize(action.lambda, net);
  } else {
    model = static_model_update(model, action.lambda, net);
  }
}

BisectionResult lagrangian_bisection(const SyntheticEnv& replica, double r_tar, double rel_tol, int max_iterations) {
  if (!(r_tar > 0.0)) throw InvalidArgument("bisection needs a positive target");
  const auto& profile = replica.profile();
  auto rate_at = [&](double lambda) {
    SyntheticEnv env = replica;
    env.reset(r_tar);
    double sum = 0.0;
    for (int t = 0; t < env.n_frames(); ++t) sum += env.step({lambda, profile.m_max}).r_bpp;
    return sum / env.n_frames();
  };
  BisectionResult res;
  const double r_lo = rate_at(profile.lambda_min);
  if (r_lo >= r_tar) {
    res = {profile.lambda_min, r_lo, 0, r_lo > r_tar * (1.0 + rel_tol) ? -1 : 0};
    return res;
  }
  const double r_hi = rate_at(profile.lambda_max);
  if (r_hi <= r_tar) {
    res = {profile.lambda_max, r_hi, 0, r_hi < r_tar * (1.0 - rel_tol) ? 1 : 0};
    return res;
  }
  double lo = std::log(profile.lambda_min);
  double hi = std::log(profile.lambda_max);
  for (int i = 1; i <= max_iterations; ++i) {
    const double mid = 0.5 * (lo + hi);
    res.lambda = std::exp(mid);
    res.achieved_bpp = rate_at(res.lambda);
    res.iterations = i;
    if (std::abs(res.achieved_bpp - r_tar) <= rel_tol * r_tar) break;
    if (res.achieved_bpp < r_tar) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return res;
}

std::string to_string(OracleMode mode) {
  switch (mode) {
    case OracleMode::kPenalized:
      return "penalized";
    case OracleMode::kLagrangian:
      return "lagrangian";
    case OracleMode::kConstrained:
      return "constrained";
  }
  return "penalized";
}

OracleMode oracle_mode_from_string(const std::string& name) {
  if (name == "penalized") return OracleMode::kPenalized;
  if (name == "lagrangian") return OracleMode::kLagrangian;
  if (name == "constrained") return OracleMode::kConstrained;
  throw InvalidArgument("unknown oracle mode '" + name + "' (expected penalized, lagrangian or constrained)");
}

OracleGrid OracleGrid::spanning(const CodecProfile& profile, int n_lambda, int n_m) {
  if (n_lambda < 1 || n_m < 1) throw InvalidArgument("oracle grid needs at least one level per dimension");
  OracleGrid g;
  const double l0 = std::log(profile.lambda_min);
  const double l1 = std::log(profile.lambda_max);
  for (int i = 0; i < n_lambda; ++i) {
    if (n_lambda == 1) {
      g.lambdas.push_back(profile.lambda_mid());
    } else if (i + 1 == n_lambda) {
      g.lambdas.push_back(profile.lambda_max);
    } else {
      g.lambdas.push_back(i == 0 ? profile.lambda_min : std::exp(l0 + (l1 - l0) * i / (n_lambda - 1)));
    }
  }
  for (int i = 0; i < n_m; ++i) {
    if (n_m == 1) {
      g.ms.push_back(profile.m_max);
    } else if (i + 1 == n_m) {
      g.ms.push_back(profile.m_max);
    } else {
      g.ms.push_back(profile.m_min + (profile.m_max - profile.m_min) * i / (n_m - 1));
    }
  }
  return g;
}

double effective_penalty(const OracleOptions& options, const CodecProfile& profile) {
  if (options.penalty < 0.0) throw InvalidArgument("oracle penalty must be nonnegative");
  return options.penalty > 0.0 ? options.penalty : 1.0 / profile.lambda_min;
}

double oracle_objective(double sum_d, double sum_r, int n, double r_tar, OracleMode mode, double penalty) {
  const double excess = sum_r - n * r_tar;
  switch (mode) {
    case OracleMode::kPenalized:
      return sum_d + penalty * std::max(0.0, excess);
    case OracleMode::kLagrangian:
      return sum_d + penalty * excess;
    case OracleMode::kConstrained:
      return sum_d;
  }
  return sum_d;
}

std::uint64_t oracle_size(std::size_t grid_size, int n) {
  std::uint64_t total = 1;
  for (int i = 0; i < n; ++i) {
    if (grid_size != 0 && total > std::numeric_limits<std::uint64_t>::max() / grid_size) {
      return std::numeric_limits<std::uint64_t>::max();
    }
    total *= grid_size;
  }
  return total;
}

namespace {

void check_instance(const std::vector<FrameDescriptor>& frames, const OracleGrid& grid, double r_tar,
                    const OracleOptions& options) {
  const int n = static_cast<int>(frames.size());
  if (n < 1) throw InvalidArgument("oracle needs at least one frame");
  if (grid.size() == 0) throw InvalidArgument("oracle grid is empty");
  if (!(r_tar > 0.0)) throw InvalidArgument("oracle needs a positive target");
  const auto size = oracle_size(grid.size(), n);
  if (n > options.max_frames || size > options.max_sequences) {
    throw BudgetExceeded("oracle instance of " + std::to_string(grid.size()) + "^" + std::to_string(n) + " = " +
                         (size == std::numeric_limits<std::uint64_t>::max() ? std::string("more than 1.8e19")
                                                                            : std::to_string(size)) +
                         " sequences exceeds the bound (N <= " + std::to_string(options.max_frames) + ", " +
                         std::to_string(options.max_sequences) + " sequences)");
  }
}

CodecModel coupling_free(const CodecModel& model) {
  CodecModel m = model;
  m.coupling.a_d = 0.0;
  m.coupling.a_r = 0.0;
  return m;
}

}  // namespace

OracleResult evaluate_sequence(const std::vector<FrameDescriptor>& frames, const CodecModel& model, double r_tar,
                               const std::vector<Action>& actions, OracleMode mode, double penalty) {
  const int n = static_cast<int>(frames.size());
  if (actions.size() != frames.size()) throw InvalidArgument("action sequence length does not match the frames");
  OracleResult r;
  r.mode = mode;
  r.penalty = penalty;
  r.r_tar = r_tar;
  r.actions = actions;
  EnvState s = initial_state(model.profile, r_tar, n);
  for (int t = 0; t < n; ++t) {
    const auto out = encode_frame(s, frames[static_cast<std::size_t>(t)], actions[static_cast<std::size_t>(t)], model);
    r.r_bpp.push_back(out.r_bpp);
    r.d_mse.push_back(out.d_mse);
    r.sum_distortion += out.d_mse;
    s = out.next_state;
  }
  r.avg_bpp = s.spent_bpp / n;
  r.objective = oracle_objective(r.sum_distortion, s.spent_bpp, n, r_tar, mode, penalty);
  r.feasible = mode != OracleMode::kConstrained || r.avg_bpp <= r_tar;
  return r;
}

OracleResult oracle_search(const std::vector<FrameDescriptor>& frames, const CodecModel& model, double r_tar,
                           const OracleGrid& grid, const OracleOptions& options) {
  check_instance(frames, grid, r_tar, options);
  const int n = static_cast<int>(frames.size());
  const double penalty = effective_penalty(options, model.profile);
  const std::size_t g = grid.size();
  std::vector<Action> actions;
  for (std::size_t i = 0; i < g; ++i) actions.push_back(grid.action(i));

  std::vector<std::size_t> idx(static_cast<std::size_t>(n), 0);
  std::vector<std::size_t> best(idx);
  std::vector<std::size_t> cheapest(idx);
  double best_obj = std::numeric_limits<double>::infinity();
  double min_rate = std::numeric_limits<double>::infinity();
  bool any_feasible = false;
  std::uint64_t count = 0;

  std::function<void(int, const EnvState&, double)> visit = [&](int t, const EnvState& s, double sum_d) {
    for (std::size_t i = 0; i < g; ++i) {
      idx[static_cast<std::size_t>(t)] = i;
      const auto out = encode_frame(s, frames[static_cast<std::size_t>(t)], actions[i], model);
      const double d = sum_d + out.d_mse;
      if (t + 1 < n) {
        visit(t + 1, out.next_state, d);
        continue;
      }
      ++count;
      const double sum_r = out.next_state.spent_bpp;
      if (options.mode == OracleMode::kConstrained) {
        if (sum_r < min_rate) {
          min_rate = sum_r;
          cheapest = idx;
        }
        if (sum_r / n > r_tar) continue;
        any_feasible = true;
      }
      const double obj = oracle_objective(d, sum_r, n, r_tar, options.mode, penalty);
      if (obj < best_obj) {
        best_obj = obj;
        best = idx;
      }
    }
  };
  visit(0, initial_state(model.profile, r_tar, n), 0.0);

  const bool feasible = options.mode != OracleMode::kConstrained || any_feasible;
  std::vector<Action> seq;
  for (const auto i : feasible ? best : cheapest) seq.push_back(actions[i]);
  auto result = evaluate_sequence(frames, model, r_tar, seq, options.mode, penalty);
  result.enumerated = count;
  result.feasible = feasible;
  return result;
}

OracleResult independent_solution(const std::vector<FrameDescriptor>& frames, const CodecModel& model, double r_tar,
                                  const OracleGrid& grid, const OracleOptions& options) {
  check_instance(frames, grid, r_tar, options);
  const double penalty = effective_penalty(options, model.profile);
  const CodecModel planner = coupling_free(model);
  std::vector<Action> plan;
  if (options.mode == OracleMode::kLagrangian) {
    const int n = static_cast<int>(frames.size());
    for (int t = 0; t < n; ++t) {
      EnvState s = initial_state(model.profile, r_tar, n);
      s.t = t;
      double best = std::numeric_limits<double>::infinity();
      Action arg;
      for (std::size_t i = 0; i < grid.size(); ++i) {
        const auto out = encode_frame(s, frames[static_cast<std::size_t>(t)], grid.action(i), planner);
        const double obj = out.d_mse + penalty * out.r_bpp;
        if (obj < best) {
          best = obj;
          arg = grid.action(i);
        }
      }
      plan.push_back(arg);
    }
  } else {
    plan = oracle_search(frames, planner, r_tar, grid, options).actions;
  }
  return evaluate_sequence(frames, model, r_tar, plan, options.mode, penalty);
}

std::string oracle_json(const OracleResult& r) {
  nlohmann::ordered_json j;
  j["mode"] = to_string(r.mode);
  j["penalty"] = r.penalty;
  j["r_tar"] = r.r_tar;
  j["objective"] = r.objective;
  j["feasible"] = r.feasible;
  j["enumerated"] = r.enumerated;
  j["avg_bpp"] = r.avg_bpp;
  j["sum_distortion"] = r.sum_distortion;
  auto frames = nlohmann::ordered_json::array();
  for (std::size_t t = 0; t < r.actions.size(); ++t) {
    frames.push_back({{"lambda", r.actions[t].lambda},
                      {"m", r.actions[t].m},
                      {"r_bpp", r.r_bpp[t]},
                      {"d_mse", r.d_mse[t]}});
  }
  j["frames"] = frames;
  return j.dump(2);
}

}  // namespace ratelab
