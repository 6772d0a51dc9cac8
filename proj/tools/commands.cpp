#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <json.hpp>
#include <sstream>

namespace ratelab::cli {

namespace {

using Json = nlohmann::ordered_json;

fs::path default_run_config(const fs::path& checkpoint) {
  return checkpoint.parent_path().parent_path() / "resolved_config.json";
}

// Uses the run's own resolved config when --config is absent.
RunConfig resolve_for_checkpoint(CommonArgs args, const fs::path& checkpoint) {
  if (!args.config) {
    const auto guess = default_run_config(checkpoint);
    if (fs::exists(guess)) args.config = guess;
  }
  return resolve(args);
}

void write_config(const RunConfig& config, const std::string& file) {
  fs::create_directories(config.output_dir);
  write_text(fs::path(config.output_dir) / file, config.resolved_json());
}

std::string fixed(double v, int precision = 3) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << v;
  return os.str();
}

Json result_json(const OracleResult& r) { return Json::parse(oracle_json(r)); }

TrainResult run_training(const RunConfig& config, bool resume, std::ostream* progress) {
  write_config(config, "resolved_config.json");
  TrainOptions options;
  options.output_dir = config.output_dir;
  options.resume = resume;
  if (progress) options.progress = [progress](const std::string& line) { *progress << line << "\n"; };
  return train(config.train, config.env, options);
}

RdCurve mean_curve(const std::vector<RdCurve>& curves) {
  RdCurve out(curves.front().size());
  const double n = static_cast<double>(curves.size());
  for (const auto& c : curves) {
    for (std::size_t j = 0; j < c.size(); ++j) {
      out[j].bpp += c[j].bpp / n;
      out[j].psnr += c[j].psnr / n;
    }
  }
  return out;
}

Json curve_json(const RdCurve& c) {
  auto a = Json::array();
  for (const auto& p : c) a.push_back({{"bpp", p.bpp}, {"psnr", p.psnr}});
  return a;
}

}  // namespace

RunConfig resolve(const CommonArgs& args) {
  std::vector<std::string> overrides = args.overrides;
  if (args.seed) overrides.push_back("seed=" + std::to_string(*args.seed));
  if (args.output_dir) overrides.push_back("output_dir=" + args.output_dir->string());
  RunConfig c = load_config(args.config ? &*args.config : nullptr, overrides);
  if (c.output_dir.empty()) c.output_dir = "run";
  return c;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

EpisodeOptions episode_options(const RunConfig& config) {
  EpisodeOptions o;
  o.reward = config.train.reward;
  o.r_tar_scale = config.train.r_tar_scale();
  return o;
}

std::string run_digest(const RunConfig& config) {
  RunConfig c = config;
  c.output_dir.clear();
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(c.resolved_json())));
  return buf;
}

fs::path ensure_trained(const RunConfig& config, const fs::path& cache_root, std::ostream* progress) {
  RunConfig c = config;
  const fs::path dir = cache_root / run_digest(config);
  c.output_dir = dir.string();
  const fs::path done = dir / "complete";
  if (fs::exists(done) && fs::exists(dir / "checkpoints" / "best.ckpt")) return dir;
  const bool resume = fs::exists(dir / "checkpoints" / "last.ckpt");
  if (progress) *progress << (resume ? "resuming " : "training ") << dir.string() << "\n";
  run_training(c, resume, progress);
  write_text(done, "");
  return dir;
}

EvalSuite held_out_suite(const RunConfig& config) {
  EvalSuite s;
  s.seeds = eval_seed_list(config.eval.seeds);
  s.targets = config.eval.targets;
  s.n_frames = config.eval.frames;
  s.label = "held-out";
  return s;
}

EvalSuite validation_suite(const RunConfig& config) {
  EvalSuite s;
  s.seeds = validation_seed_list(config.train.validation_seeds);
  s.targets = config.train.validation_targets;
  s.n_frames = config.train.phase2_frames;
  s.label = "validation";
  return s;
}

BandwidthTrace reference_trace(double mean_bpp, int segment_frames) {
  const double pattern[3] = {0.0163, 0.0173, 0.0166};
  const double mean = (pattern[0] + pattern[1] + pattern[2]) / 3.0;
  BandwidthTrace trace;
  for (int i = 0; i < 3; ++i) trace.segments.push_back({i * segment_frames, pattern[i] / mean * mean_bpp});
  return trace;
}

// ---------------------------------------------------------------------------
// compare

const MethodCurve& Comparison::method(const std::string& name) const {
  for (const auto& m : methods) {
    if (m.method == name) return m;
  }
  throw InvalidArgument("no method '" + name + "' in comparison");
}

std::string Comparison::to_json() const {
  Json j;
  j["anchor_lambdas"] = anchor_lambdas;
  j["seeds"] = seeds;
  j["anchor_mean_curve"] = curve_json(mean_curve(anchor));
  auto ms = Json::array();
  for (const auto& m : methods) {
    Json e;
    e["method"] = m.method;
    e["bd_rate_pct"] = m.bd_rate_pct ? Json(*m.bd_rate_pct) : Json();
    e["delta_r_pct"] = m.delta_r_pct;
    e["mean_curve"] = curve_json(mean_curve(m.curves));
    auto per_seed = Json::array();
    for (const auto& c : m.curves) per_seed.push_back(curve_json(c));
    e["curves"] = per_seed;
    ms.push_back(e);
  }
  j["methods"] = ms;
  return j.dump(2) + "\n";
}

Comparison compare(const RunConfig& config, const SacAgent* agent, const std::vector<std::string>& methods) {
  const auto& fractions = config.eval.anchor_fractions;
  if (fractions.size() < 4) throw ConfigError("BD-rate needs at least 4 anchors, got " + std::to_string(fractions.size()));
  const auto& profile = config.env.profile;
  Comparison cmp;
  for (double f : fractions) {
    cmp.anchor_lambdas.push_back(profile.lambda_min * std::pow(profile.lambda_max / profile.lambda_min, f));
  }
  cmp.seeds = eval_seed_list(config.eval.seeds);
  const auto options = episode_options(config);

  std::vector<std::vector<double>> rates;
  for (auto seed : cmp.seeds) {
    RdCurve curve;
    std::vector<double> r;
    for (double lambda : cmp.anchor_lambdas) {
      auto env = config.env.make_env(seed, config.eval.frames);
      FixedLambdaController ctl(lambda, profile);
      const auto ep = run_episode(env, ctl, BandwidthTrace::constant(config.eval.targets.front()), options);
      curve.push_back({ep.mean_bpp, ep.mean_psnr});
      r.push_back(ep.mean_bpp);
    }
    cmp.anchor.push_back(curve);
    rates.push_back(r);
  }

  EvalSuite suite;
  suite.seeds = cmp.seeds;
  suite.per_seed_targets = rates;
  suite.n_frames = config.eval.frames;
  suite.label = "anchor-rates";
  const RdCurve anchor_mean = mean_curve(cmp.anchor);
  const std::size_t k = cmp.anchor_lambdas.size();

  for (const auto& name : methods) {
    MethodCurve mc;
    mc.method = name;
    if (name == "fixed-lambda") {
      mc.curves = cmp.anchor;
      mc.delta_r_pct.assign(k, 0.0);
    } else {
      EvalReport report;
      if (name == "agent") {
        if (!agent) throw ConfigError("method 'agent' needs a checkpoint");
        report = evaluate(*agent, config.env, suite, options);
      } else if (name == "static-model") {
        const double overhead = config.env.model().overhead_bpp;
        report = evaluate(
            name,
            [&](const SyntheticEnv&) { return std::make_unique<StaticModelController>(profile, overhead); },
            config.env, suite, options);
      } else {
        throw ConfigError("unknown method '" + name + "' (agent, static-model, fixed-lambda)");
      }
      mc.delta_r_pct.assign(k, 0.0);
      for (std::size_t i = 0; i < cmp.seeds.size(); ++i) {
        RdCurve curve;
        for (std::size_t j = 0; j < k; ++j) {
          const auto& ep = report.sequences[i * k + j].episode;
          curve.push_back({ep.mean_bpp, ep.mean_psnr});
          mc.delta_r_pct[j] += ep.delta_r_pct / static_cast<double>(cmp.seeds.size());
        }
        mc.curves.push_back(curve);
      }
    }
    try {
      mc.bd_rate_pct = bd_rate(anchor_mean, mean_curve(mc.curves));
    } catch (const InvalidArgument&) {
      mc.bd_rate_pct.reset();
    }
    cmp.methods.push_back(std::move(mc));
  }
  return cmp;
}

// ---------------------------------------------------------------------------
// oracle

double OracleStudy::differing_fraction() const {
  if (instances.empty()) return 0.0;
  double n = 0.0;
  for (const auto& i : instances) n += i.differs ? 1.0 : 0.0;
  return n / static_cast<double>(instances.size());
}

std::optional<double> OracleStudy::mean_agent_gap_pct() const {
  if (instances.empty() || !instances.front().agent_gap_pct) return std::nullopt;
  double s = 0.0;
  for (const auto& i : instances) s += *i.agent_gap_pct;
  return s / static_cast<double>(instances.size());
}

std::string OracleStudy::to_json() const {
  Json j;
  j["frames"] = frames;
  j["grid_size"] = grid_size;
  j["enumerated_per_instance"] = enumerated_per_instance;
  j["mode"] = to_string(mode);
  j["penalty"] = penalty;
  j["differing_fraction"] = differing_fraction();
  const auto gap = mean_agent_gap_pct();
  j["mean_agent_gap_pct"] = gap ? Json(*gap) : Json();
  auto arr = Json::array();
  for (const auto& i : instances) {
    Json e;
    e["seed"] = i.seed;
    e["r_tar"] = i.r_tar;
    e["differs"] = i.differs;
    e["oracle"] = result_json(i.oracle);
    e["independent"] = result_json(i.independent);
    if (i.agent) {
      e["agent"] = result_json(*i.agent);
      e["agent_gap_pct"] = *i.agent_gap_pct;
    }
    arr.push_back(e);
  }
  j["instances"] = arr;
  return j.dump(2) + "\n";
}

OracleStudy oracle_study(const RunConfig& config, std::uint64_t first_seed, const SacAgent* agent) {
  const auto& oc = config.oracle;
  const auto grid = OracleGrid::spanning(config.env.profile, oc.lambdas, oc.ms);
  OracleOptions options;
  options.mode = oracle_mode_from_string(oc.mode);
  options.penalty = oc.penalty;
  const auto count = oracle_size(grid.size(), oc.frames);
  if (oc.frames > options.max_frames || count > options.max_sequences) {
    throw BudgetExceeded("oracle instance has " + std::to_string(grid.size()) + "^" + std::to_string(oc.frames) +
                         " = " + (count == UINT64_MAX ? std::string("more than 1.8e19") : std::to_string(count)) +
                         " sequences; limit is " + std::to_string(options.max_sequences) + " sequences and " +
                         std::to_string(options.max_frames) + " frames");
  }
  OracleStudy study;
  study.frames = oc.frames;
  study.grid_size = grid.size();
  study.enumerated_per_instance = count;
  study.mode = options.mode;
  study.penalty = effective_penalty(options, config.env.profile);
  const auto eo = episode_options(config);
  for (int i = 0; i < oc.seeds; ++i) {
    OracleInstance inst;
    inst.seed = first_seed + static_cast<std::uint64_t>(i);
    inst.r_tar = oc.target > 0.0 ? oc.target : config.eval.targets[static_cast<std::size_t>(i) % config.eval.targets.size()];
    auto env = config.env.make_env(inst.seed, oc.frames);
    inst.oracle = oracle_search(env.frames(), env.model(), inst.r_tar, grid, options);
    inst.independent = independent_solution(env.frames(), env.model(), inst.r_tar, grid, options);
    inst.differs = inst.oracle.actions != inst.independent.actions;
    if (agent) {
      const auto ep = [&] {
        AgentController ctl(*agent, false);
        return run_episode(env, ctl, BandwidthTrace::constant(inst.r_tar), eo);
      }();
      std::vector<Action> actions;
      for (const auto& f : ep.frames) actions.push_back({f.lambda, f.m});
      inst.agent = evaluate_sequence(env.frames(), env.model(), inst.r_tar, actions, study.mode, study.penalty);
      inst.agent_gap_pct = 100.0 * (inst.agent->objective / inst.oracle.objective - 1.0);
    }
    study.instances.push_back(std::move(inst));
  }
  return study;
}

// ---------------------------------------------------------------------------
// ablation

std::vector<std::string> ablation_names() { return {"reward", "frames", "action-space", "state"}; }

std::vector<AblationVariant> ablation_variants(const std::string& name) {
  if (name == "reward") {
    return {{"rd+rem", {"terminal_rate_term=false"}},
            {"rd+acc", {"per_frame_rate_term=false"}},
            {"rd+rem+acc", {}}};
  }
  if (name == "frames") {
    return {{"4", {"phase2_frames=4"}}, {"8", {"phase2_frames=8"}}, {"16", {"phase2_frames=16"}}, {"32", {}}};
  }
  if (name == "action-space") return {{"lambda", {"joint_action=false"}}, {"lambda+m", {}}};
  if (name == "state") {
    return {{"descriptor", {}}, {"handcrafted", {"features=handcrafted"}}, {"learned", {"features=learned"}}};
  }
  std::string valid;
  for (const auto& n : ablation_names()) valid += (valid.empty() ? "" : ", ") + n;
  throw ConfigError("unknown ablation '" + name + "'; valid names: " + valid);
}

const AblationRow& AblationResult::row(const std::string& variant) const {
  for (const auto& r : rows) {
    if (r.variant == variant) return r;
  }
  throw InvalidArgument("no variant '" + variant + "' in ablation " + name);
}

std::string AblationResult::to_json() const {
  Json j;
  j["ablation"] = name;
  auto arr = Json::array();
  for (const auto& r : rows) {
    arr.push_back({{"variant", r.variant},
                   {"run_dir", r.run_dir.string()},
                   {"delta_r_pct", r.delta_r_pct},
                   {"bd_rate_pct", r.bd_rate_pct},
                   {"mean_psnr", r.mean_psnr},
                   {"mean_bpp", r.mean_bpp}});
  }
  j["rows"] = arr;
  return j.dump(2) + "\n";
}

std::string AblationResult::table() const {
  std::ostringstream os;
  os << std::left << std::setw(14) << "variant" << std::right << std::setw(12) << "dR %" << std::setw(12)
     << "BD-rate %" << std::setw(12) << "PSNR" << std::setw(12) << "bpp" << "\n";
  for (const auto& r : rows) {
    os << std::left << std::setw(14) << r.variant << std::right << std::setw(12) << fixed(r.delta_r_pct)
       << std::setw(12) << fixed(r.bd_rate_pct) << std::setw(12) << fixed(r.mean_psnr) << std::setw(12)
       << fixed(r.mean_bpp) << "\n";
  }
  return os.str();
}

AblationResult ablate(const RunConfig& base, const std::string& name, const fs::path& cache_root,
                      const std::vector<std::string>& only, std::ostream* progress) {
  auto variants = ablation_variants(name);
  for (const auto& o : only) {
    bool found = false;
    for (const auto& v : variants) found = found || v.name == o;
    if (!found) throw ConfigError("ablation " + name + " has no variant '" + o + "'");
  }
  AblationResult result;
  result.name = name;
  for (const auto& v : variants) {
    if (!only.empty() && std::find(only.begin(), only.end(), v.name) == only.end()) continue;
    RunConfig c = base;
    for (const auto& o : v.overrides) {
      const auto [key, value] = split_override(o);
      c.set(key, value);
    }
    c.validate();
    AblationRow row;
    row.variant = v.name;
    row.run_dir = ensure_trained(c, cache_root, progress);
    const SacAgent agent = load_agent(row.run_dir / "checkpoints" / "best.ckpt", c.train, c.env);
    const auto report = evaluate(agent, c.env, held_out_suite(c), episode_options(c));
    row.delta_r_pct = report.summary.delta_r_pct;
    row.mean_psnr = report.summary.mean_psnr;
    row.mean_bpp = report.summary.mean_bpp;
    const auto cmp = compare(c, &agent, {"agent"});
    row.bd_rate_pct = cmp.methods.front().bd_rate_pct.value_or(NAN);
    result.rows.push_back(row);
  }
  return result;
}

// ---------------------------------------------------------------------------
// commands

int report_error(std::ostream& err) {
  try {
    throw;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const BudgetExceeded& e) {
    err << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const VersionMismatch& e) {
    err << "error: " << e.what() << "\n";
    return kRuntimeFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntimeFailure;
  }
}

int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& err) {
  try {
    const RunConfig config = resolve(args.common);
    const auto result = run_training(config, args.resume, &out);
    out << "best epoch " << result.best_epoch << " score " << fixed(result.best_score, 4) << "\n";
    out << "wrote " << (fs::path(config.output_dir) / "train_log.csv").string() << "\n";
    return kOk;
  } catch (...) {
    return report_error(err);
  }
}

int cmd_eval(const EvalArgs& args, std::ostream& out, std::ostream& err) {
  try {
    RunConfig config = resolve_for_checkpoint(args.common, args.checkpoint);
    EvalSuite suite;
    if (args.suite == "held-out") {
      suite = held_out_suite(config);
    } else if (args.suite == "validation") {
      suite = validation_suite(config);
    } else {
      throw ConfigError("unknown suite '" + args.suite + "' (held-out, validation)");
    }
    if (args.trace) {
      suite.trace = BandwidthTrace::load_csv(*args.trace);
      suite.label += "+trace";
    }
    const auto options = episode_options(config);
    EvalReport report;
    if (args.method == "agent") {
      const SacAgent agent = load_agent(args.checkpoint, config.train, config.env);
      report = evaluate(agent, config.env, suite, options);
    } else if (args.method == "static-model") {
      const double overhead = config.env.model().overhead_bpp;
      const auto profile = config.env.profile;
      report = evaluate(
          args.method,
          [&](const SyntheticEnv&) { return std::make_unique<StaticModelController>(profile, overhead); }, config.env,
          suite, options);
    } else {
      throw ConfigError("unknown method '" + args.method + "' (agent, static-model)");
    }
    const fs::path dir = config.output_dir;
    write_config(config, "eval_config.json");
    write_text(dir / "eval_report.json", report.to_json() + "\n");
    emit_logs(report.frame_rows(), dir / "eval_frames.csv");
    out << report.method << " on " << report.suite << ": dR " << fixed(report.summary.delta_r_pct) << " %, PSNR "
        << fixed(report.summary.mean_psnr) << " dB, " << fixed(report.summary.mean_bpp) << " bpp\n";
    out << "wrote " << (dir / "eval_report.json").string() << "\n";
    return kOk;
  } catch (...) {
    return report_error(err);
  }
}

int cmd_compare(const CompareArgs& args, std::ostream& out, std::ostream& err) {
  try {
    const RunConfig config =
        args.checkpoint ? resolve_for_checkpoint(args.common, *args.checkpoint) : resolve(args.common);
    std::optional<SacAgent> agent;
    if (args.checkpoint) agent.emplace(load_agent(*args.checkpoint, config.train, config.env));
    const auto cmp = compare(config, agent ? &*agent : nullptr, args.methods);
    const fs::path dir = config.output_dir;
    write_config(config, "compare_config.json");
    write_text(dir / "compare.json", cmp.to_json());
    emit_curve(mean_curve(cmp.anchor), dir / "curves" / "anchor.csv");
    for (const auto& m : cmp.methods) emit_curve(mean_curve(m.curves), dir / "curves" / (m.method + ".csv"));

    out << std::left << std::setw(14) << "method" << std::right << std::setw(12) << "BD-rate %";
    for (double l : cmp.anchor_lambdas) out << std::setw(12) << ("dR@" + fixed(l, 0));
    out << "\n";
    for (const auto& m : cmp.methods) {
      out << std::left << std::setw(14) << m.method << std::right << std::setw(12)
          << (m.bd_rate_pct ? fixed(*m.bd_rate_pct) : std::string("n/a"));
      for (double d : m.delta_r_pct) out << std::setw(12) << fixed(d);
      out << "\n";
    }
    return kOk;
  } catch (...) {
    return report_error(err);
  }
}

int cmd_oracle(const OracleArgs& args, std::ostream& out, std::ostream& err) {
  try {
    CommonArgs common = args.common;
    const auto first_seed = common.seed.value_or(kEvalSeedBase);
    common.seed.reset();
    if (args.frames) common.overrides.push_back("oracle_frames=" + std::to_string(*args.frames));
    const RunConfig config = args.checkpoint ? resolve_for_checkpoint(common, *args.checkpoint) : resolve(common);
    std::optional<SacAgent> agent;
    if (args.checkpoint) agent.emplace(load_agent(*args.checkpoint, config.train, config.env));
    const auto study = oracle_study(config, first_seed, agent ? &*agent : nullptr);
    const fs::path dir = config.output_dir;
    write_config(config, "oracle_config.json");
    write_text(dir / "oracle.json", study.to_json());
    out << "enumerated " << study.enumerated_per_instance << " sequences per instance (" << study.grid_size << "^"
        << study.frames << "), " << study.instances.size() << " instances\n";
    out << "coupled optimum differs from the independent one on " << fixed(100.0 * study.differing_fraction(), 1)
        << " % of instances\n";
    if (const auto gap = study.mean_agent_gap_pct()) out << "agent objective gap " << fixed(*gap, 2) << " %\n";
    out << "wrote " << (dir / "oracle.json").string() << "\n";
    return kOk;
  } catch (...) {
    return report_error(err);
  }
}

int cmd_ablate(const AblateArgs& args, std::ostream& out, std::ostream& err) {
  try {
    ablation_variants(args.name);
    const RunConfig config = resolve(args.common);
    const fs::path cache = args.cache_dir.value_or(fs::path(config.output_dir) / "runs");
    const auto result = ablate(config, args.name, cache, args.variants, &out);
    write_config(config, "ablate_config.json");
    write_text(fs::path(config.output_dir) / ("ablate_" + args.name + ".json"), result.to_json());
    out << result.table();
    return kOk;
  } catch (...) {
    return report_error(err);
  }
}

}  // namespace ratelab::cli
