#include "run_config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <json.hpp>
#include <map>
#include <sstream>

namespace ratelab::cli {

namespace {

using Json = nlohmann::ordered_json;

std::string trim(std::string s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

double parse_real(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end || v.empty()) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

long long parse_integer(const std::string& key, const std::string& v) {
  long long out = 0;
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end || v.empty()) throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::vector<double> parse_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::string s = v;
  if (!s.empty() && s.front() == '[' && s.back() == ']') s = s.substr(1, s.size() - 2);
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_real(key, item));
  }
  if (out.empty()) throw ConfigError(key + ": expected a comma-separated list of numbers");
  return out;
}

struct Entry {
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<Json(const RunConfig&)> get;
};

template <class F>
Entry real(std::string key, F field) {
  return {key, [key, field](RunConfig& c, const std::string& v) { field(c) = parse_real(key, v); },
          [field](const RunConfig& c) { return Json(field(c)); }};
}

template <class F>
Entry integer(std::string key, F field) {
  return {key,
          [key, field](RunConfig& c, const std::string& v) {
            using T = std::remove_reference_t<decltype(field(c))>;
            const auto x = parse_integer(key, v);
            if constexpr (std::is_unsigned_v<T>) {
              if (x < 0) throw ConfigError(key + ": must be nonnegative");
            }
            field(c) = static_cast<T>(x);
          },
          [field](const RunConfig& c) { return Json(field(c)); }};
}

template <class F>
Entry boolean(std::string key, F field) {
  return {key, [key, field](RunConfig& c, const std::string& v) { field(c) = parse_bool(key, v); },
          [field](const RunConfig& c) { return Json(field(c)); }};
}

template <class F>
Entry text(std::string key, F field) {
  return {key, [field](RunConfig& c, const std::string& v) { field(c) = v; },
          [field](const RunConfig& c) { return Json(field(c)); }};
}

template <class F>
Entry list(std::string key, F field) {
  return {key, [key, field](RunConfig& c, const std::string& v) { field(c) = parse_list(key, v); },
          [field](const RunConfig& c) { return Json(field(c)); }};
}

#define FIELD(expr) [](auto& c) -> auto& { return c.expr; }

const std::vector<Entry>& registry() {
  static const std::vector<Entry> entries = {
      // codec
      {"profile",
       [](RunConfig& c, const std::string& v) {
         const auto p = CodecProfile::by_name(v);
         c.profile = v;
         c.env.profile = p;
       },
       [](const RunConfig& c) { return Json(c.profile); }},
      real("lambda_min", FIELD(env.profile.lambda_min)),
      real("lambda_max", FIELD(env.profile.lambda_max)),
      real("m_min", FIELD(env.profile.m_min)),
      real("m_max", FIELD(env.profile.m_max)),
      integer("m_bits", FIELD(env.profile.m_bits)),
      // coupling
      real("a_d", FIELD(env.coupling.a_d)),
      real("a_r", FIELD(env.coupling.a_r)),
      real("d_ref", FIELD(env.coupling.d_ref)),
      real("rho", FIELD(env.coupling.rho)),
      real("u", FIELD(env.coupling.u)),
      real("q", FIELD(env.coupling.q)),
      real("intra_factor", FIELD(env.coupling.intra_factor)),
      real("rd_scale", FIELD(env.coupling.rd_scale)),
      // content
      real("c0", FIELD(env.sequence.c0)),
      real("sigma", FIELD(env.sequence.sigma)),
      real("scene_change_prob", FIELD(env.sequence.scene_change_prob)),
      real("scene_change_gain", FIELD(env.sequence.scene_change_gain)),
      real("c_min", FIELD(env.sequence.c_min)),
      real("c_max", FIELD(env.sequence.c_max)),
      real("k_min", FIELD(env.sequence.k_min)),
      real("k_max", FIELD(env.sequence.k_max)),
      integer("frame_width", FIELD(env.sequence.frame_width)),
      integer("frame_height", FIELD(env.sequence.frame_height)),
      // training
      real("gamma", FIELD(train.gamma)),
      real("xi", FIELD(train.xi)),
      real("epsilon_start", FIELD(train.epsilon_start)),
      real("epsilon_end", FIELD(train.epsilon_end)),
      real("actor_lr_start", FIELD(train.actor_lr_start)),
      real("actor_lr_end", FIELD(train.actor_lr_end)),
      real("critic_lr_start", FIELD(train.critic_lr_start)),
      real("critic_lr_end", FIELD(train.critic_lr_end)),
      real("feature_lr", FIELD(train.feature_lr)),
      integer("lr_warmup_epochs", FIELD(train.lr_warmup_epochs)),
      integer("batch_size", FIELD(train.batch_size)),
      integer("buffer_capacity", FIELD(train.buffer_capacity)),
      integer("learning_starts", FIELD(train.learning_starts)),
      integer("epochs", FIELD(train.epochs)),
      integer("iterations_per_epoch", FIELD(train.iterations_per_epoch)),
      integer("phase1_epochs", FIELD(train.phase1_epochs)),
      integer("phase1_frames", FIELD(train.phase1_frames)),
      integer("phase2_frames", FIELD(train.phase2_frames)),
      integer("actor_update_period", FIELD(train.actor_update_period)),
      real("grad_clip", FIELD(train.grad_clip)),
      integer("hidden_units", FIELD(train.hidden_units)),
      integer("hidden_layers", FIELD(train.hidden_layers)),
      real("log_std_bias_init", FIELD(train.log_std_bias_init)),
      text("features", FIELD(train.features)),
      boolean("joint_action", FIELD(train.joint_action)),
      real("target_min_bpp", FIELD(train.target_min_bpp)),
      real("target_max_bpp", FIELD(train.target_max_bpp)),
      real("c0_min", FIELD(train.c0_min)),
      real("c0_max", FIELD(train.c0_max)),
      real("trace_augment_prob", FIELD(train.trace_augment_prob)),
      integer("validation_period", FIELD(train.validation_period)),
      integer("validation_seeds", FIELD(train.validation_seeds)),
      list("validation_targets", FIELD(train.validation_targets)),
      integer("max_consecutive_failures", FIELD(train.max_consecutive_failures)),
      integer("seed", FIELD(train.seed)),
      // reward
      real("delta", FIELD(train.reward.delta)),
      real("eta_gain", FIELD(train.reward.eta_gain)),
      real("eta_terminal", FIELD(train.reward.eta_terminal)),
      real("zeta", FIELD(train.reward.zeta)),
      boolean("per_frame_rate_term", FIELD(train.reward.per_frame_rate_term)),
      boolean("terminal_rate_term", FIELD(train.reward.terminal_rate_term)),
      // evaluation
      integer("eval_seeds", FIELD(eval.seeds)),
      integer("eval_frames", FIELD(eval.frames)),
      list("eval_targets", FIELD(eval.targets)),
      list("anchor_fractions", FIELD(eval.anchor_fractions)),
      integer("trace_segment_frames", FIELD(eval.trace_segment_frames)),
      // oracle
      integer("oracle_frames", FIELD(oracle.frames)),
      integer("oracle_lambdas", FIELD(oracle.lambdas)),
      integer("oracle_ms", FIELD(oracle.ms)),
      integer("oracle_seeds", FIELD(oracle.seeds)),
      text("oracle_mode", FIELD(oracle.mode)),
      real("oracle_penalty", FIELD(oracle.penalty)),
      real("oracle_target", FIELD(oracle.target)),
      // paths
      text("output_dir", FIELD(output_dir)),
  };
  return entries;
}

#undef FIELD

const Entry& find_entry(const std::string& key) {
  for (const auto& e : registry()) {
    if (e.key == key) return e;
  }
  throw ConfigError("unknown configuration key '" + key + "'");
}

// Applies `profile` before everything else so explicit ranges win.
void apply_all(RunConfig& c, const std::vector<std::pair<std::string, std::string>>& kv,
               const std::vector<std::string>& where) {
  for (int pass = 0; pass < 2; ++pass) {
    for (std::size_t i = 0; i < kv.size(); ++i) {
      if ((kv[i].first == "profile") != (pass == 0)) continue;
      try {
        find_entry(kv[i].first).set(c, kv[i].second);
      } catch (const ConfigError& e) {
        throw ConfigError(where[i] + ": " + e.what());
      } catch (const InvalidArgument& e) {
        throw ConfigError(where[i] + ": " + kv[i].first + ": " + e.what());
      }
    }
  }
}

std::string json_value_text(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_array()) {
    std::string out;
    for (const auto& x : v) out += (out.empty() ? "" : ",") + x.dump();
    return out;
  }
  return v.dump();
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) { find_entry(key).set(*this, trim(value)); }

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> out;
  for (const auto& e : registry()) out.push_back(e.key);
  return out;
}

void RunConfig::validate() const {
  try {
    env.validate();
    train.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  if (eval.seeds < 1 || eval.frames < 1) throw ConfigError("eval_seeds and eval_frames must be positive");
  for (double t : eval.targets) {
    if (!(t > 0.0)) throw ConfigError("eval_targets must be positive");
  }
  for (double f : eval.anchor_fractions) {
    if (!(f >= 0.0 && f <= 1.0)) throw ConfigError("anchor_fractions must lie in [0, 1]");
  }
  if (eval.trace_segment_frames < 1) throw ConfigError("trace_segment_frames must be positive");
  if (oracle.frames < 1 || oracle.lambdas < 1 || oracle.ms < 1 || oracle.seeds < 1) {
    throw ConfigError("oracle sizes must be positive");
  }
  if (oracle.penalty < 0.0 || oracle.target < 0.0) throw ConfigError("oracle_penalty and oracle_target must be >= 0");
  try {
    oracle_mode_from_string(oracle.mode);
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
}

std::string RunConfig::resolved_json() const {
  Json j;
  for (const auto& e : registry()) j[e.key] = e.get(*this);
  return j.dump(2) + "\n";
}

std::pair<std::string, std::string> split_override(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + text + "' is not of the form key=value");
  return {trim(text.substr(0, eq)), trim(text.substr(eq + 1))};
}

RunConfig load_config(const std::filesystem::path* file, const std::vector<std::string>& overrides) {
  RunConfig c;
  if (const char* env = std::getenv("RC_OUTPUT_DIR"); env && *env) c.output_dir = env;
  std::vector<std::pair<std::string, std::string>> kv;
  std::vector<std::string> where;
  if (file) {
    std::ifstream in(*file);
    if (!in) throw ConfigError("cannot open config file " + file->string());
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string content = buf.str();
    const auto first = content.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && content[first] == '{') {
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(content);
      } catch (const nlohmann::json::exception& e) {
        throw ConfigError(file->string() + ": invalid JSON: " + e.what());
      }
      for (const auto& [k, v] : j.items()) {
        kv.emplace_back(k, json_value_text(v));
        where.push_back(file->string() + ": key '" + k + "'");
      }
    } else {
      std::stringstream lines(content);
      std::string line;
      int no = 0;
      while (std::getline(lines, line)) {
        ++no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty() || (line.front() == '[' && line.back() == ']')) continue;
        const auto eq = line.find('=');
        const std::string loc = file->string() + ":" + std::to_string(no);
        if (eq == std::string::npos) throw ConfigError(loc + ": expected 'key = value'");
        kv.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        where.push_back(loc);
      }
    }
  }
  apply_all(c, kv, where);
  kv.clear();
  where.clear();
  for (const auto& o : overrides) {
    kv.push_back(split_override(o));
    where.push_back("--set " + o);
  }
  apply_all(c, kv, where);
  c.validate();
  return c;
}

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace ratelab::cli
