#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "run_config.hpp"

namespace ratelab::cli {

namespace fs = std::filesystem;

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kRuntimeFailure = 1;
inline constexpr int kUsageError = 2;

struct CommonArgs {
  std::optional<fs::path> config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<fs::path> output_dir;
};

// load_config plus --seed and --output. The output directory falls back to
// RC_OUTPUT_DIR and then to ./run.
RunConfig resolve(const CommonArgs& args);

void write_text(const fs::path& path, const std::string& text);
std::string read_text(const fs::path& path);

EpisodeOptions episode_options(const RunConfig& config);

// Digest of the resolved config with output_dir cleared.
std::string run_digest(const RunConfig& config);

// Trains into cache_root/<digest> unless a finished run is already there.
// An interrupted run is resumed. Returns the run directory.
fs::path ensure_trained(const RunConfig& config, const fs::path& cache_root, std::ostream* progress = nullptr);

EvalSuite held_out_suite(const RunConfig& config);
EvalSuite validation_suite(const RunConfig& config);

// Three segments of trace_segment_frames frames following a 0.0163, 0.0173,
// 0.0166 bpp pattern rescaled so the mean is `mean_bpp`.
BandwidthTrace reference_trace(double mean_bpp, int segment_frames);

// --- compare ---------------------------------------------------------------

struct MethodCurve {
  std::string method;
  // Per seed: one point per anchor.
  std::vector<RdCurve> curves;
  // Per anchor: mean delta R over seeds.
  std::vector<double> delta_r_pct;
  std::optional<double> bd_rate_pct;  // mean over seeds
};

struct Comparison {
  std::vector<double> anchor_lambdas;
  std::vector<std::uint64_t> seeds;
  std::vector<RdCurve> anchor;  // per seed
  std::vector<MethodCurve> methods;

  const MethodCurve& method(const std::string& name) const;
  std::string to_json() const;
};

// Methods: "agent" (needs `agent`), "static-model", "fixed-lambda". Each
// method is run on every held-out seed at the rates achieved by the fixed
// lambda anchors on that seed. Throws ConfigError with fewer than 4 anchors.
Comparison compare(const RunConfig& config, const SacAgent* agent, const std::vector<std::string>& methods);

// --- oracle ----------------------------------------------------------------

struct OracleInstance {
  std::uint64_t seed = 0;
  double r_tar = 0.0;
  OracleResult oracle;
  OracleResult independent;
  bool differs = false;
  std::optional<OracleResult> agent;
  std::optional<double> agent_gap_pct;  // 100 (J_agent / J_oracle - 1)
};

struct OracleStudy {
  int frames = 0;
  std::size_t grid_size = 0;
  std::uint64_t enumerated_per_instance = 0;
  OracleMode mode = OracleMode::kPenalized;
  double penalty = 0.0;
  std::vector<OracleInstance> instances;

  double differing_fraction() const;
  std::optional<double> mean_agent_gap_pct() const;
  std::string to_json() const;
};

// Instances use seeds first_seed, first_seed + 1, ... Throws BudgetExceeded
// before any search when the grid is too large.
OracleStudy oracle_study(const RunConfig& config, std::uint64_t first_seed, const SacAgent* agent);

// --- ablation ---------------------------------------------------------------

struct AblationVariant {
  std::string name;
  std::vector<std::string> overrides;
};

// reward, frames, action-space, state.
std::vector<std::string> ablation_names();
// Throws ConfigError listing the valid names.
std::vector<AblationVariant> ablation_variants(const std::string& name);

struct AblationRow {
  std::string variant;
  fs::path run_dir;
  double delta_r_pct = 0.0;
  double bd_rate_pct = 0.0;
  double mean_psnr = 0.0;
  double mean_bpp = 0.0;
};

struct AblationResult {
  std::string name;
  std::vector<AblationRow> rows;

  const AblationRow& row(const std::string& variant) const;
  std::string to_json() const;
  std::string table() const;
};

// Trains (or reuses) each variant under cache_root and evaluates it on the
// held-out suite. `only` restricts the variants.
AblationResult ablate(const RunConfig& base, const std::string& name, const fs::path& cache_root,
                      const std::vector<std::string>& only = {}, std::ostream* progress = nullptr);

// --- commands ---------------------------------------------------------------

struct TrainArgs {
  CommonArgs common;
  bool resume = false;
};

struct EvalArgs {
  CommonArgs common;
  fs::path checkpoint;
  std::string suite = "held-out";
  std::optional<fs::path> trace;
  std::string method = "agent";
};

struct CompareArgs {
  CommonArgs common;
  std::optional<fs::path> checkpoint;
  std::vector<std::string> methods{"agent", "static-model"};
};

struct OracleArgs {
  CommonArgs common;
  std::optional<int> frames;
  std::optional<fs::path> checkpoint;
};

struct AblateArgs {
  CommonArgs common;
  std::string name;
  std::vector<std::string> variants;
  std::optional<fs::path> cache_dir;
};

// Each returns an exit code; errors are reported on `err`.
int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& err);
int cmd_eval(const EvalArgs& args, std::ostream& out, std::ostream& err);
int cmd_compare(const CompareArgs& args, std::ostream& out, std::ostream& err);
int cmd_oracle(const OracleArgs& args, std::ostream& out, std::ostream& err);
int cmd_ablate(const AblateArgs& args, std::ostream& out, std::ostream& err);

// Maps an exception from a command to an exit code and prints it.
int report_error(std::ostream& err);

}  // namespace ratelab::cli
