#pragma once

// Flat `key = value` run configuration with `[section]` headers, `#`
// comments and `--set key=value` overrides. Every key has a default and
// unknown keys are rejected.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ratelab/baselines.hpp"
#include "ratelab/error.hpp"
#include "ratelab/trainer.hpp"

namespace ratelab::cli {

class ConfigError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

struct EvalConfig {
  int seeds = 50;
  int frames = 32;
  std::vector<double> targets{0.45, 0.6, 0.8, 1.05};
  // Fixed-lambda anchors as fractions of the log lambda range.
  std::vector<double> anchor_fractions{0.0, 1.0 / 6.0, 1.0 / 3.0, 0.5};
  int trace_segment_frames = 12;
};

struct OracleConfig {
  int frames = 4;
  int lambdas = 8;
  int ms = 3;
  int seeds = 20;
  std::string mode = "penalized";
  double penalty = 0.0;  // 0: 1 / lambda_min
  double target = 0.0;   // 0: cycle through the evaluation targets
};

struct RunConfig {
  std::string profile = "dvc";
  EnvSetup env;
  TrainConfig train;
  EvalConfig eval;
  OracleConfig oracle;
  std::string output_dir;

  void set(const std::string& key, const std::string& value);
  void validate() const;
  // Every key with its resolved value, in a fixed order.
  std::string resolved_json() const;
  static std::vector<std::string> keys();
};

// Defaults, then the file (plain text or a resolved-config JSON), then the
// overrides in order. Throws ConfigError with file:line or key context.
RunConfig load_config(const std::filesystem::path* file, const std::vector<std::string>& overrides);

// Parses `key=value`.
std::pair<std::string, std::string> split_override(const std::string& text);

// Stable 64-bit FNV-1a digest, used to name cached training runs.
std::uint64_t fnv1a(const std::string& text);

}  // namespace ratelab::cli
