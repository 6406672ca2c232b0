#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "poisonbench/harness.hpp"

namespace poisonbench::cli {

enum class Command { kFit, kAttack, kDefend, kSweep, kReport };

inline constexpr std::uint64_t kDefaultSeed = 20210101;

struct DataArgs {
  std::optional<std::filesystem::path> csv;
  std::string target;
  std::vector<std::string> categorical;
  bool raw = false;
  std::optional<SyntheticSource> synthetic;
  std::optional<std::uint64_t> synthetic_seed;
};

struct CliConfig {
  Command command = Command::kFit;
  DataArgs data;

  std::vector<Family> families{Family::kOls};
  std::optional<double> lambda;
  double rho = 0.5;

  std::vector<AttackKind> attacks{AttackKind::kNopt};
  double alpha = 0.2;
  double epsilon_conv = 1e-6;
  int max_iters = 100;
  ReferenceLoss reference = ReferenceLoss::kCleanFit;

  std::vector<DefenseKind> defenses{DefenseKind::kProda};
  long gamma = 0;
  double epsilon = 1e-5;
  double alpha_assumed = 0.2;
  int trim_max_iters = 400;
  int trim_restarts = 16;

  std::vector<double> alphas{0.04, 0.08, 0.12, 0.16, 0.20};
  std::vector<long> gammas{0};
  std::vector<double> alphas_assumed{0.2};
  int repeats = 5;
  int jobs = 1;
  Index max_features = 0;
  Index train_subsample = 0;
  double surrogate_fraction = 0.0;
  double rate = 1e9;

  std::optional<std::filesystem::path> records;

  std::uint64_t seed = kDefaultSeed;
  std::filesystem::path out;
  int verbosity = 0;
};

struct ParseResult {
  std::optional<CliConfig> config;
  /// Meaningful only when `config` is empty: 0 after --help, 2 on bad input.
  int exit_code = 0;
};

/// Flags override --config values, which override defaults.
ParseResult parse_args(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// 0 on success, 1 on computational failure.
int dispatch(const CliConfig& cfg, std::ostream& out, std::ostream& err);

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// "a:b:step" (inclusive) or a comma list; values rounded to 1e-12.
std::vector<double> parse_grid(const std::string& text);

/// "d=5,n=300,noise=0.1[,seed=7]".
std::pair<SyntheticSource, std::optional<std::uint64_t>> parse_synthetic(const std::string& text);

}  // namespace poisonbench::cli
