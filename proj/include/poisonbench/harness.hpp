#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "poisonbench/attack.hpp"
#include "poisonbench/data.hpp"
#include "poisonbench/defend.hpp"
#include "poisonbench/regress.hpp"

namespace poisonbench {

enum class AttackKind { kNone, kOpt, kNopt };
enum class DefenseKind { kNone, kTrim, kProda };

const char* to_string(AttackKind k);
const char* to_string(DefenseKind k);
AttackKind parse_attack_kind(std::string_view s);
DefenseKind parse_defense_kind(std::string_view s);

struct SyntheticSource {
  Index dims = 5;
  Index samples = 300;
  double noise_std = 0.1;
};

/// Either a user CSV or a synthetic generator. Synthetic data is redrawn
/// per repeat from the master seed.
struct DataSource {
  std::string name = "synthetic";
  std::optional<std::filesystem::path> csv_path;
  CsvOptions csv;
  SyntheticSource synthetic;
};

struct ExperimentSpec {
  DataSource source;
  std::vector<Family> families{Family::kOls};
  /// Fixed lambda; when empty, lambda is chosen by validation MSE over `lambda_grid`.
  std::optional<double> lambda;
  std::vector<double> lambda_grid{std::begin(kDefaultLambdaGrid), std::end(kDefaultLambdaGrid)};
  double rho = 0.5;

  AttackKind attack = AttackKind::kNopt;
  DefenseKind defense = DefenseKind::kNone;
  std::vector<double> alphas{0.04, 0.08, 0.12, 0.16, 0.20};
  /// Proda group sizes; 0 means d+1. Ignored by the other defenses.
  std::vector<long> gammas{0};
  /// Defender's poisoning-rate estimates.
  std::vector<double> alphas_assumed{0.2};
  int repeats = 5;
  std::uint64_t master_seed = 20210101;

  /// Keep only the first k feature columns (0 keeps all).
  Index max_features = 0;
  /// Cap on the clean training fold size (0 keeps the whole fold).
  Index train_subsample = 0;
  /// When > 0, the attacker sees a bootstrap resample of this fraction of
  /// the training fold instead of the fold itself.
  double surrogate_fraction = 0.0;

  double attack_epsilon = 1e-6;
  int attack_max_iters = 100;
  double defense_epsilon = 1e-5;
  int trim_max_iters = 400;
  int trim_restarts = 16;
  /// Conversion used for the modeled (deterministic) times in summaries.
  double rate_iters_per_s = 1e9;
  int jobs = 1;

  void validate() const;
};

void to_json(nlohmann::json& j, const ExperimentSpec& spec);

struct CellCoordinates {
  std::string dataset;
  Family family = Family::kOls;
  AttackKind attack = AttackKind::kNone;
  DefenseKind defense = DefenseKind::kNone;
  double alpha = 0.0;
  double alpha_assumed = 0.2;
  long gamma = 0;
  int repeat = 0;
};

/// Seed of one cell: a hash of the master seed and every coordinate.
std::uint64_t cell_seed(std::uint64_t master_seed, const CellCoordinates& cell);
/// Seed for data generation and splitting, shared by all cells of a repeat
/// so that attacks and rates are compared on the same folds.
std::uint64_t data_seed(std::uint64_t master_seed, const std::string& dataset, int repeat);

struct ExperimentRecord {
  CellCoordinates cell;
  std::uint64_t seed = 0;
  double lambda = 0.0;
  Index train_rows = 0;
  Index poison_rows = 0;
  long gamma_used = 0;

  /// Clean-fit model on the clean training fold.
  std::optional<double> mse_clean;
  /// Poisoned model on its own training set (clean fold plus poison).
  std::optional<double> mse_poisoned;
  /// Poisoned model on the clean training fold.
  std::optional<double> mse_poisoned_clean_fold;
  /// Defended model on the clean training fold.
  std::optional<double> mse_defended;
  /// Defended model on the subset it selected.
  std::optional<double> mse_defended_subset;
  std::optional<double> mse_clean_test;
  std::optional<double> mse_poisoned_test;
  std::optional<double> mse_defended_test;

  double wall_time_attack_s = 0.0;
  double wall_time_defense_s = 0.0;
  /// Inner fits x rows fitted, divided by the spec's iteration rate.
  double time_attack_s = 0.0;
  double time_defense_s = 0.0;

  int attack_iterations = 0;
  long attack_refits = 0;
  bool attack_converged = true;
  long defense_iterations = 0;
  long beta_used = 0;
  bool defense_converged = true;
  int defense_max_iters = 0;
  double trim_worst_case_log10 = 0.0;

  std::optional<std::string> error;
};

void to_json(nlohmann::json& j, const ExperimentRecord& r);
void from_json(const nlohmann::json& j, ExperimentRecord& r);

using RecordSink = std::function<void(const ExperimentRecord&)>;

/// Runs cells of one spec; caches a CSV source across cells.
class Experiment {
 public:
  explicit Experiment(ExperimentSpec spec);

  const ExperimentSpec& spec() const { return spec_; }

  /// Grid cells in emission order: family, alpha, alpha_assumed, gamma, repeat.
  std::vector<CellCoordinates> cells() const;

  /// Never throws for computational failures; they land in `error`.
  ExperimentRecord run_cell(const CellCoordinates& cell) const;

  /// Runs every cell, emitting records in cells() order.
  void run_sweep(const RecordSink& sink) const;

 private:
  Dataset materialize(int repeat) const;

  ExperimentSpec spec_;
  std::optional<Dataset> csv_data_;
};

ExperimentRecord run_cell(const ExperimentSpec& spec, const CellCoordinates& cell);
std::vector<ExperimentRecord> run_sweep(const ExperimentSpec& spec);

struct Stat {
  double mean = 0.0;
  double median = 0.0;
  double min = 0.0;
  double max = 0.0;
  int count = 0;
};

struct SummaryRow {
  std::string dataset;
  Family family = Family::kOls;
  AttackKind attack = AttackKind::kNone;
  DefenseKind defense = DefenseKind::kNone;
  double alpha = 0.0;
  double alpha_assumed = 0.0;
  long gamma = 0;
  int records = 0;
  int errors = 0;
  std::optional<Stat> mse_clean;
  std::optional<Stat> mse_poisoned;
  std::optional<Stat> mse_defended;
  std::optional<Stat> time_attack_s;
  std::optional<Stat> time_defense_s;
  std::optional<Stat> mse_poisoned_clean_fold;
};

using Summary = std::vector<SummaryRow>;

/// Groups by every coordinate except seed and repeat.
Summary aggregate(const std::vector<ExperimentRecord>& records);

/// Fixed leading columns: dataset, family, attack, defense, alpha,
/// alpha_assumed, gamma, mse_clean, mse_poisoned, mse_defended,
/// time_attack_s, time_defense_s (means), then counts and spreads.
void write_summary_csv(std::ostream& out, const Summary& summary);
void write_summary_csv(const std::filesystem::path& path, const Summary& summary);
Summary read_summary_csv(const std::filesystem::path& path);

inline constexpr int kRecordSchemaVersion = 1;

/// JSON-lines writer; the first line is a header with the schema version.
class RecordWriter {
 public:
  RecordWriter(std::ostream& out, const ExperimentSpec& spec);
  void write(const ExperimentRecord& r);

 private:
  std::ostream& out_;
};

std::vector<ExperimentRecord> read_records_jsonl(const std::filesystem::path& path);

/// Human-readable complexity notes: Proda group counts and TRIM bounds.
std::string complexity_report(const std::vector<ExperimentRecord>& records);

}  // namespace poisonbench
