#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace poisonbench {

using Index = Eigen::Index;

/// Raised for malformed input files and dataset contract violations.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Provenance { kClean, kPoisoned, kMixed };

const char* to_string(Provenance p);

/// Feature matrix plus response vector, both in normalized units.
///
/// Rows are samples. After preprocessing every value lies in [0,1]; the
/// attack module relies on that box as its feasible region.
struct Dataset {
  Eigen::MatrixXd features;
  Eigen::VectorXd responses;
  std::vector<std::string> feature_names;
  std::string response_name = "y";
  Provenance provenance = Provenance::kClean;

  Index rows() const { return features.rows(); }
  Index dims() const { return features.cols(); }
  bool empty() const { return features.rows() == 0; }

  /// Throws DataError if the row counts or name count disagree.
  void validate() const;
};

/// Copy of the selected rows, in the given order.
Dataset select_rows(const Dataset& ds, std::span<const Index> rows);

/// Keeps only the first `count` feature columns.
Dataset truncate_features(const Dataset& ds, Index count);

struct ColumnRange {
  std::string name;
  double min = 0.0;
  double max = 1.0;
};

struct OneHotExpansion {
  std::string source;
  std::vector<std::string> levels;
};

/// Min-max scaling metadata for every retained column.
///
/// `columns` is aligned with Dataset::feature_names. One-hot indicator
/// columns are recorded with range [0,1]. Zero-variance columns are not
/// retained; their names go to `dropped`.
struct NormalizationSpec {
  std::vector<ColumnRange> columns;
  ColumnRange response;
  std::vector<std::string> dropped;
  std::vector<OneHotExpansion> onehot;

  Eigen::MatrixXd normalize_features(const Eigen::MatrixXd& raw) const;
  Eigen::MatrixXd denormalize_features(const Eigen::MatrixXd& normalized) const;
  Eigen::VectorXd normalize_responses(const Eigen::VectorXd& raw) const;
  Eigen::VectorXd denormalize_responses(const Eigen::VectorXd& normalized) const;
};

void to_json(nlohmann::json& j, const NormalizationSpec& spec);
void from_json(const nlohmann::json& j, NormalizationSpec& spec);

struct LoadedDataset {
  Dataset dataset;
  NormalizationSpec normalization;
};

struct CsvOptions {
  /// Column name, or a zero-based column index written as digits.
  std::string target_column;
  /// Columns to one-hot encode. Every other column must be numeric.
  std::vector<std::string> categorical;
  /// When false, values are kept as-is (for files already in [0,1], such as
  /// poisoned training sets written by this library) and the recorded
  /// ranges are the identity.
  bool normalize = true;
};

/// Reads a comma-delimited file with a header row, one-hot encodes the
/// categorical columns and min-max normalizes everything to [0,1].
LoadedDataset load_csv(const std::filesystem::path& path, const CsvOptions& options);

/// Same as load_csv, reading from an in-memory buffer.
LoadedDataset parse_csv(std::string_view text, const CsvOptions& options);

/// Writes features followed by the response column, header included.
void write_csv(const std::filesystem::path& path, const Dataset& ds);

struct SyntheticSpec {
  Index dims = 1;
  Index samples = 2;
  std::vector<double> true_weights;
  double true_bias = 0.0;
  double noise_std = 0.0;
  std::uint64_t seed = 0;

  /// Weights drawn uniformly from [-1,1] and bias from [0,1], seeded.
  static SyntheticSpec with_random_weights(Index dims, Index samples, double noise_std,
                                           std::uint64_t seed);
};

/// Features uniform on [0,1]^d; responses w.x + b + e with e ~ N(0, sigma^2),
/// then the whole response column is rescaled affinely into [0,1].
LoadedDataset generate_synthetic(const SyntheticSpec& spec);

struct SplitTriple {
  Dataset train;
  Dataset validation;
  Dataset test;
  std::vector<Index> train_rows;
  std::vector<Index> validation_rows;
  std::vector<Index> test_rows;
};

/// Seeded permutation cut into contiguous thirds; remainder rows go to the
/// earlier folds.
SplitTriple split_three(const Dataset& ds, std::uint64_t seed);

struct MergeResult {
  Dataset dataset;
  /// n_p / (n_o + n_p).
  double alpha = 0.0;
};

MergeResult merge(const Dataset& clean, const Dataset& poison);

/// Deterministic 64-bit mixing used for deriving child seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);

}  // namespace poisonbench
