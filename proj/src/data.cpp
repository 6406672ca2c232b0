#include "poisonbench/data.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace poisonbench {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

// RFC-4180-ish: double quotes wrap fields, "" is an escaped quote.
std::vector<std::string> split_record(std::string_view line) {
  std::vector<std::string> fields;
  std::string current;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          current.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        current.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back(trim(current));
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  fields.emplace_back(trim(current));
  return fields;
}

std::optional<double> parse_number(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return value;
}

bool all_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

std::string quote_if_needed(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

Index locate_target(const std::vector<std::string>& header, const std::string& target) {
  if (target.empty()) throw DataError("missing target column: no --target given");
  const auto it = std::find(header.begin(), header.end(), target);
  if (it != header.end()) return static_cast<Index>(it - header.begin());
  if (all_digits(target)) {
    const auto idx = static_cast<Index>(std::stoll(target));
    if (idx < static_cast<Index>(header.size())) return idx;
  }
  throw DataError("missing target column '" + target + "'");
}

}  // namespace

const char* to_string(Provenance p) {
  switch (p) {
    case Provenance::kClean: return "clean";
    case Provenance::kPoisoned: return "poisoned";
    case Provenance::kMixed: return "mixed";
  }
  return "unknown";
}

void Dataset::validate() const {
  if (features.rows() != responses.size()) {
    throw DataError("feature rows (" + std::to_string(features.rows()) +
                    ") differ from response count (" + std::to_string(responses.size()) + ")");
  }
  if (!feature_names.empty() && static_cast<Index>(feature_names.size()) != features.cols()) {
    throw DataError("feature name count does not match feature columns");
  }
}

Dataset select_rows(const Dataset& ds, std::span<const Index> rows) {
  Dataset out;
  out.features.resize(static_cast<Index>(rows.size()), ds.dims());
  out.responses.resize(static_cast<Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Index r = rows[i];
    if (r < 0 || r >= ds.rows()) throw DataError("row index out of range");
    out.features.row(static_cast<Index>(i)) = ds.features.row(r);
    out.responses(static_cast<Index>(i)) = ds.responses(r);
  }
  out.feature_names = ds.feature_names;
  out.response_name = ds.response_name;
  out.provenance = ds.provenance;
  return out;
}

Dataset truncate_features(const Dataset& ds, Index count) {
  if (count <= 0 || count >= ds.dims()) return ds;
  Dataset out = ds;
  out.features = ds.features.leftCols(count);
  if (!out.feature_names.empty()) out.feature_names.resize(static_cast<std::size_t>(count));
  return out;
}

Eigen::MatrixXd NormalizationSpec::normalize_features(const Eigen::MatrixXd& raw) const {
  if (raw.cols() != static_cast<Index>(columns.size())) throw DataError("column count mismatch");
  Eigen::MatrixXd out(raw.rows(), raw.cols());
  for (Index j = 0; j < raw.cols(); ++j) {
    const auto& c = columns[static_cast<std::size_t>(j)];
    out.col(j) = (raw.col(j).array() - c.min) / (c.max - c.min);
  }
  return out;
}

Eigen::MatrixXd NormalizationSpec::denormalize_features(const Eigen::MatrixXd& normalized) const {
  if (normalized.cols() != static_cast<Index>(columns.size())) throw DataError("column count mismatch");
  Eigen::MatrixXd out(normalized.rows(), normalized.cols());
  for (Index j = 0; j < normalized.cols(); ++j) {
    const auto& c = columns[static_cast<std::size_t>(j)];
    out.col(j) = normalized.col(j).array() * (c.max - c.min) + c.min;
  }
  return out;
}

Eigen::VectorXd NormalizationSpec::normalize_responses(const Eigen::VectorXd& raw) const {
  return (raw.array() - response.min) / (response.max - response.min);
}

Eigen::VectorXd NormalizationSpec::denormalize_responses(const Eigen::VectorXd& normalized) const {
  return normalized.array() * (response.max - response.min) + response.min;
}

void to_json(nlohmann::json& j, const NormalizationSpec& spec) {
  j = nlohmann::json::object();
  j["columns"] = nlohmann::json::array();
  for (const auto& c : spec.columns) j["columns"].push_back({{"name", c.name}, {"min", c.min}, {"max", c.max}});
  j["response"] = {{"name", spec.response.name}, {"min", spec.response.min}, {"max", spec.response.max}};
  j["dropped"] = spec.dropped;
  j["onehot"] = nlohmann::json::array();
  for (const auto& o : spec.onehot) j["onehot"].push_back({{"source", o.source}, {"levels", o.levels}});
}

void from_json(const nlohmann::json& j, NormalizationSpec& spec) {
  spec = {};
  for (const auto& c : j.at("columns")) {
    spec.columns.push_back({c.at("name").get<std::string>(), c.at("min").get<double>(), c.at("max").get<double>()});
  }
  const auto& r = j.at("response");
  spec.response = {r.value("name", std::string{"y"}), r.at("min").get<double>(), r.at("max").get<double>()};
  spec.dropped = j.value("dropped", std::vector<std::string>{});
  for (const auto& o : j.value("onehot", nlohmann::json::array())) {
    spec.onehot.push_back({o.at("source").get<std::string>(), o.at("levels").get<std::vector<std::string>>()});
  }
}

LoadedDataset parse_csv(std::string_view text, const CsvOptions& options) {
  std::vector<std::vector<std::string>> records;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const auto line = text.substr(pos, end - pos);
    if (!trim(line).empty()) records.push_back(split_record(line));
    pos = end + 1;
  }
  if (records.empty()) throw DataError("CSV has no header row");
  const auto header = records.front();
  records.erase(records.begin());
  if (records.size() < 2) throw DataError("CSV needs at least 2 data rows, found " + std::to_string(records.size()));

  const Index ncols = static_cast<Index>(header.size());
  for (std::size_t r = 0; r < records.size(); ++r) {
    if (static_cast<Index>(records[r].size()) != ncols) {
      throw DataError("row " + std::to_string(r + 2) + " has " + std::to_string(records[r].size()) +
                      " fields, header has " + std::to_string(ncols));
    }
  }

  const Index target = locate_target(header, options.target_column);
  const std::set<std::string> categorical(options.categorical.begin(), options.categorical.end());
  for (const auto& c : categorical) {
    if (std::find(header.begin(), header.end(), c) == header.end()) {
      throw DataError("categorical column '" + c + "' not in header");
    }
  }
  if (categorical.count(header[static_cast<std::size_t>(target)])) {
    throw DataError("target column '" + header[static_cast<std::size_t>(target)] + "' cannot be categorical");
  }

  const auto nrows = static_cast<Index>(records.size());
  auto numeric_column = [&](Index col) {
    Eigen::VectorXd v(nrows);
    for (Index r = 0; r < nrows; ++r) {
      const auto& cell = records[static_cast<std::size_t>(r)][static_cast<std::size_t>(col)];
      if (cell.empty()) {
        throw DataError("missing value in column '" + header[static_cast<std::size_t>(col)] + "', row " +
                        std::to_string(r + 2));
      }
      const auto value = parse_number(cell);
      if (!value) {
        throw DataError("non-numeric cell '" + cell + "' in numeric column '" +
                        header[static_cast<std::size_t>(col)] + "', row " + std::to_string(r + 2));
      }
      v(r) = *value;
    }
    return v;
  };

  LoadedDataset out;
  auto& spec = out.normalization;
  std::vector<Eigen::VectorXd> raw_columns;

  for (Index col = 0; col < ncols; ++col) {
    if (col == target) continue;
    const auto& name = header[static_cast<std::size_t>(col)];
    if (categorical.count(name)) {
      std::set<std::string> level_set;
      for (const auto& rec : records) {
        const auto& cell = rec[static_cast<std::size_t>(col)];
        if (cell.empty()) throw DataError("missing value in column '" + name + "'");
        level_set.insert(cell);
      }
      if (level_set.size() < 2) {
        spec.dropped.push_back(name);
        continue;
      }
      std::vector<std::string> levels(level_set.begin(), level_set.end());
      for (const auto& level : levels) {
        Eigen::VectorXd indicator(nrows);
        for (Index r = 0; r < nrows; ++r) {
          indicator(r) = records[static_cast<std::size_t>(r)][static_cast<std::size_t>(col)] == level ? 1.0 : 0.0;
        }
        raw_columns.push_back(std::move(indicator));
        spec.columns.push_back({name + "=" + level, 0.0, 1.0});
      }
      spec.onehot.push_back({name, std::move(levels)});
      continue;
    }
    Eigen::VectorXd v = numeric_column(col);
    const double lo = v.minCoeff();
    const double hi = v.maxCoeff();
    if (!(lo < hi)) {
      spec.dropped.push_back(name);
      continue;
    }
    raw_columns.push_back(std::move(v));
    spec.columns.push_back(options.normalize ? ColumnRange{name, lo, hi} : ColumnRange{name, 0.0, 1.0});
  }

  const Eigen::VectorXd y = numeric_column(target);
  const double ylo = y.minCoeff();
  const double yhi = y.maxCoeff();
  if (!(ylo < yhi)) {
    throw DataError("response column '" + header[static_cast<std::size_t>(target)] +
                    "' is constant and cannot be normalized");
  }
  spec.response = options.normalize ? ColumnRange{header[static_cast<std::size_t>(target)], ylo, yhi}
                                    : ColumnRange{header[static_cast<std::size_t>(target)], 0.0, 1.0};

  Eigen::MatrixXd raw(nrows, static_cast<Index>(raw_columns.size()));
  for (std::size_t j = 0; j < raw_columns.size(); ++j) raw.col(static_cast<Index>(j)) = raw_columns[j];

  auto& ds = out.dataset;
  ds.features = spec.normalize_features(raw);
  ds.responses = spec.normalize_responses(y);
  for (const auto& c : spec.columns) ds.feature_names.push_back(c.name);
  ds.response_name = spec.response.name;
  ds.provenance = Provenance::kClean;
  return out;
}

LoadedDataset load_csv(const std::filesystem::path& path, const CsvOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_csv(buffer.str(), options);
}

void write_csv(const std::filesystem::path& path, const Dataset& ds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  for (Index j = 0; j < ds.dims(); ++j) {
    const std::string name = j < static_cast<Index>(ds.feature_names.size())
                                 ? ds.feature_names[static_cast<std::size_t>(j)]
                                 : "x" + std::to_string(j);
    out << quote_if_needed(name) << ',';
  }
  out << quote_if_needed(ds.response_name) << '\n';
  char buf[32];
  auto put = [&](double v) {
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    out.write(buf, res.ptr - buf);
  };
  for (Index i = 0; i < ds.rows(); ++i) {
    for (Index j = 0; j < ds.dims(); ++j) {
      put(ds.features(i, j));
      out << ',';
    }
    put(ds.responses(i));
    out << '\n';
  }
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  // splitmix64 finalizer over the combined state
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

SyntheticSpec SyntheticSpec::with_random_weights(Index dims, Index samples, double noise_std,
                                                  std::uint64_t seed) {
  SyntheticSpec spec;
  spec.dims = dims;
  spec.samples = samples;
  spec.noise_std = noise_std;
  spec.seed = seed;
  std::mt19937_64 rng(mix_seed(seed, 0x5EED));
  std::uniform_real_distribution<double> weight(-1.0, 1.0);
  std::uniform_real_distribution<double> bias(0.0, 1.0);
  spec.true_weights.resize(static_cast<std::size_t>(std::max<Index>(dims, 0)));
  for (auto& w : spec.true_weights) w = weight(rng);
  spec.true_bias = bias(rng);
  return spec;
}

LoadedDataset generate_synthetic(const SyntheticSpec& spec) {
  if (spec.dims < 1) throw DataError("synthetic data needs d >= 1");
  if (spec.samples < spec.dims + 1) {
    throw DataError("synthetic data needs N >= d+1 (N=" + std::to_string(spec.samples) +
                    ", d=" + std::to_string(spec.dims) + ")");
  }
  if (!(spec.noise_std >= 0.0)) throw DataError("noise standard deviation must be >= 0");
  if (static_cast<Index>(spec.true_weights.size()) != spec.dims) {
    throw DataError("true_weights length must equal d");
  }

  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, spec.noise_std > 0.0 ? spec.noise_std : 1.0);

  const Eigen::Map<const Eigen::VectorXd> w(spec.true_weights.data(), spec.dims);
  Eigen::MatrixXd x(spec.samples, spec.dims);
  Eigen::VectorXd y(spec.samples);
  for (Index i = 0; i < spec.samples; ++i) {
    for (Index j = 0; j < spec.dims; ++j) x(i, j) = unit(rng);
    const double e = spec.noise_std > 0.0 ? noise(rng) : 0.0;
    y(i) = x.row(i).dot(w) + spec.true_bias + e;
  }

  LoadedDataset out;
  auto& norm = out.normalization;
  for (Index j = 0; j < spec.dims; ++j) norm.columns.push_back({"x" + std::to_string(j), 0.0, 1.0});
  const double lo = y.minCoeff();
  const double hi = y.maxCoeff();
  if (!(lo < hi)) throw DataError("synthetic responses are constant; use nonzero weights or noise");
  norm.response = {"y", lo, hi};

  auto& ds = out.dataset;
  ds.features = std::move(x);
  ds.responses = norm.normalize_responses(y);
  for (const auto& c : norm.columns) ds.feature_names.push_back(c.name);
  ds.response_name = "y";
  return out;
}

SplitTriple split_three(const Dataset& ds, std::uint64_t seed) {
  const Index n = ds.rows();
  if (n < 3) throw DataError("split_three needs at least 3 rows, got " + std::to_string(n));
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);

  const Index base = n / 3;
  const Index rem = n % 3;
  const Index n_train = base + (rem > 0 ? 1 : 0);
  const Index n_val = base + (rem > 1 ? 1 : 0);

  SplitTriple out;
  out.train_rows.assign(perm.begin(), perm.begin() + n_train);
  out.validation_rows.assign(perm.begin() + n_train, perm.begin() + n_train + n_val);
  out.test_rows.assign(perm.begin() + n_train + n_val, perm.end());
  out.train = select_rows(ds, out.train_rows);
  out.validation = select_rows(ds, out.validation_rows);
  out.test = select_rows(ds, out.test_rows);
  return out;
}

MergeResult merge(const Dataset& clean, const Dataset& poison) {
  if (poison.rows() > 0 && poison.dims() != clean.dims()) {
    throw DataError("cannot merge datasets with " + std::to_string(clean.dims()) + " and " +
                    std::to_string(poison.dims()) + " features");
  }
  MergeResult out;
  if (poison.rows() == 0) {
    out.dataset = clean;
    return out;
  }
  auto& ds = out.dataset;
  ds.features.resize(clean.rows() + poison.rows(), clean.dims());
  ds.features << clean.features, poison.features;
  ds.responses.resize(clean.rows() + poison.rows());
  ds.responses << clean.responses, poison.responses;
  ds.feature_names = clean.feature_names;
  ds.response_name = clean.response_name;
  ds.provenance = Provenance::kMixed;
  out.alpha = static_cast<double>(poison.rows()) / static_cast<double>(clean.rows() + poison.rows());
  return out;
}

}  // namespace poisonbench
