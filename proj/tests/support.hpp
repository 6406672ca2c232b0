#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "poisonbench/data.hpp"

namespace testing {

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::mt19937_64 rng(std::random_device{}());
    path_ = std::filesystem::temp_directory_path() / ("poisonbench_" + tag + "_" + std::to_string(rng()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline poisonbench::Dataset synthetic(poisonbench::Index d, poisonbench::Index n, double noise, std::uint64_t seed) {
  return poisonbench::generate_synthetic(poisonbench::SyntheticSpec::with_random_weights(d, n, noise, seed)).dataset;
}

inline poisonbench::Dataset make_dataset(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  poisonbench::Dataset ds;
  ds.features = x;
  ds.responses = y;
  for (Eigen::Index j = 0; j < x.cols(); ++j) ds.feature_names.push_back("x" + std::to_string(j));
  return ds;
}

}  // namespace testing
