#pragma once

#include <cstdint>
#include <vector>

#include "poisonbench/data.hpp"
#include "poisonbench/regress.hpp"

namespace poisonbench {

class DefenseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Smallest integer beta with (1 - (1 - alpha)^gamma)^beta <= epsilon.
/// alpha = 0 gives 1.
long compute_beta(double alpha, long gamma, double epsilon);

/// n = ceil((1 - alpha_assumed) N), the estimated clean count.
Index retained_count(double alpha_assumed, Index rows);

struct ProdaConfig {
  /// Group size; 0 selects the minimum legal value d+1.
  long gamma = 0;
  double epsilon = 1e-5;
  double alpha_assumed = 0.2;
  std::uint64_t seed = 0;
  double rho = 0.5;
  /// Worker threads for the group trials. Results do not depend on it.
  int jobs = 1;
};

struct DefenseResult {
  /// Ascending row indices of the selected subset.
  std::vector<Index> subset_indices;
  RegressionModel model;
  double subset_mse = 0.0;
  /// Proda: refit MSE of every group's expanded subset.
  /// TRIM: subset MSE after every iteration.
  std::vector<double> group_mse_trace;
  long beta_used = 0;
  /// Group trials actually executed (Proda) or fit/select rounds (TRIM).
  long iterations = 0;
  double wall_time_s = 0.0;

  // Proda only: the winning random group and its own fit quality.
  long winning_group = -1;
  std::vector<Index> winning_group_rows;
  double winning_group_fit_mse = 0.0;

  // TRIM only.
  std::vector<double> loss_trace;
  bool converged = true;
  /// log10 of C(N, n), the number of distinct subsets TRIM could visit.
  double worst_case_log10_iterations = 0.0;
};

/// {subset_indices, model, subset_mse, beta_used, group_mses, wall_time_s, ...}
void to_json(nlohmann::json& j, const DefenseResult& r);

/// Probabilistic subset defense: beta random groups of gamma rows, each
/// expanded to its n closest rows by absolute residual, keeping the
/// expansion whose refit has the smallest MSE.
DefenseResult proda_defend(const Dataset& ds, const ProdaConfig& cfg, Family family, double lambda);

struct TrimConfig {
  double alpha_assumed = 0.2;
  /// Iteration budget shared by all restarts.
  int max_iters = 400;
  /// Independent random starts; the lowest final loss wins.
  int restarts = 16;
  std::uint64_t seed = 0;
  double rho = 0.5;
};

/// Trimmed least squares by alternating minimization: fit on the subset,
/// then reselect the n rows with the smallest absolute residuals.
/// `loss_trace` belongs to the winning start; `iterations` counts all of them.
DefenseResult trim_defend(const Dataset& ds, const TrimConfig& cfg, Family family, double lambda);

struct ComplexityEstimate {
  long beta = 0;
  double iterations_bound = 0.0;
  /// 1 - (1 - (1 - alpha)^gamma)^beta.
  double p_u = 0.0;
  double wallclock_estimate_s = 0.0;
};

ComplexityEstimate estimate_complexity(double alpha, long gamma, double epsilon, Index n,
                                       double rate_iters_per_s);

/// log10 of the binomial coefficient C(total, chosen).
double log10_binomial(Index total, Index chosen);

}  // namespace poisonbench
