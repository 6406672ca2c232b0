#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "poisonbench/data.hpp"
#include "poisonbench/regress.hpp"

namespace poisonbench {

class AttackError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Where the denominator of the dispersion objective is evaluated.
enum class ReferenceLoss {
  /// Flag-off loss of the clean-fit model on the clean set, frozen up front.
  kCleanFit,
  /// Flag-off loss of the current poisoned model on the clean set.
  kCurrentModel,
};

struct LineSearchOptions {
  double initial_step = 0.1;
  double shrink = 0.5;
  int max_backtracks = 20;
  /// Sufficient-increase constant for the Armijo test.
  double armijo = 1e-4;
};

struct AttackConfig {
  /// Poisoning rate in (0, 0.2].
  double alpha = 0.2;
  /// Overrides the poison count derived from alpha when > 0.
  Index poison_rows = 0;
  double epsilon = 1e-6;
  int max_outer_iters = 100;
  LineSearchOptions line_search;
  std::uint64_t seed = 0;
  ReferenceLoss reference = ReferenceLoss::kCleanFit;
  double rho = 0.5;
  SolverOptions solver;

  void validate() const;
};

/// Number of poison rows p = floor(alpha n / (1 - alpha)), so that
/// p / (n + p) <= alpha.
Index poison_count(double alpha, Index clean_rows);

/// p rows sampled from `view` with their responses flipped to 1 - round(y).
Dataset initial_poison(const Dataset& view, Index p, std::uint64_t seed);

struct AttackIteration {
  int iter = 0;
  double objective = 0.0;
  double mse_train = 0.0;
  double mse_clean = 0.0;
  RegressionModel theta;
};

struct AttackState {
  Dataset poison;
  RegressionModel theta;
  double clean_ref_loss = 0.0;
  /// Objective after initialization and after every outer sweep.
  std::vector<double> e_trace;
  std::vector<AttackIteration> iterations;
  int outer_iterations = 0;
  bool converged = false;
  /// Inner-problem fits performed, line-search probes included.
  long refits = 0;
  long failed_line_searches = 0;
  double wall_time_s = 0.0;
};

/// One JSON object per line: {"iter", "E", "mse_train", "mse_clean", "theta"}.
void write_trace_jsonl(std::ostream& out, const AttackState& state);

/// Pieces of the stationarity-condition Jacobian, in mean-normalized form.
///
/// For the training loss 1/2 sum r_i^2 + lambda Omega(w) over n rows,
/// the Hessian is n * [[sigma + reg_block, mu], [mu^T, 1]] with
/// reg_block = (lambda / n) * d^2 Omega / dw^2.
struct KktSystem {
  Eigen::MatrixXd sigma;
  Eigen::VectorXd mu;
  /// w x_c^T + (f(x_c) - y_c) I.
  Eigen::MatrixXd m;
  Eigen::MatrixXd reg_block;
  Index rows = 0;

  /// [[sigma + reg_block, mu], [mu^T, 1]].
  Eigen::MatrixXd block() const;
};

KktSystem kkt_system(const Dataset& training, const RegressionModel& theta,
                     const Eigen::Ref<const Eigen::VectorXd>& x_c, double y_c);

struct ThetaJacobian {
  /// (d+1)x(d+1); row k is the derivative of (w, b) with respect to the
  /// k-th coordinate of z_c = (x_c, y_c).
  Eigen::MatrixXd matrix;
  bool jittered = false;
};

/// Implicit derivative of the fitted parameters with respect to one
/// training point, from the inner problem's stationarity condition.
/// Weights pinned at zero by an l1 penalty have zero derivative.
ThetaJacobian theta_jacobian(const Dataset& training, const RegressionModel& theta,
                             const Eigen::Ref<const Eigen::VectorXd>& x_c, double y_c);

/// E = | L(clean + poison) / L_o - (n_o + n_p) / n_o |, squared-error loss
/// without the regularizer.
double dispersion_objective(const Dataset& clean, const Dataset& poison, const RegressionModel& theta,
                            double clean_ref_loss);

/// Gradient of E with respect to poison row `c` (features then response).
/// At the kink of the absolute value the + branch is used.
Eigen::VectorXd objective_gradient(const Dataset& clean, const Dataset& poison, const RegressionModel& theta,
                                   double clean_ref_loss, Index c,
                                   ReferenceLoss reference = ReferenceLoss::kCleanFit);

/// The baseline objective: squared-error loss on the clean rows only.
double clean_loss_objective(const Dataset& clean, const RegressionModel& theta);

Eigen::VectorXd clean_loss_gradient(const Dataset& clean, const Dataset& poison, const RegressionModel& theta,
                                    Index c);

/// Dispersion-maximizing attack. `view` is whatever data the attacker sees.
AttackState nopt_attack(const Dataset& view, const AttackConfig& cfg, Family family, double lambda);

/// Baseline attack that maximizes the clean-set loss.
AttackState opt_attack(const Dataset& view, const AttackConfig& cfg, Family family, double lambda);

}  // namespace poisonbench
