#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "poisonbench/data.hpp"

namespace poisonbench {

enum class Family { kOls, kRidge, kLasso, kElasticNet };

const char* to_string(Family f);
/// Accepts "ols", "ridge", "lasso", "elasticnet" (also "enet", "elastic-net").
Family parse_family(std::string_view name);

/// Linear model f(x) = w.x + b with its regularizer.
///
/// Penalties, with the bias never penalized:
///   Ridge       lambda * 1/2 |w|_2^2
///   LASSO       lambda * |w|_1
///   ElasticNet  lambda * (rho |w|_1 + (1 - rho) 1/2 |w|_2^2)
struct RegressionModel {
  Eigen::VectorXd weights;
  double bias = 0.0;
  Family family = Family::kOls;
  double lambda = 0.0;
  double rho = 0.5;

  Index dims() const { return weights.size(); }
  double predict_row(const Eigen::Ref<const Eigen::RowVectorXd>& x) const { return x.dot(weights) + bias; }
  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const;

  /// Omega(w) without the lambda factor.
  double penalty() const;
};

void to_json(nlohmann::json& j, const RegressionModel& m);
void from_json(const nlohmann::json& j, RegressionModel& m);

struct SolverOptions {
  double tolerance = 1e-8;
  int max_iters = 10000;
  /// Warm start for coordinate descent; ignored by the closed-form solvers.
  std::optional<RegressionModel> initial;
};

struct FitReport {
  RegressionModel model;
  double train_loss = 0.0;
  double train_mse = 0.0;
  int iterations = 0;
  bool converged = true;
  /// Set when the design was rank deficient and the minimum-norm
  /// least-squares solution was used instead.
  bool min_norm_fallback = false;
};

/// Minimizes 1/2 sum (f(x_i) - y_i)^2 + lambda Omega(w).
///
/// OLS and Ridge solve the ridge-augmented least-squares system by QR.
/// LASSO and Elastic-net use cyclic coordinate descent with soft-thresholding
/// on centered data until the largest coordinate change drops below the
/// tolerance.
FitReport fit(const Dataset& ds, Family family, double lambda, const SolverOptions& opts = {},
              double rho = 0.5);

/// 1/2 sum of squared residuals, plus lambda Omega(w) when requested.
double loss(const Dataset& ds, const RegressionModel& model, bool include_regularizer);

double mse(const Dataset& ds, const RegressionModel& model);

/// Gradient of the regularized training loss with respect to (w, b).
Eigen::VectorXd loss_gradient(const Dataset& ds, const RegressionModel& model);

inline constexpr double kDefaultLambdaGrid[] = {1e-4, 1e-3, 1e-2, 1e-1, 1.0};

/// Picks lambda from the grid by validation MSE (ties go to the smaller
/// lambda). OLS always returns 0.
double select_lambda(const Dataset& train, const Dataset& validation, Family family,
                     std::span<const double> grid = kDefaultLambdaGrid, double rho = 0.5);

}  // namespace poisonbench
