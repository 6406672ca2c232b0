#include "poisonbench/regress.hpp"

#include <cctype>
#include <cmath>
#include <limits>

namespace poisonbench {

namespace {

double soft_threshold(double z, double t) {
  if (z > t) return z - t;
  if (z < -t) return z + t;
  return 0.0;
}

double sign_or_zero(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// l1 and l2 multipliers of the penalty, lambda folded in.
std::pair<double, double> penalty_split(Family family, double lambda, double rho) {
  switch (family) {
    case Family::kOls: return {0.0, 0.0};
    case Family::kRidge: return {0.0, lambda};
    case Family::kLasso: return {lambda, 0.0};
    case Family::kElasticNet: return {lambda * rho, lambda * (1.0 - rho)};
  }
  return {0.0, 0.0};
}

FitReport fit_closed_form(const Dataset& ds, RegressionModel model) {
  const Index n = ds.rows();
  const Index d = ds.dims();
  const double l2 = penalty_split(model.family, model.lambda, model.rho).second;
  const Index extra = l2 > 0.0 ? d : 0;

  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n + extra, d + 1);
  a.topLeftCorner(n, d) = ds.features;
  a.topRightCorner(n, 1).setOnes();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + extra);
  rhs.head(n) = ds.responses;
  if (extra > 0) a.bottomLeftCorner(d, d).diagonal().setConstant(std::sqrt(l2));

  FitReport report;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::VectorXd theta;
  if (qr.rank() == d + 1) {
    theta = qr.solve(rhs);
  } else {
    theta = a.completeOrthogonalDecomposition().solve(rhs);
    report.min_norm_fallback = true;
  }
  model.weights = theta.head(d);
  model.bias = theta(d);
  report.model = std::move(model);
  report.iterations = 1;
  return report;
}

FitReport fit_coordinate_descent(const Dataset& ds, RegressionModel model, const SolverOptions& opts) {
  const Index d = ds.dims();
  const auto [l1, l2] = penalty_split(model.family, model.lambda, model.rho);

  const Eigen::RowVectorXd x_mean = ds.features.colwise().mean();
  const double y_mean = ds.responses.mean();
  const Eigen::MatrixXd xc = ds.features.rowwise() - x_mean;
  const Eigen::VectorXd col_sq = xc.colwise().squaredNorm().transpose();

  Eigen::VectorXd w = Eigen::VectorXd::Zero(d);
  if (opts.initial && opts.initial->dims() == d) w = opts.initial->weights;
  Eigen::VectorXd r = (ds.responses.array() - y_mean).matrix() - xc * w;

  FitReport report;
  report.converged = false;
  int sweep = 0;
  while (sweep < opts.max_iters) {
    ++sweep;
    double max_change = 0.0;
    for (Index j = 0; j < d; ++j) {
      const double denom = col_sq(j) + l2;
      if (denom <= 0.0) {
        w(j) = 0.0;
        continue;
      }
      const double z = xc.col(j).dot(r) + col_sq(j) * w(j);
      const double updated = soft_threshold(z, l1) / denom;
      const double delta = updated - w(j);
      if (delta != 0.0) {
        r.noalias() -= delta * xc.col(j);
        w(j) = updated;
        max_change = std::max(max_change, std::abs(delta));
      }
    }
    if (max_change < opts.tolerance) {
      report.converged = true;
      break;
    }
  }
  model.weights = std::move(w);
  model.bias = y_mean - x_mean.dot(model.weights);
  report.model = std::move(model);
  report.iterations = sweep;
  return report;
}

}  // namespace

const char* to_string(Family f) {
  switch (f) {
    case Family::kOls: return "ols";
    case Family::kRidge: return "ridge";
    case Family::kLasso: return "lasso";
    case Family::kElasticNet: return "elasticnet";
  }
  return "unknown";
}

Family parse_family(std::string_view name) {
  std::string lower(name);
  for (auto& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (lower == "ols") return Family::kOls;
  if (lower == "ridge") return Family::kRidge;
  if (lower == "lasso") return Family::kLasso;
  if (lower == "elasticnet" || lower == "enet" || lower == "elastic-net") return Family::kElasticNet;
  throw std::invalid_argument("unknown model family '" + std::string(name) + "'");
}

Eigen::VectorXd RegressionModel::predict(const Eigen::MatrixXd& x) const {
  return (x * weights).array() + bias;
}

double RegressionModel::penalty() const {
  switch (family) {
    case Family::kOls: return 0.0;
    case Family::kRidge: return 0.5 * weights.squaredNorm();
    case Family::kLasso: return weights.lpNorm<1>();
    case Family::kElasticNet: return rho * weights.lpNorm<1>() + (1.0 - rho) * 0.5 * weights.squaredNorm();
  }
  return 0.0;
}

void to_json(nlohmann::json& j, const RegressionModel& m) {
  j = {{"family", to_string(m.family)},
       {"lambda", m.lambda},
       {"rho", m.rho},
       {"weights", std::vector<double>(m.weights.data(), m.weights.data() + m.weights.size())},
       {"bias", m.bias}};
}

void from_json(const nlohmann::json& j, RegressionModel& m) {
  m.family = parse_family(j.at("family").get<std::string>());
  m.lambda = j.at("lambda").get<double>();
  m.rho = j.value("rho", 0.5);
  const auto w = j.at("weights").get<std::vector<double>>();
  m.weights = Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Index>(w.size()));
  m.bias = j.at("bias").get<double>();
}

FitReport fit(const Dataset& ds, Family family, double lambda, const SolverOptions& opts, double rho) {
  ds.validate();
  if (ds.rows() < ds.dims() + 1) {
    throw DataError("fit needs N >= d+1 (N=" + std::to_string(ds.rows()) + ", d=" + std::to_string(ds.dims()) + ")");
  }
  if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be >= 0");
  if (!(rho >= 0.0 && rho <= 1.0)) throw std::invalid_argument("rho must lie in [0,1]");

  RegressionModel model;
  model.family = family;
  model.lambda = family == Family::kOls ? 0.0 : lambda;
  model.rho = rho;

  FitReport report = (family == Family::kOls || family == Family::kRidge)
                         ? fit_closed_form(ds, std::move(model))
                         : fit_coordinate_descent(ds, std::move(model), opts);
  report.train_loss = loss(ds, report.model, true);
  report.train_mse = mse(ds, report.model);
  return report;
}

double loss(const Dataset& ds, const RegressionModel& model, bool include_regularizer) {
  if (ds.dims() != model.dims()) throw DataError("model and dataset dimensions differ");
  const Eigen::VectorXd r = model.predict(ds.features) - ds.responses;
  double value = 0.5 * r.squaredNorm();
  if (include_regularizer) value += model.lambda * model.penalty();
  return value;
}

double mse(const Dataset& ds, const RegressionModel& model) {
  if (ds.rows() == 0) throw DataError("mse of an empty dataset");
  return 2.0 * loss(ds, model, false) / static_cast<double>(ds.rows());
}

Eigen::VectorXd loss_gradient(const Dataset& ds, const RegressionModel& model) {
  if (ds.dims() != model.dims()) throw DataError("model and dataset dimensions differ");
  const Index d = ds.dims();
  const Eigen::VectorXd r = model.predict(ds.features) - ds.responses;
  Eigen::VectorXd g(d + 1);
  g.head(d) = ds.features.transpose() * r;
  g(d) = r.sum();
  const auto [l1, l2] = penalty_split(model.family, model.lambda, model.rho);
  for (Index j = 0; j < d; ++j) g(j) += l1 * sign_or_zero(model.weights(j)) + l2 * model.weights(j);
  return g;
}

double select_lambda(const Dataset& train, const Dataset& validation, Family family,
                     std::span<const double> grid, double rho) {
  if (family == Family::kOls) return 0.0;
  if (grid.empty()) throw std::invalid_argument("lambda grid is empty");
  double best = grid.front();
  double best_mse = std::numeric_limits<double>::infinity();
  for (double lambda : grid) {
    const auto report = fit(train, family, lambda, {}, rho);
    const double m = mse(validation, report.model);
    if (m < best_mse) {
      best_mse = m;
      best = lambda;
    }
  }
  return best;
}

}  // namespace poisonbench
