#include "poisonbench/attack.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>

namespace poisonbench {

namespace {

enum class Goal { kDispersion, kCleanLoss };

struct ThetaGradient {
  Eigen::VectorXd wrt_theta;   // d+1
  Eigen::VectorXd explicit_z;  // d+1, direct dependence through z_c's own residual
};

// Unregularized loss gradient over the given rows: (sum r x, sum r).
Eigen::VectorXd squared_error_gradient(const Dataset& ds, const RegressionModel& theta) {
  const Index d = ds.dims();
  Eigen::VectorXd g(d + 1);
  if (ds.rows() == 0) return Eigen::VectorXd::Zero(d + 1);
  const Eigen::VectorXd r = theta.predict(ds.features) - ds.responses;
  g.head(d) = ds.features.transpose() * r;
  g(d) = r.sum();
  return g;
}

ThetaGradient goal_gradient(Goal goal, const Dataset& clean, const Dataset& poison, const RegressionModel& theta,
                            double clean_ref_loss, ReferenceLoss reference, Index c) {
  const Index d = clean.dims();
  ThetaGradient out;
  if (goal == Goal::kCleanLoss) {
    out.wrt_theta = squared_error_gradient(clean, theta);
    out.explicit_z = Eigen::VectorXd::Zero(d + 1);
    return out;
  }

  const double n_o = static_cast<double>(clean.rows());
  const double size_ratio = (n_o + static_cast<double>(poison.rows())) / n_o;
  const double total = loss(clean, theta, false) + loss(poison, theta, false);
  const Eigen::VectorXd grad_total = squared_error_gradient(clean, theta) + squared_error_gradient(poison, theta);

  const double denom = reference == ReferenceLoss::kCleanFit ? clean_ref_loss : loss(clean, theta, false);
  if (!(denom > 0.0)) throw AttackError("reference loss must be positive");
  const double inner = total / denom - size_ratio;
  const double sign = inner >= 0.0 ? 1.0 : -1.0;

  if (reference == ReferenceLoss::kCleanFit) {
    out.wrt_theta = sign / denom * grad_total;
  } else {
    const Eigen::VectorXd grad_clean = squared_error_gradient(clean, theta);
    out.wrt_theta = sign * (grad_total * denom - total * grad_clean) / (denom * denom);
  }

  const Eigen::RowVectorXd x_c = poison.features.row(c);
  const double residual = theta.predict_row(x_c) - poison.responses(c);
  out.explicit_z.resize(d + 1);
  out.explicit_z.head(d) = residual * theta.weights;
  out.explicit_z(d) = -residual;
  out.explicit_z *= sign / denom;
  return out;
}

Eigen::VectorXd point_gradient(Goal goal, const Dataset& clean, const Dataset& poison, const RegressionModel& theta,
                               double clean_ref_loss, ReferenceLoss reference, Index c) {
  if (c < 0 || c >= poison.rows()) throw AttackError("poison row index out of range");
  const Dataset training = merge(clean, poison).dataset;
  const Eigen::VectorXd x_c = poison.features.row(c).transpose();
  const auto jac = theta_jacobian(training, theta, x_c, poison.responses(c));
  const auto g = goal_gradient(goal, clean, poison, theta, clean_ref_loss, reference, c);
  return jac.matrix * g.wrt_theta + g.explicit_z;
}

double goal_value(Goal goal, const Dataset& clean, const Dataset& poison, const RegressionModel& theta,
                  double clean_ref_loss, ReferenceLoss reference) {
  if (goal == Goal::kCleanLoss) return clean_loss_objective(clean, theta);
  const double ref = reference == ReferenceLoss::kCleanFit ? clean_ref_loss : loss(clean, theta, false);
  return dispersion_objective(clean, poison, theta, ref);
}

class AttackRunner {
 public:
  AttackRunner(Goal goal, const Dataset& view, const AttackConfig& cfg, Family family, double lambda)
      : goal_(goal), clean_(view), cfg_(cfg), family_(family), lambda_(lambda) {}

  AttackState run() {
    const auto started = std::chrono::steady_clock::now();
    cfg_.validate();
    clean_.validate();
    const Index p = cfg_.poison_rows > 0 ? cfg_.poison_rows : poison_count(cfg_.alpha, clean_.rows());
    if (p < 1) {
      throw AttackError("alpha=" + std::to_string(cfg_.alpha) + " on " + std::to_string(clean_.rows()) +
                        " rows yields no poison points");
    }

    const auto clean_fit = fit(clean_, family_, lambda_, cfg_.solver, cfg_.rho);
    state_.clean_ref_loss = loss(clean_, clean_fit.model, false);
    const Eigen::VectorXd centered = clean_.responses.array() - clean_.responses.mean();
    const double scale = 0.5 * centered.squaredNorm();
    if (goal_ == Goal::kDispersion && !(state_.clean_ref_loss > 1e-14 * std::max(scale, 1e-300))) {
      throw AttackError("clean-fit loss is zero (noiseless data); add noise or use a relative floor");
    }

    state_.poison = initial_poison(clean_, p, cfg_.seed);
    state_.poison.provenance = Provenance::kPoisoned;
    state_.theta = refit(state_.poison);

    double previous = objective(state_.poison, state_.theta);
    state_.e_trace.push_back(previous);
    record(0, previous);

    for (int iter = 1; iter <= cfg_.max_outer_iters; ++iter) {
      for (Index c = 0; c < p; ++c) step_point(c);
      const double current = objective(state_.poison, state_.theta);
      state_.e_trace.push_back(current);
      state_.outer_iterations = iter;
      record(iter, current);
      if (std::abs(current - previous) < cfg_.epsilon) {
        state_.converged = true;
        break;
      }
      previous = current;
    }
    state_.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return std::move(state_);
  }

 private:
  RegressionModel refit(const Dataset& poison) {
    ++state_.refits;
    SolverOptions opts = cfg_.solver;
    if (state_.theta.dims() == clean_.dims()) opts.initial = state_.theta;
    return fit(merge(clean_, poison).dataset, family_, lambda_, opts, cfg_.rho).model;
  }

  double objective(const Dataset& poison, const RegressionModel& theta) const {
    return goal_value(goal_, clean_, poison, theta, state_.clean_ref_loss, cfg_.reference);
  }

  void record(int iter, double value) {
    AttackIteration it;
    it.iter = iter;
    it.objective = value;
    it.mse_train = mse(merge(clean_, state_.poison).dataset, state_.theta);
    it.mse_clean = mse(clean_, state_.theta);
    it.theta = state_.theta;
    state_.iterations.push_back(std::move(it));
  }

  // Projected backtracking ascent on one poison row. A failed search leaves
  // the row and the model untouched.
  void step_point(Index c) {
    const Index d = clean_.dims();
    const Eigen::VectorXd grad =
        point_gradient(goal_, clean_, state_.poison, state_.theta, state_.clean_ref_loss, cfg_.reference, c);
    const double norm = grad.norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) {
      ++state_.failed_line_searches;
      return;
    }
    const Eigen::VectorXd direction = grad / norm;

    Eigen::VectorXd z(d + 1);
    z.head(d) = state_.poison.features.row(c).transpose();
    z(d) = state_.poison.responses(c);
    const double current = objective(state_.poison, state_.theta);

    const auto& ls = cfg_.line_search;
    double step = ls.initial_step;
    Dataset candidate = state_.poison;
    for (int k = 0; k <= ls.max_backtracks; ++k, step *= ls.shrink) {
      const Eigen::VectorXd moved = (z + step * direction).cwiseMax(0.0).cwiseMin(1.0);
      const Eigen::VectorXd delta = moved - z;
      if (delta.lpNorm<Eigen::Infinity>() == 0.0) continue;
      candidate.features.row(c) = moved.head(d).transpose();
      candidate.responses(c) = moved(d);
      RegressionModel theta = refit(candidate);
      const double value = objective(candidate, theta);
      if (value > current && value >= current + ls.armijo * grad.dot(delta)) {
        state_.poison = std::move(candidate);
        state_.theta = std::move(theta);
        return;
      }
    }
    ++state_.failed_line_searches;
  }

  Goal goal_;
  const Dataset& clean_;
  AttackConfig cfg_;
  Family family_;
  double lambda_;
  AttackState state_;
};

}  // namespace

void AttackConfig::validate() const {
  if (!(alpha > 0.0 && alpha <= 0.2 + 1e-12)) throw AttackError("alpha must lie in (0, 0.2]");
  if (poison_rows < 0) throw AttackError("poison_rows must be >= 0");
  if (!(epsilon > 0.0)) throw AttackError("epsilon must be positive");
  if (max_outer_iters < 1) throw AttackError("max_outer_iters must be >= 1");
  if (!(line_search.initial_step > 0.0) || !(line_search.shrink > 0.0 && line_search.shrink < 1.0) ||
      line_search.max_backtracks < 0) {
    throw AttackError("invalid line-search parameters");
  }
}

Index poison_count(double alpha, Index clean_rows) {
  if (!(alpha >= 0.0 && alpha < 1.0)) throw AttackError("alpha must lie in [0,1)");
  const double exact = alpha * static_cast<double>(clean_rows) / (1.0 - alpha);
  return static_cast<Index>(std::floor(exact + 1e-9));
}

Dataset initial_poison(const Dataset& view, Index p, std::uint64_t seed) {
  if (view.rows() == 0) throw AttackError("attacker view is empty");
  std::mt19937_64 rng(mix_seed(seed, 0xA77AC));
  std::vector<Index> rows;
  if (p <= view.rows()) {
    std::vector<Index> perm(static_cast<std::size_t>(view.rows()));
    std::iota(perm.begin(), perm.end(), Index{0});
    for (Index i = 0; i < p; ++i) {
      std::uniform_int_distribution<Index> pick(i, view.rows() - 1);
      std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(pick(rng))]);
    }
    rows.assign(perm.begin(), perm.begin() + p);
  } else {
    std::uniform_int_distribution<Index> pick(0, view.rows() - 1);
    for (Index i = 0; i < p; ++i) rows.push_back(pick(rng));
  }
  Dataset poison = select_rows(view, rows);
  for (Index i = 0; i < poison.rows(); ++i) poison.responses(i) = 1.0 - std::round(poison.responses(i));
  poison.provenance = Provenance::kPoisoned;
  return poison;
}

void write_trace_jsonl(std::ostream& out, const AttackState& state) {
  for (const auto& it : state.iterations) {
    nlohmann::json j = {{"iter", it.iter}, {"E", it.objective}, {"mse_train", it.mse_train},
                        {"mse_clean", it.mse_clean}, {"theta", it.theta}};
    out << j.dump() << '\n';
  }
}

Eigen::MatrixXd KktSystem::block() const {
  const Index d = sigma.rows();
  Eigen::MatrixXd b(d + 1, d + 1);
  b.topLeftCorner(d, d) = sigma + reg_block;
  b.topRightCorner(d, 1) = mu;
  b.bottomLeftCorner(1, d) = mu.transpose();
  b(d, d) = 1.0;
  return b;
}

KktSystem kkt_system(const Dataset& training, const RegressionModel& theta,
                     const Eigen::Ref<const Eigen::VectorXd>& x_c, double y_c) {
  const Index n = training.rows();
  const Index d = training.dims();
  if (theta.dims() != d || x_c.size() != d) throw AttackError("dimension mismatch in KKT system");
  if (n < d + 1) throw AttackError("KKT system needs n >= d+1 rows");
  const double inv_n = 1.0 / static_cast<double>(n);

  KktSystem k;
  k.rows = n;
  k.sigma = inv_n * (training.features.transpose() * training.features);
  k.mu = inv_n * training.features.colwise().sum().transpose();
  const double residual = x_c.dot(theta.weights) + theta.bias - y_c;
  k.m = theta.weights * x_c.transpose() + residual * Eigen::MatrixXd::Identity(d, d);

  double curvature = 0.0;
  switch (theta.family) {
    case Family::kOls:
    case Family::kLasso: curvature = 0.0; break;
    case Family::kRidge: curvature = 1.0; break;
    case Family::kElasticNet: curvature = 1.0 - theta.rho; break;
  }
  k.reg_block = (theta.lambda * curvature * inv_n) * Eigen::MatrixXd::Identity(d, d);
  return k;
}

ThetaJacobian theta_jacobian(const Dataset& training, const RegressionModel& theta,
                             const Eigen::Ref<const Eigen::VectorXd>& x_c, double y_c) {
  const Index d = training.dims();
  const KktSystem k = kkt_system(training, theta, x_c, y_c);

  // Right-hand side, rows indexed by z_c coordinates, columns by theta.
  Eigen::MatrixXd rhs(d + 1, d + 1);
  rhs.topLeftCorner(d, d) = k.m;
  rhs.topRightCorner(d, 1) = theta.weights;
  rhs.bottomLeftCorner(1, d) = -x_c.transpose();
  rhs(d, d) = -1.0;

  // l1-pinned weights stay at zero under small perturbations.
  std::vector<Index> active;
  const bool sparse = theta.family == Family::kLasso || theta.family == Family::kElasticNet;
  for (Index j = 0; j < d; ++j) {
    if (!sparse || theta.weights(j) != 0.0) active.push_back(j);
  }
  active.push_back(d);
  const auto a = static_cast<Index>(active.size());

  const Eigen::MatrixXd full = k.block();
  Eigen::MatrixXd block(a, a);
  Eigen::MatrixXd rhs_active(d + 1, a);
  for (Index i = 0; i < a; ++i) {
    rhs_active.col(i) = rhs.col(active[static_cast<std::size_t>(i)]);
    for (Index j = 0; j < a; ++j) {
      block(i, j) = full(active[static_cast<std::size_t>(i)], active[static_cast<std::size_t>(j)]);
    }
  }

  ThetaJacobian out;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(block);
  if (!lu.isInvertible() || lu.rcond() < 1e-14) {
    block.diagonal().array() += 1e-8;
    lu.compute(block);
    out.jittered = true;
    if (!lu.isInvertible() || lu.rcond() < 1e-14) throw AttackError("KKT block matrix is singular");
  }
  // J = -(1/n) R B^{-1}, and B is symmetric.
  const Eigen::MatrixXd solved = lu.solve(rhs_active.transpose()).transpose();
  out.matrix = Eigen::MatrixXd::Zero(d + 1, d + 1);
  for (Index i = 0; i < a; ++i) {
    out.matrix.col(active[static_cast<std::size_t>(i)]) = -solved.col(i) / static_cast<double>(k.rows);
  }
  return out;
}

double dispersion_objective(const Dataset& clean, const Dataset& poison, const RegressionModel& theta,
                            double clean_ref_loss) {
  if (!(clean_ref_loss > 0.0)) {
    throw AttackError("reference loss L_o is zero (noiseless clean data); add noise or use a relative floor");
  }
  if (clean.rows() == 0) throw AttackError("clean set is empty");
  const double n_o = static_cast<double>(clean.rows());
  const double n_p = static_cast<double>(poison.rows());
  const double total = loss(clean, theta, false) + (poison.rows() > 0 ? loss(poison, theta, false) : 0.0);
  return std::abs(total / clean_ref_loss - (n_o + n_p) / n_o);
}

Eigen::VectorXd objective_gradient(const Dataset& clean, const Dataset& poison, const RegressionModel& theta,
                                   double clean_ref_loss, Index c, ReferenceLoss reference) {
  return point_gradient(Goal::kDispersion, clean, poison, theta, clean_ref_loss, reference, c);
}

double clean_loss_objective(const Dataset& clean, const RegressionModel& theta) {
  return loss(clean, theta, false);
}

Eigen::VectorXd clean_loss_gradient(const Dataset& clean, const Dataset& poison, const RegressionModel& theta,
                                    Index c) {
  return point_gradient(Goal::kCleanLoss, clean, poison, theta, 1.0, ReferenceLoss::kCleanFit, c);
}

AttackState nopt_attack(const Dataset& view, const AttackConfig& cfg, Family family, double lambda) {
  return AttackRunner(Goal::kDispersion, view, cfg, family, lambda).run();
}

AttackState opt_attack(const Dataset& view, const AttackConfig& cfg, Family family, double lambda) {
  return AttackRunner(Goal::kCleanLoss, view, cfg, family, lambda).run();
}

}  // namespace poisonbench
