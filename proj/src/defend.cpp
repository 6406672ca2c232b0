#include "poisonbench/defend.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <thread>

namespace poisonbench {

namespace {

// Floyd's algorithm: `count` distinct values from [0, total).
std::vector<Index> sample_distinct(Index total, Index count, std::mt19937_64& rng) {
  std::vector<Index> out;
  out.reserve(static_cast<std::size_t>(count));
  for (Index j = total - count; j < total; ++j) {
    std::uniform_int_distribution<Index> pick(0, j);
    const Index t = pick(rng);
    if (std::find(out.begin(), out.end(), t) == out.end()) {
      out.push_back(t);
    } else {
      out.push_back(j);
    }
  }
  return out;
}

// The `count` rows with the smallest |residual|, ties by row index,
// returned in ascending index order.
std::vector<Index> closest_rows(const Dataset& ds, const RegressionModel& model, Index count) {
  const Eigen::VectorXd r = (model.predict(ds.features) - ds.responses).cwiseAbs();
  std::vector<Index> order(static_cast<std::size_t>(ds.rows()));
  std::iota(order.begin(), order.end(), Index{0});
  auto closer = [&](Index a, Index b) { return r(a) < r(b) || (r(a) == r(b) && a < b); };
  std::nth_element(order.begin(), order.begin() + (count - 1), order.end(), closer);
  order.resize(static_cast<std::size_t>(count));
  std::sort(order.begin(), order.end());
  return order;
}

struct GroupTrial {
  std::vector<Index> group;
  std::vector<Index> subset;
  RegressionModel model;
  double subset_mse = 0.0;
  double group_fit_mse = 0.0;
};

GroupTrial run_group(const Dataset& ds, Index gamma, Index n, std::uint64_t seed, Family family, double lambda,
                     double rho) {
  std::mt19937_64 rng(seed);
  GroupTrial t;
  t.group = sample_distinct(ds.rows(), gamma, rng);
  std::sort(t.group.begin(), t.group.end());
  const Dataset group = select_rows(ds, t.group);
  const auto line = fit(group, family, lambda, {}, rho);
  t.group_fit_mse = line.train_mse;
  t.subset = closest_rows(ds, line.model, n);
  const auto refit = fit(select_rows(ds, t.subset), family, lambda, {}, rho);
  t.model = refit.model;
  t.subset_mse = refit.train_mse;
  return t;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

long compute_beta(double alpha, long gamma, double epsilon) {
  if (!(alpha >= 0.0 && alpha < 1.0)) throw DefenseError("alpha must lie in [0,1)");
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw DefenseError("epsilon must lie in (0,1)");
  if (gamma < 1) throw DefenseError("gamma must be >= 1");
  if (alpha == 0.0) return 1;

  const double clean_group = std::pow(1.0 - alpha, static_cast<double>(gamma));
  const double dirty = 1.0 - clean_group;
  if (!(dirty < 1.0)) throw DefenseError("gamma too large: a clean group has probability 0");

  const double estimate = std::ceil(std::log(epsilon) / std::log1p(-clean_group));
  if (!(estimate < 1e12)) throw DefenseError("beta exceeds 1e12 groups");
  auto beta = std::max(1L, static_cast<long>(estimate));
  // Settle rounding in the logarithms against the defining inequality.
  while (std::pow(dirty, static_cast<double>(beta)) > epsilon) ++beta;
  while (beta > 1 && std::pow(dirty, static_cast<double>(beta - 1)) <= epsilon) --beta;
  return beta;
}

Index retained_count(double alpha_assumed, Index rows) {
  if (!(alpha_assumed >= 0.0 && alpha_assumed < 1.0)) throw DefenseError("alpha_assumed must lie in [0,1)");
  const double exact = (1.0 - alpha_assumed) * static_cast<double>(rows);
  return std::min(rows, static_cast<Index>(std::ceil(exact - 1e-9)));
}

double log10_binomial(Index total, Index chosen) {
  if (chosen < 0 || chosen > total) return -INFINITY;
  const auto t = static_cast<double>(total);
  const auto c = static_cast<double>(chosen);
  return (std::lgamma(t + 1) - std::lgamma(c + 1) - std::lgamma(t - c + 1)) / std::log(10.0);
}

void to_json(nlohmann::json& j, const DefenseResult& r) {
  j = {{"subset_indices", r.subset_indices},
       {"model", r.model},
       {"subset_mse", r.subset_mse},
       {"beta_used", r.beta_used},
       {"group_mses", r.group_mse_trace},
       {"iterations", r.iterations},
       {"wall_time_s", r.wall_time_s}};
  if (r.winning_group >= 0) {
    j["winning_group"] = r.winning_group;
    j["winning_group_rows"] = r.winning_group_rows;
    j["winning_group_fit_mse"] = r.winning_group_fit_mse;
  }
  if (!r.loss_trace.empty()) {
    j["loss_trace"] = r.loss_trace;
    j["converged"] = r.converged;
    j["worst_case_log10_iterations"] = r.worst_case_log10_iterations;
  }
}

DefenseResult proda_defend(const Dataset& ds, const ProdaConfig& cfg, Family family, double lambda) {
  const auto started = std::chrono::steady_clock::now();
  ds.validate();
  const Index d = ds.dims();
  const Index gamma = cfg.gamma == 0 ? d + 1 : static_cast<Index>(cfg.gamma);
  if (gamma < d + 1) {
    throw DefenseError("gamma=" + std::to_string(gamma) + " is below d+1=" + std::to_string(d + 1));
  }
  const Index n = retained_count(cfg.alpha_assumed, ds.rows());
  if (n < gamma || ds.rows() < gamma) {
    throw DefenseError("dataset too small: n=" + std::to_string(n) + " retained rows < gamma=" +
                       std::to_string(gamma));
  }
  const long beta = compute_beta(cfg.alpha_assumed, gamma, cfg.epsilon);

  std::vector<double> mses(static_cast<std::size_t>(beta));
  std::vector<double> fit_mses(static_cast<std::size_t>(beta));
  std::vector<long> executed(static_cast<std::size_t>(std::max(cfg.jobs, 1)), 0);

  auto worker = [&](int slot, long begin, long end) {
    for (long g = begin; g < end; ++g) {
      const auto trial = run_group(ds, gamma, n, mix_seed(cfg.seed, static_cast<std::uint64_t>(g)), family,
                                   lambda, cfg.rho);
      mses[static_cast<std::size_t>(g)] = trial.subset_mse;
      fit_mses[static_cast<std::size_t>(g)] = trial.group_fit_mse;
      ++executed[static_cast<std::size_t>(slot)];
    }
  };

  const int jobs = static_cast<int>(std::clamp<long>(cfg.jobs, 1, beta));
  if (jobs == 1) {
    worker(0, 0, beta);
  } else {
    std::vector<std::jthread> threads;
    const long chunk = (beta + jobs - 1) / jobs;
    for (int t = 0; t < jobs; ++t) {
      const long begin = t * chunk;
      const long end = std::min(beta, begin + chunk);
      if (begin < end) threads.emplace_back(worker, t, begin, end);
    }
  }

  // Ties go to the lowest group index.
  long best = 0;
  for (long g = 1; g < beta; ++g) {
    if (mses[static_cast<std::size_t>(g)] < mses[static_cast<std::size_t>(best)]) best = g;
  }
  // Recompute the winner rather than keeping every subset alive.
  const auto winner = run_group(ds, gamma, n, mix_seed(cfg.seed, static_cast<std::uint64_t>(best)), family, lambda,
                                cfg.rho);

  DefenseResult result;
  result.subset_indices = winner.subset;
  result.model = winner.model;
  result.subset_mse = winner.subset_mse;
  result.group_mse_trace = std::move(mses);
  result.beta_used = beta;
  result.iterations = std::accumulate(executed.begin(), executed.end(), 0L);
  result.winning_group = best;
  result.winning_group_rows = winner.group;
  result.winning_group_fit_mse = winner.group_fit_mse;
  result.wall_time_s = seconds_since(started);
  return result;
}

DefenseResult trim_defend(const Dataset& ds, const TrimConfig& cfg, Family family, double lambda) {
  const auto started = std::chrono::steady_clock::now();
  ds.validate();
  const Index n = retained_count(cfg.alpha_assumed, ds.rows());
  if (n < ds.dims() + 1) {
    throw DefenseError("retained rows n=" + std::to_string(n) + " below d+1=" + std::to_string(ds.dims() + 1));
  }
  if (cfg.max_iters < 1) throw DefenseError("max_iters must be >= 1");

  if (cfg.restarts < 1) throw DefenseError("restarts must be >= 1");

  DefenseResult result;
  result.converged = false;
  result.worst_case_log10_iterations = log10_binomial(ds.rows(), n);
  double best_loss = std::numeric_limits<double>::infinity();
  int budget = cfg.max_iters;
  const std::uint64_t base = mix_seed(cfg.seed, 0x7219);
  for (int start = 0; start < cfg.restarts && budget > 0; ++start) {
    std::mt19937_64 rng(start == 0 ? base : mix_seed(base, static_cast<std::uint64_t>(start)));
    std::vector<Index> subset = sample_distinct(ds.rows(), n, rng);
    std::sort(subset.begin(), subset.end());

    FitReport current;
    std::vector<double> losses, mses;
    bool converged = false;
    while (budget > 0) {
      current = fit(select_rows(ds, subset), family, lambda, {}, cfg.rho);
      --budget;
      ++result.iterations;
      losses.push_back(current.train_loss);
      mses.push_back(current.train_mse);

      auto next = closest_rows(ds, current.model, n);
      const bool same_subset = next == subset;
      const bool same_loss = losses.size() >= 2 && std::abs(losses[losses.size() - 2] - current.train_loss) <= 1e-12;
      if (same_subset || same_loss) {
        converged = true;
        break;
      }
      subset = std::move(next);
    }
    if (current.train_loss < best_loss) {
      best_loss = current.train_loss;
      result.subset_indices = std::move(subset);
      result.model = current.model;
      result.subset_mse = current.train_mse;
      result.loss_trace = std::move(losses);
      result.group_mse_trace = std::move(mses);
      result.converged = converged;
    }
  }

  result.beta_used = 0;
  result.wall_time_s = seconds_since(started);
  return result;
}

ComplexityEstimate estimate_complexity(double alpha, long gamma, double epsilon, Index n, double rate_iters_per_s) {
  if (!(rate_iters_per_s > 0.0)) throw DefenseError("iteration rate must be positive");
  if (n < 0) throw DefenseError("n must be >= 0");
  ComplexityEstimate e;
  e.beta = compute_beta(alpha, gamma, epsilon);
  e.iterations_bound = static_cast<double>(e.beta) * static_cast<double>(n);
  const double dirty = 1.0 - std::pow(1.0 - alpha, static_cast<double>(gamma));
  e.p_u = 1.0 - std::pow(dirty, static_cast<double>(e.beta));
  e.wallclock_estimate_s = e.iterations_bound / rate_iters_per_s;
  return e;
}

}  // namespace poisonbench
