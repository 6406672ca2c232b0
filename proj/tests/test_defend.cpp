#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "poisonbench/attack.hpp"
#include "poisonbench/defend.hpp"
#include "support.hpp"

using namespace poisonbench;

namespace {

// Smallest beta with (1 - (1-a)^g)^beta <= eps, searched directly on the
// inequality: doubling to bracket, then bisection.
long beta_oracle(double alpha, long gamma, double eps) {
  double clean = 1.0;
  for (long i = 0; i < gamma; ++i) clean *= 1.0 - alpha;
  const double miss = 1.0 - clean;
  auto ok = [&](long beta) { return std::pow(miss, static_cast<double>(beta)) <= eps; };
  long hi = 1;
  while (!ok(hi)) hi *= 2;
  long lo = hi / 2;
  while (hi - lo > 1) {
    const long mid = lo + (hi - lo) / 2;
    (ok(mid) ? hi : lo) = mid;
  }
  return hi;
}

// Lowest refit loss over every size-n subset.
double exhaustive_min_loss(const Dataset& ds, Index n, Family family, double lambda) {
  const Index total = ds.rows();
  std::vector<bool> mask(static_cast<std::size_t>(total), false);
  std::fill(mask.begin(), mask.begin() + n, true);
  double best = std::numeric_limits<double>::infinity();
  do {
    std::vector<Index> rows;
    for (Index i = 0; i < total; ++i) {
      if (mask[static_cast<std::size_t>(i)]) rows.push_back(i);
    }
    const auto sub = select_rows(ds, rows);
    best = std::min(best, loss(sub, fit(sub, family, lambda).model, true));
  } while (std::prev_permutation(mask.begin(), mask.end()));
  return best;
}

}  // namespace

TEST_CASE("beta matches the counting oracle") {
  CHECK(compute_beta(0.2, 6, 1e-5) == 38);
  CHECK(compute_beta(0.2, 2, 1e-5) == 12);
  for (int ai = 1; ai <= 30; ++ai) {
    const double alpha = ai / 100.0;
    for (long gamma = 2; gamma <= 60; ++gamma) {
      INFO("alpha " << alpha << " gamma " << gamma);
      CHECK(compute_beta(alpha, gamma, 1e-5) == beta_oracle(alpha, gamma, 1e-5));
    }
  }
  CHECK(compute_beta(0.0, 6, 1e-5) == 1);
  CHECK_THROWS_AS(compute_beta(0.2, 0, 1e-5), DefenseError);
  CHECK_THROWS_AS(compute_beta(0.2, 6, 0.0), DefenseError);
  CHECK_THROWS_AS(compute_beta(1.0, 6, 1e-5), DefenseError);
}

TEST_CASE("retained count") {
  CHECK(retained_count(0.2, 100) == 80);
  CHECK(retained_count(0.2, 125) == 100);
  CHECK(retained_count(0.0, 17) == 17);
  CHECK(retained_count(0.25, 12) == 9);
}

TEST_CASE("complexity estimate") {
  for (int ai = 1; ai <= 30; ++ai) {
    for (long gamma = 2; gamma <= 60; ++gamma) {
      const auto est = estimate_complexity(ai / 100.0, gamma, 1e-5, 300, 1e9);
      CHECK(est.p_u >= 1.0 - 1e-5 - 1e-12);
      CHECK(est.beta == compute_beta(ai / 100.0, gamma, 1e-5));
    }
  }
  const auto est = estimate_complexity(0.2, 6, 1e-5, 300, 1e9);
  CHECK(est.iterations_bound == doctest::Approx(38.0 * 300.0));
  CHECK(est.wallclock_estimate_s == doctest::Approx(38.0 * 300.0 / 1e9));
  CHECK(log10_binomial(12, 9) == doctest::Approx(std::log10(220.0)));
  CHECK(log10_binomial(5, 0) == doctest::Approx(0.0));
}

TEST_CASE("proda runs exactly beta groups and is deterministic") {
  const auto ds = testing::synthetic(5, 100, 0.1, 3);
  ProdaConfig cfg;
  cfg.seed = 9;
  const auto r = proda_defend(ds, cfg, Family::kOls, 0.0);
  CHECK(r.beta_used == 38);
  CHECK(r.iterations == 38);
  CHECK(r.group_mse_trace.size() == 38);
  CHECK(static_cast<Index>(r.subset_indices.size()) == 80);
  CHECK(std::is_sorted(r.subset_indices.begin(), r.subset_indices.end()));
  CHECK(r.winning_group_rows.size() == 6);
  CHECK(r.subset_mse == doctest::Approx(*std::min_element(r.group_mse_trace.begin(), r.group_mse_trace.end())));

  cfg.jobs = 4;
  const auto threaded = proda_defend(ds, cfg, Family::kOls, 0.0);
  CHECK(threaded.subset_indices == r.subset_indices);
  CHECK(threaded.group_mse_trace == r.group_mse_trace);
  CHECK(threaded.winning_group == r.winning_group);

  cfg.gamma = 2;
  CHECK_THROWS_AS(proda_defend(ds, cfg, Family::kOls, 0.0), DefenseError);
}

TEST_CASE("defenses discard gross outliers") {
  auto clean = testing::synthetic(2, 80, 0.05, 4);
  Dataset poison = initial_poison(clean, 16, 4);
  const auto merged = merge(clean, poison).dataset;
  const double clean_mse = fit(clean, Family::kOls, 0.0).train_mse;

  ProdaConfig pc;
  pc.seed = 1;
  const auto pr = proda_defend(merged, pc, Family::kOls, 0.0);
  CHECK(mse(clean, pr.model) <= 1.5 * clean_mse);

  TrimConfig tc;
  tc.seed = 1;
  const auto tr = trim_defend(merged, tc, Family::kOls, 0.0);
  CHECK(mse(clean, tr.model) <= 1.5 * clean_mse);
}

TEST_CASE("trim loss never increases and respects the cap") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto clean = testing::synthetic(3, 60, 0.1, 40 + seed);
    const auto merged = merge(clean, initial_poison(clean, 15, seed)).dataset;
    TrimConfig cfg;
    cfg.seed = seed;
    for (auto family : {Family::kOls, Family::kRidge, Family::kLasso}) {
      const auto r = trim_defend(merged, cfg, family, family == Family::kOls ? 0.0 : 0.01);
      for (std::size_t i = 1; i < r.loss_trace.size(); ++i) CHECK(r.loss_trace[i] <= r.loss_trace[i - 1] + 1e-10);
      CHECK(r.iterations <= cfg.max_iters);
      CHECK(r.worst_case_log10_iterations == doctest::Approx(log10_binomial(75, 60)));
    }
    cfg.max_iters = 1;
    const auto capped = trim_defend(merged, cfg, Family::kOls, 0.0);
    CHECK(capped.iterations == 1);
  }
}

TEST_CASE("trim restarts share the budget and never do worse than one start") {
  const auto clean = testing::synthetic(2, 40, 0.1, 77);
  const auto merged = merge(clean, initial_poison(clean, 10, 77)).dataset;
  TrimConfig one;
  one.restarts = 1;
  one.seed = 5;
  TrimConfig many = one;
  many.restarts = 16;
  const auto a = trim_defend(merged, one, Family::kOls, 0.0);
  const auto b = trim_defend(merged, many, Family::kOls, 0.0);
  CHECK(b.loss_trace.back() <= a.loss_trace.back());
  CHECK(b.iterations >= a.iterations);
  many.max_iters = 3;
  CHECK(trim_defend(merged, many, Family::kOls, 0.0).iterations == 3);
  many.restarts = 0;
  CHECK_THROWS_AS(trim_defend(merged, many, Family::kOls, 0.0), DefenseError);
}

TEST_CASE("both defenses come close to the exhaustive subset optimum") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto clean = testing::synthetic(1, 9, 0.1, 500 + seed);
    const auto merged = merge(clean, initial_poison(clean, 3, seed)).dataset;
    const Index n = retained_count(0.25, 12);
    REQUIRE(n == 9);
    const double best = exhaustive_min_loss(merged, n, Family::kOls, 0.0);

    ProdaConfig pc;
    pc.alpha_assumed = 0.25;
    pc.seed = seed;
    const auto pr = proda_defend(merged, pc, Family::kOls, 0.0);
    const auto pr_sub = select_rows(merged, pr.subset_indices);
    CHECK(loss(pr_sub, fit(pr_sub, Family::kOls, 0.0).model, true) <= 1.05 * best + 1e-12);

    TrimConfig tc;
    tc.alpha_assumed = 0.25;
    tc.seed = seed;
    const auto tr = trim_defend(merged, tc, Family::kOls, 0.0);
    const auto tr_sub = select_rows(merged, tr.subset_indices);
    INFO("seed " << seed);
    CHECK(loss(tr_sub, fit(tr_sub, Family::kOls, 0.0).model, true) <= 1.05 * best + 1e-12);
  }
}

TEST_CASE("clean-group probability") {
  // Empirical chance that a random gamma-subset of a set with a fraction
  // alpha poisoned is all clean, against (1-alpha)^gamma.
  const Index total = 100, dirty = 20, gamma = 4;
  std::mt19937_64 rng(1);
  int clean_groups = 0;
  const int trials = 20000;
  for (int t = 0; t < trials; ++t) {
    std::vector<Index> rows(static_cast<std::size_t>(total));
    std::iota(rows.begin(), rows.end(), Index{0});
    std::shuffle(rows.begin(), rows.end(), rng);
    clean_groups += std::all_of(rows.begin(), rows.begin() + gamma, [&](Index r) { return r >= dirty; }) ? 1 : 0;
  }
  // Sampling without replacement: C(80,4)/C(100,4).
  const double exact = (80.0 * 79 * 78 * 77) / (100.0 * 99 * 98 * 97);
  CHECK(static_cast<double>(clean_groups) / trials == doctest::Approx(exact).epsilon(0.05));
  CHECK(exact <= std::pow(0.8, 4));
}

TEST_CASE("defense result json") {
  const auto ds = testing::synthetic(2, 30, 0.1, 3);
  const auto r = proda_defend(ds, {}, Family::kOls, 0.0);
  const nlohmann::json j = r;
  for (const char* key : {"subset_indices", "model", "subset_mse", "beta_used", "group_mses", "wall_time_s"}) {
    CHECK(j.contains(key));
  }
}
