// Acceptance suite: one PASS/FAIL/SKIP line per criterion.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "poisonbench/attack.hpp"
#include "poisonbench/defend.hpp"
#include "poisonbench/harness.hpp"
#include "poisonbench/regress.hpp"

using namespace poisonbench;

namespace {

enum class Status { kPass, kFail, kSkip };

struct Outcome {
  Status status = Status::kFail;
  std::string detail;
};

Outcome fail(std::string d) { return {Status::kFail, std::move(d)}; }
Outcome verdict(bool ok, std::string d) { return {ok ? Status::kPass : Status::kFail, std::move(d)}; }

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

Dataset synthetic(Index d, Index n, double noise, std::uint64_t seed) {
  return generate_synthetic(SyntheticSpec::with_random_weights(d, n, noise, seed)).dataset;
}

// 1. Analytic dispersion gradient against central differences with a full
// refit per probe.
Outcome gradient_check() {
  const double h = 1e-5;
  double worst = 0.0;
  int instances = 0;
  std::mt19937_64 rng(1);
  for (int i = 0; i < 50; ++i) {
    const Family family = i % 2 ? Family::kRidge : Family::kOls;
    const double lambda = family == Family::kRidge ? 0.1 : 0.0;
    const Index d = 1 + static_cast<Index>(rng() % 5);
    const auto clean = synthetic(d, 40, 0.1, 1000 + i);
    Dataset poison = initial_poison(clean, 10, 1000 + i);
    std::uniform_real_distribution<double> u(0.2, 0.8);
    for (Index r = 0; r < poison.rows(); ++r) poison.responses(r) = u(rng);

    SolverOptions tight;
    tight.tolerance = 1e-13;
    const double l_o = loss(clean, fit(clean, family, lambda).model, false);
    auto value = [&](const Dataset& p) {
      return dispersion_objective(clean, p, fit(merge(clean, p).dataset, family, lambda, tight).model, l_o);
    };
    const auto theta = fit(merge(clean, poison).dataset, family, lambda, tight).model;
    const Index c = static_cast<Index>(rng() % static_cast<std::uint64_t>(poison.rows()));
    const Eigen::VectorXd g = objective_gradient(clean, poison, theta, l_o, c);
    Eigen::VectorXd fd(d + 1);
    for (Index k = 0; k <= d; ++k) {
      Dataset up = poison, down = poison;
      if (k < d) {
        up.features(c, k) += h;
        down.features(c, k) -= h;
      } else {
        up.responses(c) += h;
        down.responses(c) -= h;
      }
      fd(k) = (value(up) - value(down)) / (2 * h);
    }
    worst = std::max(worst, (g - fd).norm() / std::max(fd.norm(), 1e-12));
    ++instances;
  }
  return verdict(worst <= 1e-3, std::to_string(instances) + " instances, max rel err " + fmt(worst));
}

// 2. Poison equal to the clean set leaves the OLS objective at zero.
Outcome duplication_identity() {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto clean = synthetic(5, 100, 0.1, seed);
    const double l_o = loss(clean, fit(clean, Family::kOls, 0.0).model, false);
    const auto both = fit(merge(clean, clean).dataset, Family::kOls, 0.0).model;
    worst = std::max(worst, dispersion_objective(clean, clean, both, l_o));
  }
  return verdict(worst <= 1e-10, "max E " + fmt(worst));
}

// Smallest beta satisfying the guarantee, by bracketing and bisection on
// the inequality itself.
long beta_oracle(double alpha, long gamma, double eps) {
  double clean = 1.0;
  for (long i = 0; i < gamma; ++i) clean *= 1.0 - alpha;
  const double miss = 1.0 - clean;
  auto ok = [&](long b) { return std::pow(miss, static_cast<double>(b)) <= eps; };
  long hi = 1;
  while (!ok(hi)) hi *= 2;
  long lo = hi / 2;
  while (hi - lo > 1) {
    const long mid = lo + (hi - lo) / 2;
    (ok(mid) ? hi : lo) = mid;
  }
  return hi;
}

// 3.
Outcome beta_exactness() {
  int mismatches = 0, cells = 0;
  for (int ai = 1; ai <= 30; ++ai) {
    for (long gamma = 2; gamma <= 60; ++gamma) {
      ++cells;
      if (compute_beta(ai / 100.0, gamma, 1e-5) != beta_oracle(ai / 100.0, gamma, 1e-5)) ++mismatches;
    }
  }
  const long b38 = compute_beta(0.2, 6, 1e-5), b12 = compute_beta(0.2, 2, 1e-5);
  return verdict(mismatches == 0 && b38 == 38 && b12 == 12,
                 std::to_string(cells - mismatches) + "/" + std::to_string(cells) + " grid points, beta(0.2,6)=" +
                     std::to_string(b38) + ", beta(0.2,2)=" + std::to_string(b12));
}

const std::vector<Family> kFamilies{Family::kOls, Family::kRidge, Family::kLasso, Family::kElasticNet};

ExperimentSpec synthetic_spec() {
  ExperimentSpec spec;
  spec.source.synthetic = {5, 300, 0.1};
  spec.families = kFamilies;
  spec.repeats = 5;
  spec.jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  return spec;
}

std::vector<ExperimentRecord> sweep_or_errors(const ExperimentSpec& spec, std::string& errors) {
  auto records = run_sweep(spec);
  for (const auto& r : records) {
    if (r.error && errors.empty()) errors = *r.error;
  }
  return records;
}

// 4.
Outcome attack_direction() {
  auto spec = synthetic_spec();
  std::string error;
  spec.attack = AttackKind::kNopt;
  const auto nopt = sweep_or_errors(spec, error);
  spec.attack = AttackKind::kOpt;
  spec.alphas = {0.2};
  const auto opt = sweep_or_errors(spec, error);
  if (!error.empty()) return fail("cell error: " + error);

  std::ostringstream detail;
  bool ok = true;
  for (auto family : kFamilies) {
    std::map<double, std::vector<double>> nopt_by_alpha;
    std::vector<double> opt_mse, clean_mse;
    for (const auto& r : nopt) {
      if (r.cell.family != family) continue;
      nopt_by_alpha[r.cell.alpha].push_back(*r.mse_poisoned);
      if (r.cell.alpha == 0.2) clean_mse.push_back(*r.mse_clean);
    }
    for (const auto& r : opt) {
      if (r.cell.family == family) opt_mse.push_back(*r.mse_poisoned);
    }
    const double mn = median(nopt_by_alpha[0.2]), mo = median(opt_mse), mc = median(clean_mse);
    bool clean_below = true;
    for (double c : clean_mse) clean_below = clean_below && mo > c;
    int inversions = 0;
    double prev = -1.0;
    for (const auto& [alpha, values] : nopt_by_alpha) {
      const double m = median(values);
      if (m < prev) ++inversions;
      prev = m;
    }
    const bool family_ok = mn > mo && mo > mc && clean_below && inversions <= 1;
    ok = ok && family_ok;
    detail << to_string(family) << " nopt " << fmt(mn) << " opt " << fmt(mo) << " clean " << fmt(mc)
           << " inversions " << inversions << (family_ok ? "" : " (fail)") << "; ";
  }
  return verdict(ok, detail.str());
}

// 5.
Outcome defense_efficacy() {
  auto spec = synthetic_spec();
  spec.attack = AttackKind::kNopt;
  spec.alphas = {0.2};
  spec.alphas_assumed = {0.2};
  std::string error;
  std::ostringstream detail;
  bool ok = true;
  for (auto defense : {DefenseKind::kProda, DefenseKind::kTrim}) {
    spec.defense = defense;
    const auto records = sweep_or_errors(spec, error);
    if (!error.empty()) return fail("cell error: " + error);
    for (auto family : kFamilies) {
      int good = 0;
      for (const auto& r : records) {
        if (r.cell.family == family && *r.mse_defended <= 1.1 * *r.mse_clean) ++good;
      }
      ok = ok && good >= 4;
      detail << to_string(defense) << "/" << to_string(family) << " " << good << "/5; ";
    }
  }

  // Defender assumes 0.2 while the attacker poisons at 0.04.
  spec.alphas = {0.04};
  for (auto defense : {DefenseKind::kProda, DefenseKind::kTrim}) {
    spec.defense = defense;
    const auto records = sweep_or_errors(spec, error);
    if (!error.empty()) return fail("cell error: " + error);
    std::vector<double> defended, poisoned;
    for (const auto& r : records) {
      defended.push_back(*r.mse_defended);
      poisoned.push_back(*r.mse_poisoned_clean_fold);
    }
    const double md = median(defended), mp = median(poisoned);
    ok = ok && md <= mp;
    detail << "assumed 0.2 real 0.04 " << to_string(defense) << " defended " << fmt(md) << " poisoned " << fmt(mp)
           << "; ";
  }
  return verdict(ok, detail.str());
}

double exhaustive_min_loss(const Dataset& ds, Index n) {
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
    best = std::min(best, loss(sub, fit(sub, Family::kOls, 0.0).model, true));
  } while (std::prev_permutation(mask.begin(), mask.end()));
  return best;
}

double refit_loss(const Dataset& ds, const std::vector<Index>& rows) {
  const auto sub = select_rows(ds, rows);
  return loss(sub, fit(sub, Family::kOls, 0.0).model, true);
}

// 6. N=12 (9 clean, 3 Nopt poison), n=9, d=1.
Outcome subset_oracle() {
  int proda_ok = 0, trim_ok = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto clean = synthetic(1, 9, 0.1, 500 + seed);
    AttackConfig ac;
    ac.poison_rows = 3;
    ac.seed = seed;
    const auto merged = merge(clean, nopt_attack(clean, ac, Family::kOls, 0.0).poison).dataset;
    const Index n = retained_count(0.25, merged.rows());
    const double best = exhaustive_min_loss(merged, n);

    ProdaConfig pc;
    pc.alpha_assumed = 0.25;
    pc.seed = seed;
    if (refit_loss(merged, proda_defend(merged, pc, Family::kOls, 0.0).subset_indices) <= 1.05 * best + 1e-12) {
      ++proda_ok;
    }
    TrimConfig tc;
    tc.alpha_assumed = 0.25;
    tc.seed = seed;
    if (refit_loss(merged, trim_defend(merged, tc, Family::kOls, 0.0).subset_indices) <= 1.05 * best + 1e-12) {
      ++trim_ok;
    }
  }
  return verdict(proda_ok == 20 && trim_ok == 20, "C(12,9)=220 subsets; proda " + std::to_string(proda_ok) +
                                                      "/20, trim " + std::to_string(trim_ok) + "/20");
}

// 7.
Outcome complexity_accounting() {
  bool ok = true;
  std::ostringstream detail;
  const auto ds = synthetic(5, 125, 0.1, 7);
  ProdaConfig pc;
  const auto pr = proda_defend(ds, pc, Family::kOls, 0.0);
  const long expected = compute_beta(0.2, 6, 1e-5);
  ok = ok && pr.iterations == expected && static_cast<long>(pr.group_mse_trace.size()) == expected;
  detail << "proda groups " << pr.iterations << " of beta " << expected << "; ";

  double min_pu = 1.0;
  for (int ai = 4; ai <= 20; ++ai) {
    for (long gamma = 2; gamma <= 60; ++gamma) {
      min_pu = std::min(min_pu, estimate_complexity(ai / 100.0, gamma, 1e-5, 300, 1e9).p_u);
    }
  }
  ok = ok && min_pu >= 1.0 - 1e-5;
  detail << "min p_u " << std::setprecision(8) << min_pu << "; ";

  ExperimentSpec spec;
  spec.source.synthetic = {3, 150, 0.1};
  spec.alphas = {0.2};
  spec.repeats = 3;
  spec.attack_max_iters = 10;
  spec.defense = DefenseKind::kTrim;
  const auto records = run_sweep(spec);
  long max_iters = 0;
  for (const auto& r : records) {
    ok = ok && !r.error && r.defense_iterations >= 1 && r.defense_iterations <= r.defense_max_iters;
    max_iters = std::max(max_iters, r.defense_iterations);
  }
  const auto report = complexity_report(records);
  const bool stated = report.find("C(N, n)") != std::string::npos;
  ok = ok && stated;
  detail << "trim iterations <= " << max_iters << " of cap " << spec.trim_max_iters
         << (stated ? ", worst case stated" : ", worst case missing");
  return verdict(ok, detail.str());
}

// 8.
Outcome determinism() {
  ExperimentSpec spec;
  spec.source.synthetic = {3, 120, 0.1};
  spec.families = {Family::kOls, Family::kLasso};
  spec.alphas = {0.08, 0.2};
  spec.repeats = 2;
  spec.attack_max_iters = 10;
  spec.defense = DefenseKind::kProda;
  auto bytes = [](const ExperimentSpec& s) {
    std::ostringstream out;
    write_summary_csv(out, aggregate(run_sweep(s)));
    return out.str();
  };
  const auto first = bytes(spec);
  const auto second = bytes(spec);
  spec.jobs = 4;
  const auto threaded = bytes(spec);
  return verdict(first == second && first == threaded,
                 std::to_string(first.size()) + " bytes, repeat " + (first == second ? "identical" : "differs") +
                     ", 4 jobs " + (first == threaded ? "identical" : "differs"));
}

struct RealDataset {
  const char* name;
  const char* env;
  Index features;
};

std::string env_or(const char* key, std::string fallback) {
  const char* v = std::getenv(key);
  return v && *v ? std::string(v) : fallback;
}

// 9. Needs POISONBENCH_DATA_DIR with house.csv, loans.csv, pharm.csv and
// bike.csv. The target defaults to the last column; override with
// POISONBENCH_<NAME>_TARGET. POISONBENCH_<NAME>_CATEGORICAL lists columns
// to one-hot encode.
Outcome real_datasets() {
  const char* dir = std::getenv("POISONBENCH_DATA_DIR");
  if (!dir || !*dir) return {Status::kSkip, "POISONBENCH_DATA_DIR not set"};
  const std::vector<RealDataset> sets{{"house", "HOUSE", 5}, {"loans", "LOANS", 4}, {"pharm", "PHARM", 3},
                                      {"bike", "BIKE", 8}};
  bool ok = true;
  std::ostringstream detail;
  for (const auto& set : sets) {
    const std::filesystem::path path = std::filesystem::path(dir) / (std::string(set.name) + ".csv");
    if (!std::filesystem::exists(path)) return {Status::kSkip, path.string() + " missing"};
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    const auto columns = std::count(header.begin(), header.end(), ',') + 1;

    ExperimentSpec spec;
    spec.source.name = set.name;
    spec.source.csv_path = path;
    spec.source.csv.target_column =
        env_or(("POISONBENCH_" + std::string(set.env) + "_TARGET").c_str(), std::to_string(columns - 1));
    std::stringstream cats(env_or(("POISONBENCH_" + std::string(set.env) + "_CATEGORICAL").c_str(), ""));
    for (std::string c; std::getline(cats, c, ',');) {
      if (!c.empty()) spec.source.csv.categorical.push_back(c);
    }
    spec.families = kFamilies;
    spec.alphas = {0.2};
    spec.max_features = set.features;
    spec.train_subsample = 300;
    spec.jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));

    std::string error;
    spec.attack = AttackKind::kOpt;
    const auto opt = aggregate(sweep_or_errors(spec, error));
    spec.attack = AttackKind::kNopt;
    spec.defense = DefenseKind::kProda;
    const auto nopt = aggregate(sweep_or_errors(spec, error));
    if (!error.empty()) return fail(std::string(set.name) + ": " + error);
    for (std::size_t i = 0; i < nopt.size(); ++i) {
      const double n = nopt[i].mse_poisoned->mean, o = opt[i].mse_poisoned->mean;
      const double defended = nopt[i].mse_defended->mean, clean = nopt[i].mse_clean->mean;
      ok = ok && n >= o && defended < clean;
      detail << set.name << "/" << to_string(nopt[i].family) << " nopt " << fmt(n) << " opt " << fmt(o)
             << " proda " << fmt(defended) << " clean " << fmt(clean) << "; ";
    }
  }
  return verdict(ok, detail.str());
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "gradient matches central differences", 60, gradient_check},
      {2, "duplication identity", 1, duplication_identity},
      {3, "beta exactness", 1, beta_exactness},
      {4, "attack efficacy direction", 600, attack_direction},
      {5, "defense efficacy", 600, defense_efficacy},
      {6, "exhaustive subset oracle", 30, subset_oracle},
      {7, "complexity accounting", 600, complexity_accounting},
      {8, "determinism", 600, determinism},
      {9, "real datasets", 3600, real_datasets},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto started = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = fail(std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    if (o.status == Status::kPass && secs > c.budget_s) {
      o = fail(o.detail + " over budget " + fmt(c.budget_s) + " s");
    }
    if (o.status == Status::kFail) ++failures;
    const char* tag = o.status == Status::kPass ? "PASS" : o.status == Status::kFail ? "FAIL" : "SKIP";
    std::printf("%s %d %s (%.2f s): %s\n", tag, c.id, c.name, secs, o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
