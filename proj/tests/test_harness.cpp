#include <doctest.h>

#include <map>
#include <sstream>

#include "poisonbench/harness.hpp"
#include "support.hpp"

using namespace poisonbench;

namespace {

ExperimentSpec small_spec() {
  ExperimentSpec spec;
  spec.source.synthetic = {3, 90, 0.1};
  spec.families = {Family::kOls};
  spec.alphas = {0.08, 0.2};
  spec.repeats = 2;
  spec.attack_max_iters = 5;
  return spec;
}

std::string summary_bytes(const std::vector<ExperimentRecord>& records) {
  std::ostringstream out;
  write_summary_csv(out, aggregate(records));
  return out.str();
}

ExperimentRecord fake(double alpha, int repeat, double poisoned) {
  ExperimentRecord r;
  r.cell = {"synthetic", Family::kOls, AttackKind::kNopt, DefenseKind::kNone, alpha, 0.0, 0, repeat};
  r.mse_clean = 0.01;
  r.mse_poisoned = poisoned;
  return r;
}

}  // namespace

TEST_CASE("pass-through cell matches a direct fit") {
  auto spec = small_spec();
  spec.attack = AttackKind::kNone;
  spec.lambda = 0.0;
  const Experiment exp(spec);
  const auto cells = exp.cells();
  REQUIRE(cells.size() == 2);
  const auto rec = exp.run_cell(cells[1]);
  CHECK_FALSE(rec.error);
  CHECK_FALSE(rec.mse_poisoned);
  CHECK_FALSE(rec.mse_defended);
  REQUIRE(rec.mse_clean);

  const auto data =
      generate_synthetic(SyntheticSpec::with_random_weights(3, 90, 0.1, data_seed(spec.master_seed, "synthetic", 1)))
          .dataset;
  const auto split = split_three(data, data_seed(spec.master_seed, "synthetic", 1));
  CHECK(*rec.mse_clean == fit(split.train, Family::kOls, 0.0).train_mse);
  CHECK(rec.train_rows == 30);
}

TEST_CASE("attacked and defended cell carries every metric") {
  auto spec = small_spec();
  spec.defense = DefenseKind::kProda;
  spec.attack_max_iters = 100;
  const Experiment exp(spec);
  const auto cells = exp.cells();
  const auto& cell = cells.back();
  CHECK(cell.alpha == 0.2);
  const auto rec = exp.run_cell(cell);
  REQUIRE_FALSE(rec.error);
  REQUIRE(rec.mse_clean);
  REQUIRE(rec.mse_poisoned);
  REQUIRE(rec.mse_defended);
  CHECK(*rec.mse_defended <= *rec.mse_poisoned);
  CHECK(*rec.mse_poisoned > *rec.mse_clean);
  CHECK(rec.poison_rows == poison_count(0.2, 30));
  CHECK(rec.beta_used == compute_beta(0.2, 4, 1e-5));
  CHECK(rec.defense_iterations == rec.beta_used);
  CHECK(rec.gamma_used == 4);
  CHECK(rec.time_attack_s > 0.0);
  CHECK(rec.time_defense_s > 0.0);

  const auto again = exp.run_cell(cell);
  nlohmann::json a = rec, b = again;
  a.erase("wall_time_attack_s");
  a.erase("wall_time_defense_s");
  b.erase("wall_time_attack_s");
  b.erase("wall_time_defense_s");
  CHECK(a == b);
}

TEST_CASE("sweep covers every cell exactly repeats times") {
  ExperimentSpec spec;
  spec.source.synthetic = {2, 90, 0.1};
  spec.attack_max_iters = 2;
  const auto records = run_sweep(spec);
  CHECK(records.size() == 25);
  std::map<double, int> per_alpha;
  for (const auto& r : records) {
    CHECK_FALSE(r.error);
    ++per_alpha[r.cell.alpha];
  }
  CHECK(per_alpha.size() == 5);
  for (const auto& [alpha, count] : per_alpha) CHECK(count == 5);
  CHECK(aggregate(records).size() == 5);
}

TEST_CASE("grid cells") {
  auto spec = small_spec();
  spec.defense = DefenseKind::kProda;
  spec.gammas = {0, 6, 8};
  spec.alphas_assumed = {0.1, 0.2};
  spec.families = {Family::kOls, Family::kRidge};
  CHECK(Experiment(spec).cells().size() == 2u * 2 * 2 * 3 * 2);
  spec.defense = DefenseKind::kTrim;
  CHECK(Experiment(spec).cells().size() == 2u * 2 * 2 * 1 * 2);
  spec.defense = DefenseKind::kNone;
  spec.attack = AttackKind::kNone;
  CHECK(Experiment(spec).cells().size() == 2u * 1 * 1 * 1 * 2);
}

TEST_CASE("seeds depend on every coordinate") {
  CellCoordinates base{"synthetic", Family::kOls, AttackKind::kNopt, DefenseKind::kProda, 0.2, 0.2, 6, 0};
  const auto s0 = cell_seed(1, base);
  auto vary = [&](auto mutate) {
    auto c = base;
    mutate(c);
    return cell_seed(1, c);
  };
  CHECK(vary([](CellCoordinates& c) { c.alpha = 0.16; }) != s0);
  CHECK(vary([](CellCoordinates& c) { c.repeat = 1; }) != s0);
  CHECK(vary([](CellCoordinates& c) { c.gamma = 7; }) != s0);
  CHECK(vary([](CellCoordinates& c) { c.family = Family::kRidge; }) != s0);
  CHECK(vary([](CellCoordinates& c) { c.attack = AttackKind::kOpt; }) != s0);
  CHECK(cell_seed(2, base) != s0);
  CHECK(cell_seed(1, base) == s0);
  CHECK(data_seed(1, "synthetic", 0) != data_seed(1, "synthetic", 1));
}

TEST_CASE("failed cells are recorded, not dropped") {
  auto spec = small_spec();
  spec.train_subsample = 3;
  const auto records = run_sweep(spec);
  CHECK(records.size() == 4);
  for (const auto& r : records) CHECK(r.error.has_value());
  const auto summary = aggregate(records);
  CHECK(summary.front().errors == 2);
  CHECK_FALSE(summary.front().mse_poisoned);
}

TEST_CASE("aggregate statistics") {
  const auto one = aggregate({fake(0.2, 0, 0.05)});
  REQUIRE(one.size() == 1);
  CHECK(one[0].mse_poisoned->mean == 0.05);

  const auto two = aggregate({fake(0.2, 0, 0.02), fake(0.2, 1, 0.04)});
  REQUIRE(two.size() == 1);
  CHECK(two[0].mse_poisoned->mean == doctest::Approx(0.03));
  CHECK(two[0].mse_poisoned->median == doctest::Approx(0.03));
  CHECK(two[0].mse_poisoned->min == 0.02);
  CHECK(two[0].mse_poisoned->max == 0.04);
  CHECK(two[0].records == 2);

  const auto three = aggregate({fake(0.2, 0, 0.5), fake(0.2, 1, 0.1), fake(0.2, 2, 0.2)});
  CHECK(three[0].mse_poisoned->median == 0.2);

  CHECK_THROWS(aggregate({}));
  // Ordering does not depend on input order.
  CHECK(summary_bytes({fake(0.2, 0, 0.1), fake(0.04, 0, 0.2)}) ==
        summary_bytes({fake(0.04, 0, 0.2), fake(0.2, 0, 0.1)}));
}

TEST_CASE("summary csv has the fixed leading columns and round-trips") {
  auto spec = small_spec();
  spec.defense = DefenseKind::kTrim;
  const auto records = run_sweep(spec);
  const auto text = summary_bytes(records);
  CHECK(text.rfind("dataset,family,attack,defense,alpha,alpha_assumed,gamma,mse_clean,mse_poisoned,mse_defended,"
                   "time_attack_s,time_defense_s,",
                   0) == 0);

  testing::TempDir dir("harness");
  const auto summary = aggregate(records);
  write_summary_csv(dir / "s.csv", summary);
  const auto back = read_summary_csv(dir / "s.csv");
  REQUIRE(back.size() == summary.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].alpha == summary[i].alpha);
    CHECK(back[i].mse_poisoned->mean == summary[i].mse_poisoned->mean);
    CHECK(back[i].mse_defended->max == summary[i].mse_defended->max);
    CHECK(back[i].time_defense_s->mean == summary[i].time_defense_s->mean);
  }
}

TEST_CASE("identical specs give byte-identical summaries, threads or not") {
  auto spec = small_spec();
  spec.defense = DefenseKind::kProda;
  const auto first = summary_bytes(run_sweep(spec));
  CHECK(summary_bytes(run_sweep(spec)) == first);
  spec.jobs = 4;
  const auto threaded = run_sweep(spec);
  CHECK(summary_bytes(threaded) == first);
  spec.jobs = 1;
  const auto serial = run_sweep(spec);
  REQUIRE(threaded.size() == serial.size());
  for (std::size_t i = 0; i < serial.size(); ++i) CHECK(cell_seed(1, threaded[i].cell) == cell_seed(1, serial[i].cell));
}

TEST_CASE("records jsonl round trip") {
  auto spec = small_spec();
  const auto records = run_sweep(spec);
  testing::TempDir dir("records");
  {
    std::ofstream out(dir / "r.jsonl");
    RecordWriter writer(out, spec);
    for (const auto& r : records) writer.write(r);
  }
  const auto header = nlohmann::json::parse(testing::read_text(dir / "r.jsonl").substr(0, testing::read_text(dir / "r.jsonl").find('\n')));
  CHECK(header["version"] == kRecordSchemaVersion);
  const auto back = read_records_jsonl(dir / "r.jsonl");
  REQUIRE(back.size() == records.size());
  for (std::size_t i = 0; i < back.size(); ++i) CHECK(nlohmann::json(back[i]) == nlohmann::json(records[i]));
  CHECK(summary_bytes(back) == summary_bytes(records));
}

TEST_CASE("complexity report states the trim bound") {
  auto spec = small_spec();
  spec.defense = DefenseKind::kTrim;
  const auto text = complexity_report(run_sweep(spec));
  CHECK(text.find("trim:") != std::string::npos);
  CHECK(text.find("C(N, n)") != std::string::npos);
  spec.defense = DefenseKind::kProda;
  CHECK(complexity_report(run_sweep(spec)).find("beta") != std::string::npos);
}

TEST_CASE("spec validation") {
  auto spec = small_spec();
  spec.repeats = 0;
  CHECK_THROWS(spec.validate());
  spec = small_spec();
  spec.alphas = {};
  CHECK_THROWS(spec.validate());
  spec = small_spec();
  spec.alphas = {0.3};
  CHECK_THROWS(spec.validate());
  spec = small_spec();
  spec.families = {};
  CHECK_THROWS(Experiment{spec});
}
