#include "poisonbench/harness.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <charconv>
#include <cmath>
#include <condition_variable>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>
#include <tuple>

namespace poisonbench {

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t mix_double(std::uint64_t seed, double v) { return mix_seed(seed, std::bit_cast<std::uint64_t>(v)); }

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) throw DataError("bad number '" + s + "' in summary");
  return v;
}

Stat make_stat(std::vector<double> values) {
  Stat s;
  std::sort(values.begin(), values.end());
  s.count = static_cast<int>(values.size());
  s.min = values.front();
  s.max = values.back();
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  const std::size_t mid = values.size() / 2;
  s.median = values.size() % 2 == 1 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
  return s;
}

std::optional<Stat> stat_of(const std::vector<double>& values) {
  if (values.empty()) return std::nullopt;
  return make_stat(values);
}

template <typename T>
void put_optional(nlohmann::json& j, const char* key, const std::optional<T>& v) {
  if (v) j[key] = *v;
}

template <typename T>
std::optional<T> get_optional(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

double seconds_for(double fitted_rows, double rate) { return fitted_rows / rate; }

}  // namespace

const char* to_string(AttackKind k) {
  switch (k) {
    case AttackKind::kNone: return "none";
    case AttackKind::kOpt: return "opt";
    case AttackKind::kNopt: return "nopt";
  }
  return "unknown";
}

const char* to_string(DefenseKind k) {
  switch (k) {
    case DefenseKind::kNone: return "none";
    case DefenseKind::kTrim: return "trim";
    case DefenseKind::kProda: return "proda";
  }
  return "unknown";
}

AttackKind parse_attack_kind(std::string_view s) {
  if (s == "none") return AttackKind::kNone;
  if (s == "opt") return AttackKind::kOpt;
  if (s == "nopt") return AttackKind::kNopt;
  throw std::invalid_argument("unknown attack '" + std::string(s) + "'");
}

DefenseKind parse_defense_kind(std::string_view s) {
  if (s == "none") return DefenseKind::kNone;
  if (s == "trim") return DefenseKind::kTrim;
  if (s == "proda") return DefenseKind::kProda;
  throw std::invalid_argument("unknown defense '" + std::string(s) + "'");
}

void ExperimentSpec::validate() const {
  if (families.empty()) throw std::invalid_argument("model family list is empty");
  if (alphas.empty()) throw std::invalid_argument("alpha grid is empty");
  if (gammas.empty()) throw std::invalid_argument("gamma grid is empty");
  if (alphas_assumed.empty()) throw std::invalid_argument("alpha_assumed grid is empty");
  if (repeats < 1) throw std::invalid_argument("repeats must be >= 1");
  if (!lambda && lambda_grid.empty()) throw std::invalid_argument("lambda grid is empty");
  if (lambda && !(*lambda >= 0.0)) throw std::invalid_argument("lambda must be >= 0");
  if (!(rho >= 0.0 && rho <= 1.0)) throw std::invalid_argument("rho must lie in [0,1]");
  for (double a : alphas) {
    if (attack != AttackKind::kNone && !(a > 0.0 && a <= 0.2 + 1e-12)) {
      throw std::invalid_argument("alpha values must lie in (0, 0.2]");
    }
  }
  for (double a : alphas_assumed) {
    if (!(a >= 0.0 && a < 1.0)) throw std::invalid_argument("alpha_assumed must lie in [0,1)");
  }
  for (long g : gammas) {
    if (g < 0) throw std::invalid_argument("gamma must be >= 0 (0 selects d+1)");
  }
  if (!(surrogate_fraction >= 0.0 && surrogate_fraction <= 1.0)) {
    throw std::invalid_argument("surrogate_fraction must lie in [0,1]");
  }
  if (!(attack_epsilon > 0.0) || attack_max_iters < 1) throw std::invalid_argument("invalid attack settings");
  if (!(defense_epsilon > 0.0 && defense_epsilon < 1.0)) throw std::invalid_argument("epsilon must lie in (0,1)");
  if (trim_max_iters < 1 || trim_restarts < 1) throw std::invalid_argument("trim iterations and restarts must be >= 1");
  if (!(rate_iters_per_s > 0.0)) throw std::invalid_argument("iteration rate must be positive");
  if (jobs < 1) throw std::invalid_argument("jobs must be >= 1");
  if (!source.csv_path && (source.synthetic.dims < 1 || source.synthetic.samples < 3 * (source.synthetic.dims + 1) ||
                           !(source.synthetic.noise_std >= 0.0))) {
    throw std::invalid_argument("synthetic source needs d >= 1, n >= 3(d+1), noise >= 0");
  }
}

void to_json(nlohmann::json& j, const ExperimentSpec& spec) {
  std::vector<std::string> families;
  for (auto f : spec.families) families.emplace_back(to_string(f));
  j = {{"dataset", spec.source.name},
       {"families", families},
       {"attack", to_string(spec.attack)},
       {"defense", to_string(spec.defense)},
       {"alphas", spec.alphas},
       {"gammas", spec.gammas},
       {"alphas_assumed", spec.alphas_assumed},
       {"repeats", spec.repeats},
       {"master_seed", spec.master_seed},
       {"rho", spec.rho},
       {"max_features", spec.max_features},
       {"train_subsample", spec.train_subsample},
       {"surrogate_fraction", spec.surrogate_fraction},
       {"attack_epsilon", spec.attack_epsilon},
       {"attack_max_iters", spec.attack_max_iters},
       {"defense_epsilon", spec.defense_epsilon},
       {"trim_max_iters", spec.trim_max_iters},
       {"trim_restarts", spec.trim_restarts},
       {"rate_iters_per_s", spec.rate_iters_per_s}};
  if (spec.lambda) {
    j["lambda"] = *spec.lambda;
  } else {
    j["lambda_grid"] = spec.lambda_grid;
  }
  if (spec.source.csv_path) {
    j["csv"] = spec.source.csv_path->string();
    j["target"] = spec.source.csv.target_column;
  } else {
    j["synthetic"] = {{"d", spec.source.synthetic.dims},
                      {"n", spec.source.synthetic.samples},
                      {"noise", spec.source.synthetic.noise_std}};
  }
}

std::uint64_t cell_seed(std::uint64_t master_seed, const CellCoordinates& cell) {
  std::uint64_t h = mix_seed(master_seed, fnv1a(cell.dataset));
  h = mix_seed(h, static_cast<std::uint64_t>(cell.family));
  h = mix_seed(h, static_cast<std::uint64_t>(cell.attack));
  h = mix_seed(h, static_cast<std::uint64_t>(cell.defense));
  h = mix_double(h, cell.alpha);
  h = mix_double(h, cell.alpha_assumed);
  h = mix_seed(h, static_cast<std::uint64_t>(cell.gamma));
  return mix_seed(h, static_cast<std::uint64_t>(cell.repeat));
}

std::uint64_t data_seed(std::uint64_t master_seed, const std::string& dataset, int repeat) {
  return mix_seed(mix_seed(master_seed, fnv1a(dataset)), 0xDA7A0000ULL + static_cast<std::uint64_t>(repeat));
}

void to_json(nlohmann::json& j, const ExperimentRecord& r) {
  j = {{"dataset", r.cell.dataset},
       {"family", to_string(r.cell.family)},
       {"attack", to_string(r.cell.attack)},
       {"defense", to_string(r.cell.defense)},
       {"alpha", r.cell.alpha},
       {"alpha_assumed", r.cell.alpha_assumed},
       {"gamma", r.cell.gamma},
       {"repeat", r.cell.repeat},
       {"seed", r.seed},
       {"lambda", r.lambda},
       {"train_rows", r.train_rows},
       {"poison_rows", r.poison_rows},
       {"gamma_used", r.gamma_used},
       {"wall_time_attack_s", r.wall_time_attack_s},
       {"wall_time_defense_s", r.wall_time_defense_s},
       {"time_attack_s", r.time_attack_s},
       {"time_defense_s", r.time_defense_s},
       {"attack_iterations", r.attack_iterations},
       {"attack_refits", r.attack_refits},
       {"attack_converged", r.attack_converged},
       {"defense_iterations", r.defense_iterations},
       {"beta_used", r.beta_used},
       {"defense_converged", r.defense_converged},
       {"defense_max_iters", r.defense_max_iters},
       {"trim_worst_case_log10", r.trim_worst_case_log10}};
  put_optional(j, "mse_clean", r.mse_clean);
  put_optional(j, "mse_poisoned", r.mse_poisoned);
  put_optional(j, "mse_poisoned_clean_fold", r.mse_poisoned_clean_fold);
  put_optional(j, "mse_defended", r.mse_defended);
  put_optional(j, "mse_defended_subset", r.mse_defended_subset);
  put_optional(j, "mse_clean_test", r.mse_clean_test);
  put_optional(j, "mse_poisoned_test", r.mse_poisoned_test);
  put_optional(j, "mse_defended_test", r.mse_defended_test);
  put_optional(j, "error", r.error);
}

void from_json(const nlohmann::json& j, ExperimentRecord& r) {
  r = {};
  r.cell.dataset = j.at("dataset").get<std::string>();
  r.cell.family = parse_family(j.at("family").get<std::string>());
  r.cell.attack = parse_attack_kind(j.at("attack").get<std::string>());
  r.cell.defense = parse_defense_kind(j.at("defense").get<std::string>());
  r.cell.alpha = j.at("alpha").get<double>();
  r.cell.alpha_assumed = j.at("alpha_assumed").get<double>();
  r.cell.gamma = j.at("gamma").get<long>();
  r.cell.repeat = j.at("repeat").get<int>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.lambda = j.value("lambda", 0.0);
  r.train_rows = j.value("train_rows", Index{0});
  r.poison_rows = j.value("poison_rows", Index{0});
  r.gamma_used = j.value("gamma_used", 0L);
  r.wall_time_attack_s = j.value("wall_time_attack_s", 0.0);
  r.wall_time_defense_s = j.value("wall_time_defense_s", 0.0);
  r.time_attack_s = j.value("time_attack_s", 0.0);
  r.time_defense_s = j.value("time_defense_s", 0.0);
  r.attack_iterations = j.value("attack_iterations", 0);
  r.attack_refits = j.value("attack_refits", 0L);
  r.attack_converged = j.value("attack_converged", true);
  r.defense_iterations = j.value("defense_iterations", 0L);
  r.beta_used = j.value("beta_used", 0L);
  r.defense_converged = j.value("defense_converged", true);
  r.defense_max_iters = j.value("defense_max_iters", 0);
  r.trim_worst_case_log10 = j.value("trim_worst_case_log10", 0.0);
  r.mse_clean = get_optional<double>(j, "mse_clean");
  r.mse_poisoned = get_optional<double>(j, "mse_poisoned");
  r.mse_poisoned_clean_fold = get_optional<double>(j, "mse_poisoned_clean_fold");
  r.mse_defended = get_optional<double>(j, "mse_defended");
  r.mse_defended_subset = get_optional<double>(j, "mse_defended_subset");
  r.mse_clean_test = get_optional<double>(j, "mse_clean_test");
  r.mse_poisoned_test = get_optional<double>(j, "mse_poisoned_test");
  r.mse_defended_test = get_optional<double>(j, "mse_defended_test");
  r.error = get_optional<std::string>(j, "error");
}

Experiment::Experiment(ExperimentSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  if (spec_.source.csv_path) csv_data_ = load_csv(*spec_.source.csv_path, spec_.source.csv).dataset;
}

std::vector<CellCoordinates> Experiment::cells() const {
  std::vector<CellCoordinates> out;
  const std::vector<long> no_gamma{0};
  const auto& gammas = spec_.defense == DefenseKind::kProda ? spec_.gammas : no_gamma;
  const std::vector<double> no_assumed{0.0};
  const auto& assumed = spec_.defense == DefenseKind::kNone ? no_assumed : spec_.alphas_assumed;
  const std::vector<double> no_alpha{0.0};
  const auto& alphas = spec_.attack == AttackKind::kNone ? no_alpha : spec_.alphas;
  for (auto family : spec_.families) {
    for (double alpha : alphas) {
      for (double a_assumed : assumed) {
        for (long gamma : gammas) {
          for (int rep = 0; rep < spec_.repeats; ++rep) {
            out.push_back({spec_.source.name, family, spec_.attack, spec_.defense, alpha, a_assumed, gamma, rep});
          }
        }
      }
    }
  }
  return out;
}

Dataset Experiment::materialize(int repeat) const {
  Dataset base;
  if (csv_data_) {
    base = *csv_data_;
  } else {
    const auto& s = spec_.source.synthetic;
    const auto seed = data_seed(spec_.master_seed, spec_.source.name, repeat);
    base = generate_synthetic(SyntheticSpec::with_random_weights(s.dims, s.samples, s.noise_std, seed)).dataset;
  }
  if (spec_.max_features > 0) base = truncate_features(base, spec_.max_features);
  return base;
}

ExperimentRecord Experiment::run_cell(const CellCoordinates& cell) const {
  ExperimentRecord rec;
  rec.cell = cell;
  rec.seed = cell_seed(spec_.master_seed, cell);
  try {
    const Dataset base = materialize(cell.repeat);
    const auto split = split_three(base, data_seed(spec_.master_seed, cell.dataset, cell.repeat));
    Dataset train = split.train;
    if (spec_.train_subsample > 0 && spec_.train_subsample < train.rows()) {
      std::vector<Index> head(static_cast<std::size_t>(spec_.train_subsample));
      std::iota(head.begin(), head.end(), Index{0});
      train = select_rows(train, head);
    }
    rec.train_rows = train.rows();

    rec.lambda = spec_.lambda ? (cell.family == Family::kOls ? 0.0 : *spec_.lambda)
                              : select_lambda(train, split.validation, cell.family, spec_.lambda_grid, spec_.rho);
    const auto clean = fit(train, cell.family, rec.lambda, {}, spec_.rho);
    rec.mse_clean = clean.train_mse;
    rec.mse_clean_test = mse(split.test, clean.model);

    Dataset defended_input = train;
    if (cell.attack != AttackKind::kNone) {
      AttackConfig cfg;
      cfg.alpha = cell.alpha;
      cfg.poison_rows = poison_count(cell.alpha, train.rows());
      cfg.epsilon = spec_.attack_epsilon;
      cfg.max_outer_iters = spec_.attack_max_iters;
      cfg.seed = rec.seed;
      cfg.rho = spec_.rho;

      Dataset view = train;
      if (spec_.surrogate_fraction > 0.0) {
        std::mt19937_64 rng(mix_seed(rec.seed, 0x5CA7));
        std::uniform_int_distribution<Index> pick(0, train.rows() - 1);
        const auto size = std::max<Index>(
            train.dims() + 2, static_cast<Index>(std::llround(spec_.surrogate_fraction * train.rows())));
        std::vector<Index> rows(static_cast<std::size_t>(size));
        for (auto& r : rows) r = pick(rng);
        view = select_rows(train, rows);
      }

      const auto state = cell.attack == AttackKind::kNopt ? nopt_attack(view, cfg, cell.family, rec.lambda)
                                                          : opt_attack(view, cfg, cell.family, rec.lambda);
      rec.poison_rows = state.poison.rows();
      rec.attack_iterations = state.outer_iterations;
      rec.attack_refits = state.refits;
      rec.attack_converged = state.converged;
      rec.wall_time_attack_s = state.wall_time_s;
      rec.time_attack_s = seconds_for(static_cast<double>(state.refits) * static_cast<double>(view.rows() + rec.poison_rows),
                                      spec_.rate_iters_per_s);

      defended_input = merge(train, state.poison).dataset;
      const auto poisoned = fit(defended_input, cell.family, rec.lambda, {}, spec_.rho);
      rec.mse_poisoned = poisoned.train_mse;
      rec.mse_poisoned_clean_fold = mse(train, poisoned.model);
      rec.mse_poisoned_test = mse(split.test, poisoned.model);
    }

    if (cell.defense != DefenseKind::kNone) {
      DefenseResult result;
      const double retained = static_cast<double>(retained_count(cell.alpha_assumed, defended_input.rows()));
      if (cell.defense == DefenseKind::kProda) {
        ProdaConfig cfg;
        cfg.gamma = cell.gamma;
        cfg.epsilon = spec_.defense_epsilon;
        cfg.alpha_assumed = cell.alpha_assumed;
        cfg.seed = rec.seed;
        cfg.rho = spec_.rho;
        result = proda_defend(defended_input, cfg, cell.family, rec.lambda);
        rec.beta_used = result.beta_used;
        rec.gamma_used = cell.gamma == 0 ? static_cast<long>(train.dims() + 1) : cell.gamma;
      } else {
        TrimConfig cfg;
        cfg.alpha_assumed = cell.alpha_assumed;
        cfg.max_iters = spec_.trim_max_iters;
        cfg.restarts = spec_.trim_restarts;
        cfg.seed = rec.seed;
        cfg.rho = spec_.rho;
        result = trim_defend(defended_input, cfg, cell.family, rec.lambda);
        rec.defense_converged = result.converged;
        rec.defense_max_iters = cfg.max_iters;
        rec.trim_worst_case_log10 = result.worst_case_log10_iterations;
      }
      rec.defense_iterations = result.iterations;
      rec.wall_time_defense_s = result.wall_time_s;
      rec.time_defense_s = seconds_for(static_cast<double>(result.iterations) * retained, spec_.rate_iters_per_s);
      rec.mse_defended = mse(train, result.model);
      rec.mse_defended_subset = result.subset_mse;
      rec.mse_defended_test = mse(split.test, result.model);
    }
  } catch (const std::exception& e) {
    rec.error = e.what();
  }
  return rec;
}

void Experiment::run_sweep(const RecordSink& sink) const {
  const auto grid = cells();
  if (spec_.jobs <= 1 || grid.size() <= 1) {
    for (const auto& cell : grid) sink(run_cell(cell));
    return;
  }

  std::vector<std::optional<ExperimentRecord>> done(grid.size());
  std::mutex mu;
  std::condition_variable ready;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < grid.size(); i = next++) {
      auto rec = run_cell(grid[i]);
      {
        std::lock_guard lock(mu);
        done[i] = std::move(rec);
      }
      ready.notify_all();
    }
  };
  std::vector<std::jthread> pool;
  const auto threads = std::min<std::size_t>(static_cast<std::size_t>(spec_.jobs), grid.size());
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);

  // Single append point, in grid order.
  for (std::size_t i = 0; i < grid.size(); ++i) {
    std::unique_lock lock(mu);
    ready.wait(lock, [&] { return done[i].has_value(); });
    ExperimentRecord rec = std::move(*done[i]);
    done[i].reset();
    lock.unlock();
    sink(rec);
  }
}

ExperimentRecord run_cell(const ExperimentSpec& spec, const CellCoordinates& cell) {
  return Experiment(spec).run_cell(cell);
}

std::vector<ExperimentRecord> run_sweep(const ExperimentSpec& spec) {
  std::vector<ExperimentRecord> out;
  Experiment(spec).run_sweep([&](const ExperimentRecord& r) { out.push_back(r); });
  return out;
}

Summary aggregate(const std::vector<ExperimentRecord>& records) {
  if (records.empty()) throw std::invalid_argument("cannot aggregate an empty record set");
  using Key = std::tuple<std::string, int, int, int, double, double, long>;
  struct Bucket {
    SummaryRow row;
    std::vector<double> clean, poisoned, defended, t_attack, t_defense, poisoned_clean_fold;
  };
  std::map<Key, Bucket> buckets;
  for (const auto& r : records) {
    const auto& c = r.cell;
    const Key key{c.dataset, static_cast<int>(c.family), static_cast<int>(c.attack), static_cast<int>(c.defense),
                  c.alpha, c.alpha_assumed, c.gamma};
    auto& b = buckets[key];
    b.row.dataset = c.dataset;
    b.row.family = c.family;
    b.row.attack = c.attack;
    b.row.defense = c.defense;
    b.row.alpha = c.alpha;
    b.row.alpha_assumed = c.alpha_assumed;
    b.row.gamma = c.gamma;
    ++b.row.records;
    if (r.error) {
      ++b.row.errors;
      continue;
    }
    if (r.mse_clean) b.clean.push_back(*r.mse_clean);
    if (r.mse_poisoned) b.poisoned.push_back(*r.mse_poisoned);
    if (r.mse_poisoned_clean_fold) b.poisoned_clean_fold.push_back(*r.mse_poisoned_clean_fold);
    if (r.mse_defended) b.defended.push_back(*r.mse_defended);
    if (c.attack != AttackKind::kNone) b.t_attack.push_back(r.time_attack_s);
    if (c.defense != DefenseKind::kNone) b.t_defense.push_back(r.time_defense_s);
  }
  Summary out;
  for (auto& [key, b] : buckets) {
    b.row.mse_clean = stat_of(b.clean);
    b.row.mse_poisoned = stat_of(b.poisoned);
    b.row.mse_defended = stat_of(b.defended);
    b.row.time_attack_s = stat_of(b.t_attack);
    b.row.time_defense_s = stat_of(b.t_defense);
    b.row.mse_poisoned_clean_fold = stat_of(b.poisoned_clean_fold);
    out.push_back(std::move(b.row));
  }
  return out;
}

namespace {

constexpr const char* kSummaryColumns[] = {
    "dataset",          "family",           "attack",           "defense",
    "alpha",            "alpha_assumed",    "gamma",            "mse_clean",
    "mse_poisoned",     "mse_defended",     "time_attack_s",    "time_defense_s",
    "records",          "errors",           "mse_clean_median", "mse_poisoned_median",
    "mse_poisoned_min", "mse_poisoned_max", "mse_defended_median", "mse_defended_min",
    "mse_defended_max", "mse_poisoned_clean_fold"};

std::string stat_field(const std::optional<Stat>& s, double Stat::*member) {
  return s ? format_double((*s).*member) : std::string{};
}

std::optional<Stat> read_stat(const std::string& mean, const std::string& median, const std::string& lo,
                              const std::string& hi) {
  if (mean.empty()) return std::nullopt;
  Stat s;
  s.mean = parse_double(mean);
  s.median = median.empty() ? s.mean : parse_double(median);
  s.min = lo.empty() ? s.mean : parse_double(lo);
  s.max = hi.empty() ? s.mean : parse_double(hi);
  return s;
}

}  // namespace

void write_summary_csv(std::ostream& out, const Summary& summary) {
  bool first = true;
  for (const char* c : kSummaryColumns) {
    out << (first ? "" : ",") << c;
    first = false;
  }
  out << '\n';
  for (const auto& r : summary) {
    const std::vector<std::string> fields = {
        r.dataset,
        to_string(r.family),
        to_string(r.attack),
        to_string(r.defense),
        format_double(r.alpha),
        format_double(r.alpha_assumed),
        std::to_string(r.gamma),
        stat_field(r.mse_clean, &Stat::mean),
        stat_field(r.mse_poisoned, &Stat::mean),
        stat_field(r.mse_defended, &Stat::mean),
        stat_field(r.time_attack_s, &Stat::mean),
        stat_field(r.time_defense_s, &Stat::mean),
        std::to_string(r.records),
        std::to_string(r.errors),
        stat_field(r.mse_clean, &Stat::median),
        stat_field(r.mse_poisoned, &Stat::median),
        stat_field(r.mse_poisoned, &Stat::min),
        stat_field(r.mse_poisoned, &Stat::max),
        stat_field(r.mse_defended, &Stat::median),
        stat_field(r.mse_defended, &Stat::min),
        stat_field(r.mse_defended, &Stat::max),
        stat_field(r.mse_poisoned_clean_fold, &Stat::mean),
    };
    for (std::size_t i = 0; i < fields.size(); ++i) out << (i ? "," : "") << fields[i];
    out << '\n';
  }
}

void write_summary_csv(const std::filesystem::path& path, const Summary& summary) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  write_summary_csv(out, summary);
}

Summary read_summary_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::string line;
  std::getline(in, line);
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  auto col = [&](const std::vector<std::string>& f, std::string_view name) -> std::string {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) return {};
    const auto idx = static_cast<std::size_t>(it - header.begin());
    return idx < f.size() ? f[idx] : std::string{};
  };
  Summary out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::size_t pos = 0;
    while (true) {
      const auto comma = line.find(',', pos);
      f.push_back(line.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos));
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    SummaryRow r;
    r.dataset = col(f, "dataset");
    r.family = parse_family(col(f, "family"));
    r.attack = parse_attack_kind(col(f, "attack"));
    r.defense = parse_defense_kind(col(f, "defense"));
    r.alpha = parse_double(col(f, "alpha"));
    r.alpha_assumed = parse_double(col(f, "alpha_assumed"));
    r.gamma = std::stol(col(f, "gamma"));
    const auto records = col(f, "records");
    r.records = records.empty() ? 0 : std::stoi(records);
    const auto errors = col(f, "errors");
    r.errors = errors.empty() ? 0 : std::stoi(errors);
    r.mse_clean = read_stat(col(f, "mse_clean"), col(f, "mse_clean_median"), "", "");
    r.mse_poisoned = read_stat(col(f, "mse_poisoned"), col(f, "mse_poisoned_median"), col(f, "mse_poisoned_min"),
                               col(f, "mse_poisoned_max"));
    r.mse_defended = read_stat(col(f, "mse_defended"), col(f, "mse_defended_median"), col(f, "mse_defended_min"),
                               col(f, "mse_defended_max"));
    r.time_attack_s = read_stat(col(f, "time_attack_s"), "", "", "");
    r.time_defense_s = read_stat(col(f, "time_defense_s"), "", "", "");
    r.mse_poisoned_clean_fold = read_stat(col(f, "mse_poisoned_clean_fold"), "", "", "");
    out.push_back(std::move(r));
  }
  return out;
}

RecordWriter::RecordWriter(std::ostream& out, const ExperimentSpec& spec) : out_(out) {
  nlohmann::json header = {{"schema", "poisonbench.records"}, {"version", kRecordSchemaVersion}, {"spec", spec}};
  out_ << header.dump() << '\n';
}

void RecordWriter::write(const ExperimentRecord& r) {
  out_ << nlohmann::json(r).dump() << '\n';
  out_.flush();
}

std::vector<ExperimentRecord> read_records_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::vector<ExperimentRecord> out;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    if (first) {
      first = false;
      if (j.contains("schema")) {
        if (j.at("version").get<int>() > kRecordSchemaVersion) {
          throw DataError("records schema version " + std::to_string(j.at("version").get<int>()) + " is newer than " +
                          std::to_string(kRecordSchemaVersion));
        }
        continue;
      }
    }
    out.push_back(j.get<ExperimentRecord>());
  }
  return out;
}

std::string complexity_report(const std::vector<ExperimentRecord>& records) {
  std::ostringstream out;
  long proda_cells = 0, proda_groups = 0, trim_cells = 0, trim_unconverged = 0;
  long trim_max_seen = 0;
  double trim_bound_log10 = 0.0;
  int trim_cap = 0;
  for (const auto& r : records) {
    if (r.error) continue;
    if (r.cell.defense == DefenseKind::kProda) {
      ++proda_cells;
      proda_groups += r.defense_iterations;
      if (r.defense_iterations != r.beta_used) {
        out << "proda: cell repeat " << r.cell.repeat << " ran " << r.defense_iterations << " groups, expected beta="
            << r.beta_used << "\n";
      }
    } else if (r.cell.defense == DefenseKind::kTrim) {
      ++trim_cells;
      trim_max_seen = std::max(trim_max_seen, r.defense_iterations);
      trim_bound_log10 = std::max(trim_bound_log10, r.trim_worst_case_log10);
      trim_cap = std::max(trim_cap, r.defense_max_iters);
      if (!r.defense_converged) ++trim_unconverged;
    }
  }
  if (proda_cells > 0) {
    out << "proda: " << proda_cells << " runs, " << proda_groups
        << " group trials in total (each run executes exactly beta = ceil(log eps / log(1-(1-alpha)^gamma)) groups)\n";
  }
  if (trim_cells > 0) {
    char bound[64];
    std::snprintf(bound, sizeof bound, "%.1f", trim_bound_log10);
    out << "trim: " << trim_cells << " runs, at most " << trim_max_seen << " iterations (cap " << trim_cap << "), "
        << trim_unconverged << " hit the cap\n";
    out << "trim: worst case may iterate over every size-n subset, C(N, n) ~ 10^" << bound << " iterations\n";
  }
  return out.str();
}

}  // namespace poisonbench
