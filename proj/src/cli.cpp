#include "poisonbench/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "poisonbench/plot.hpp"

namespace poisonbench::cli {

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b == std::string::npos) throw UsageError("empty entry in list '" + text + "'");
    out.push_back(item.substr(b, e - b + 1));
  }
  if (out.empty()) throw UsageError("empty list");
  return out;
}

double to_number(const std::string& s, const std::string& what) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || !std::isfinite(v)) throw UsageError("bad number '" + s + "' in " + what);
  return v;
}

double round12(double v) { return std::round(v * 1e12) / 1e12; }

// For display only: residue below 1e-15 is rounding noise on [0,1] data.
double shown(double v) { return std::abs(v) < 1e-15 ? 0.0 : v; }

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  return out;
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) { open_out(path) << j.dump(2) << '\n'; }

struct Loaded {
  Dataset dataset;
  std::optional<NormalizationSpec> normalization;
};

Loaded load_data(const CliConfig& cfg) {
  if (cfg.data.csv) {
    CsvOptions opts;
    opts.target_column = cfg.data.target;
    opts.categorical = cfg.data.categorical;
    opts.normalize = !cfg.data.raw;
    auto loaded = load_csv(*cfg.data.csv, opts);
    return {std::move(loaded.dataset), std::move(loaded.normalization)};
  }
  const auto& s = *cfg.data.synthetic;
  const auto seed = cfg.data.synthetic_seed.value_or(cfg.seed);
  auto loaded = generate_synthetic(SyntheticSpec::with_random_weights(s.dims, s.samples, s.noise_std, seed));
  return {std::move(loaded.dataset), std::move(loaded.normalization)};
}

// Explicit --lambda wins; otherwise grid search on a seeded split.
double resolve_lambda(const CliConfig& cfg, const Dataset& ds, Family family) {
  if (family == Family::kOls) return 0.0;
  if (cfg.lambda) return *cfg.lambda;
  if (ds.rows() < 3 * (ds.dims() + 1)) return kDefaultLambdaGrid[0];
  const auto split = split_three(ds, mix_seed(cfg.seed, 0x1A4BDA));
  return select_lambda(split.train, split.validation, family, kDefaultLambdaGrid, cfg.rho);
}

void log(const CliConfig& cfg, std::ostream& err, const std::string& msg) {
  if (cfg.verbosity > 0) err << msg << '\n';
}

int run_fit(const CliConfig& cfg, std::ostream& out, std::ostream& err) {
  const auto data = load_data(cfg);
  const auto family = cfg.families.front();
  const double lambda = resolve_lambda(cfg, data.dataset, family);
  const auto report = fit(data.dataset, family, lambda, {}, cfg.rho);
  log(cfg, err, "fit: " + std::to_string(data.dataset.rows()) + " rows, lambda " + std::to_string(lambda));

  std::filesystem::create_directories(cfg.out);
  nlohmann::json j = {{"model", report.model},
                      {"train_mse", report.train_mse},
                      {"train_loss", report.train_loss},
                      {"iterations", report.iterations},
                      {"converged", report.converged},
                      {"min_norm_fallback", report.min_norm_fallback},
                      {"rows", data.dataset.rows()}};
  if (data.normalization) j["normalization"] = *data.normalization;
  write_json(cfg.out / "model.json", j);
  out << "mse " << shown(report.train_mse) << '\n';
  return 0;
}

int run_attack(const CliConfig& cfg, std::ostream& out, std::ostream& err) {
  const auto data = load_data(cfg);
  const auto family = cfg.families.front();
  const double lambda = resolve_lambda(cfg, data.dataset, family);

  AttackConfig ac;
  ac.alpha = cfg.alpha;
  ac.epsilon = cfg.epsilon_conv;
  ac.max_outer_iters = cfg.max_iters;
  ac.seed = cfg.seed;
  ac.reference = cfg.reference;
  ac.rho = cfg.rho;
  const auto method = cfg.attacks.front();
  const auto state = method == AttackKind::kOpt ? opt_attack(data.dataset, ac, family, lambda)
                                                : nopt_attack(data.dataset, ac, family, lambda);
  const auto merged = merge(data.dataset, state.poison).dataset;
  const auto clean = fit(data.dataset, family, lambda, {}, cfg.rho);
  const auto poisoned = fit(merged, family, lambda, {}, cfg.rho);
  log(cfg, err, "attack: " + std::to_string(state.outer_iterations) + " sweeps, " + std::to_string(state.refits) +
                    " refits");

  std::filesystem::create_directories(cfg.out);
  {
    auto trace = open_out(cfg.out / "trace.jsonl");
    write_trace_jsonl(trace, state);
  }
  write_csv(cfg.out / "poison.csv", state.poison);
  write_csv(cfg.out / "poisoned.csv", merged);
  write_json(cfg.out / "attack.json", {{"method", to_string(method)},
                                       {"family", to_string(family)},
                                       {"lambda", lambda},
                                       {"alpha", cfg.alpha},
                                       {"seed", cfg.seed},
                                       {"clean_rows", data.dataset.rows()},
                                       {"poison_rows", state.poison.rows()},
                                       {"objective", state.e_trace.back()},
                                       {"e_trace", state.e_trace},
                                       {"outer_iterations", state.outer_iterations},
                                       {"converged", state.converged},
                                       {"refits", state.refits},
                                       {"failed_line_searches", state.failed_line_searches},
                                       {"wall_time_s", state.wall_time_s},
                                       {"mse_clean", clean.train_mse},
                                       {"mse_poisoned", poisoned.train_mse},
                                       {"mse_poisoned_clean_rows", mse(data.dataset, poisoned.model)},
                                       {"model", state.theta}});
  out << "mse_clean " << shown(clean.train_mse) << "\nmse_poisoned " << shown(poisoned.train_mse) << "\npoison_rows "
      << state.poison.rows() << '\n';
  return 0;
}

int run_defend(const CliConfig& cfg, std::ostream& out, std::ostream& err) {
  const auto data = load_data(cfg);
  const auto family = cfg.families.front();
  const double lambda = resolve_lambda(cfg, data.dataset, family);
  const auto method = cfg.defenses.front();

  DefenseResult result;
  nlohmann::json extra = {{"method", to_string(method)},
                          {"family", to_string(family)},
                          {"lambda", lambda},
                          {"alpha_assumed", cfg.alpha_assumed},
                          {"seed", cfg.seed},
                          {"rows", data.dataset.rows()}};
  if (method == DefenseKind::kTrim) {
    TrimConfig tc;
    tc.alpha_assumed = cfg.alpha_assumed;
    tc.max_iters = cfg.trim_max_iters;
    tc.restarts = cfg.trim_restarts;
    tc.seed = cfg.seed;
    tc.rho = cfg.rho;
    result = trim_defend(data.dataset, tc, family, lambda);
    extra["max_iters"] = tc.max_iters;
    extra["restarts"] = tc.restarts;
  } else {
    ProdaConfig pc;
    pc.gamma = cfg.gamma;
    pc.epsilon = cfg.epsilon;
    pc.alpha_assumed = cfg.alpha_assumed;
    pc.seed = cfg.seed;
    pc.rho = cfg.rho;
    pc.jobs = cfg.jobs;
    result = proda_defend(data.dataset, pc, family, lambda);
    extra["gamma"] = cfg.gamma == 0 ? static_cast<long>(data.dataset.dims() + 1) : cfg.gamma;
    extra["epsilon"] = cfg.epsilon;
  }
  log(cfg, err, "defend: " + std::to_string(result.iterations) + " iterations");

  std::filesystem::create_directories(cfg.out);
  nlohmann::json j = result;
  j.update(extra);
  j["mse_all_rows"] = mse(data.dataset, result.model);
  write_json(cfg.out / "defense.json", j);

  out << "subset_mse " << shown(result.subset_mse) << "\nretained " << result.subset_indices.size() << '\n';
  if (method == DefenseKind::kProda) {
    out << "beta " << result.beta_used << "\ngroups " << result.iterations << '\n';
  } else {
    char bound[64];
    std::snprintf(bound, sizeof bound, "%.1f", result.worst_case_log10_iterations);
    out << "trim iterations " << result.iterations << " (cap " << cfg.trim_max_iters << ", "
        << (result.converged ? "converged" : "hit the cap") << ")\n";
    out << "trim worst case: may visit every size-n subset, C(N, n) ~ 10^" << bound << " iterations\n";
  }
  return 0;
}

void write_report_outputs(const std::vector<ExperimentRecord>& records, const std::filesystem::path& dir,
                          std::ostream& out) {
  const auto summary = aggregate(records);
  write_summary_csv(dir / "summary.csv", summary);

  const bool has_attack = std::any_of(summary.begin(), summary.end(),
                                      [](const SummaryRow& r) { return r.attack != AttackKind::kNone; });
  if (has_attack) emit_plot(summary, PlotKind::kMseVsAlpha, dir / "mse_vs_alpha.svg");
  const bool has_defense = std::any_of(summary.begin(), summary.end(),
                                       [](const SummaryRow& r) { return r.mse_defended.has_value(); });
  if (has_defense) emit_plot(summary, PlotKind::kMseVsGamma, dir / "mse_vs_gamma.svg");

  std::ostringstream report;
  report << "records " << records.size() << ", summary rows " << summary.size() << '\n';
  long errors = 0;
  for (const auto& r : records) errors += r.error ? 1 : 0;
  if (errors > 0) report << "failed cells " << errors << '\n';
  report << complexity_report(records);
  open_out(dir / "report.txt") << report.str();
  out << report.str();
}

int run_sweep_cmd(const CliConfig& cfg, std::ostream& out, std::ostream& err) {
  std::vector<ExperimentSpec> specs;
  for (auto attack : cfg.attacks) {
    for (auto defense : cfg.defenses) {
      ExperimentSpec spec;
      if (cfg.data.csv) {
        spec.source.name = cfg.data.csv->stem().string();
        spec.source.csv_path = cfg.data.csv;
        spec.source.csv.target_column = cfg.data.target;
        spec.source.csv.categorical = cfg.data.categorical;
        spec.source.csv.normalize = !cfg.data.raw;
      } else {
        spec.source.name = "synthetic";
        spec.source.synthetic = *cfg.data.synthetic;
      }
      spec.families = cfg.families;
      spec.lambda = cfg.lambda;
      spec.rho = cfg.rho;
      spec.attack = attack;
      spec.defense = defense;
      spec.alphas = cfg.alphas;
      spec.gammas = cfg.gammas;
      spec.alphas_assumed = cfg.alphas_assumed;
      spec.repeats = cfg.repeats;
      spec.master_seed = cfg.data.synthetic_seed.value_or(cfg.seed);
      spec.max_features = cfg.max_features;
      spec.train_subsample = cfg.train_subsample;
      spec.surrogate_fraction = cfg.surrogate_fraction;
      spec.attack_epsilon = cfg.epsilon_conv;
      spec.attack_max_iters = cfg.max_iters;
      spec.defense_epsilon = cfg.epsilon;
      spec.trim_max_iters = cfg.trim_max_iters;
      spec.trim_restarts = cfg.trim_restarts;
      spec.rate_iters_per_s = cfg.rate;
      spec.jobs = cfg.jobs;
      spec.validate();
      specs.push_back(std::move(spec));
    }
  }

  std::vector<Experiment> experiments;
  for (auto& s : specs) experiments.emplace_back(s);

  std::filesystem::create_directories(cfg.out);
  std::vector<ExperimentRecord> records;
  {
    auto stream = open_out(cfg.out / "records.jsonl");
    RecordWriter writer(stream, specs.front());
    for (const auto& e : experiments) {
      e.run_sweep([&](const ExperimentRecord& r) {
        writer.write(r);
        records.push_back(r);
        if (cfg.verbosity > 0) {
          err << to_string(r.cell.family) << ' ' << to_string(r.cell.attack) << ' ' << to_string(r.cell.defense)
              << " alpha=" << r.cell.alpha << " repeat=" << r.cell.repeat << (r.error ? " error: " + *r.error : "")
              << '\n';
        }
      });
    }
  }
  write_report_outputs(records, cfg.out, out);
  const bool failed = std::any_of(records.begin(), records.end(), [](const auto& r) { return r.error.has_value(); });
  if (failed) err << "poisonbench: some cells failed; see the error field in records.jsonl\n";
  return failed ? 1 : 0;
}

int run_report(const CliConfig& cfg, std::ostream& out, std::ostream&) {
  const auto records = read_records_jsonl(*cfg.records);
  if (records.empty()) throw DataError("'" + cfg.records->string() + "' holds no records");
  std::filesystem::create_directories(cfg.out);
  write_report_outputs(records, cfg.out, out);
  return 0;
}

void add_data_options(CLI::App& sub, DataArgs& data, std::string& synthetic_text) {
  sub.add_option("--csv", data.csv, "Input CSV with a header row")->check(CLI::ExistingFile);
  sub.add_option("--target", data.target, "Response column name or zero-based index (required with --csv)");
  sub.add_option("--categorical", data.categorical, "Columns to one-hot encode")->delimiter(',');
  sub.add_flag("--raw", data.raw, "Use CSV values as-is instead of min-max scaling to [0,1]");
  sub.add_option("--synthetic", synthetic_text, "Synthetic source, e.g. d=5,n=300,noise=0.1[,seed=7]");
}

}  // namespace

std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> out;
  if (text.find(':') != std::string::npos) {
    std::vector<std::string> parts;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ':')) parts.push_back(item);
    if (parts.size() != 3) throw UsageError("range '" + text + "' must be start:stop:step");
    const double a = to_number(parts[0], "range"), b = to_number(parts[1], "range"), step = to_number(parts[2], "range");
    if (!(step > 0.0) || b < a) throw UsageError("range '" + text + "' needs step > 0 and stop >= start");
    const auto count = static_cast<long>(std::floor((b - a) / step + 1e-9)) + 1;
    for (long i = 0; i < count; ++i) out.push_back(round12(a + static_cast<double>(i) * step));
    return out;
  }
  for (const auto& item : split_list(text)) out.push_back(round12(to_number(item, "list")));
  return out;
}

std::pair<SyntheticSource, std::optional<std::uint64_t>> parse_synthetic(const std::string& text) {
  SyntheticSource src;
  std::optional<std::uint64_t> seed;
  for (const auto& item : split_list(text)) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw UsageError("--synthetic entry '" + item + "' is not key=value");
    const auto key = item.substr(0, eq);
    const double v = to_number(item.substr(eq + 1), "--synthetic");
    if (key == "d") {
      src.dims = static_cast<Index>(v);
    } else if (key == "n") {
      src.samples = static_cast<Index>(v);
    } else if (key == "noise") {
      src.noise_std = v;
    } else if (key == "seed") {
      seed = static_cast<std::uint64_t>(v);
    } else {
      throw UsageError("--synthetic key '" + key + "' is not one of d, n, noise, seed");
    }
  }
  if (src.dims < 1 || src.samples < 2 * (src.dims + 1) || src.noise_std < 0.0) {
    throw UsageError("--synthetic needs d >= 1, n >= 2(d+1), noise >= 0");
  }
  return {src, seed};
}

ParseResult parse_args(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CliConfig cfg;
  CLI::App app{"Data-poisoning attacks and defenses for linear regression", "poisonbench"};
  app.set_config("--config", "", "key=value file; keys take a subcommand prefix, e.g. attack.alpha=0.2");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.fallthrough();
  app.require_subcommand(1, 1);
  app.add_option("--seed", cfg.seed, "Seed for every random choice")->capture_default_str();
  std::string out_dir = "poisonbench_out";
  app.add_option("--out", out_dir, "Output directory")->envname("POISONBENCH_OUT")->capture_default_str();
  app.add_flag("-v,--verbose", cfg.verbosity, "Progress messages on stderr");

  std::string synthetic_text, family_text = "ols", families_text = "ols", method_text, attacks_text = "nopt",
                               defenses_text = "none", alphas_text, gammas_text, assumed_text, reference_text = "clean-fit";

  auto* fit_cmd = app.add_subcommand("fit", "Fit a model and report its training MSE");
  auto* attack_cmd = app.add_subcommand("attack", "Generate poison rows for a clean training set");
  auto* defend_cmd = app.add_subcommand("defend", "Select a trusted subset of a (possibly poisoned) training set");
  auto* sweep_cmd = app.add_subcommand("sweep", "Run a seeded grid of attack/defense experiments");
  auto* report_cmd = app.add_subcommand("report", "Summarize a records file into CSV, SVG and text");

  for (auto* sub : {fit_cmd, attack_cmd, defend_cmd}) {
    add_data_options(*sub, cfg.data, synthetic_text);
    sub->add_option("--family", family_text, "ols | ridge | lasso | elasticnet")->capture_default_str();
    sub->add_option("--lambda", cfg.lambda, "Regularization strength (default: validation grid search)");
    sub->add_option("--rho", cfg.rho, "Elastic-net l1 share")->capture_default_str();
  }
  add_data_options(*sweep_cmd, cfg.data, synthetic_text);
  sweep_cmd->add_option("--families", families_text, "Comma list of model families")->capture_default_str();
  sweep_cmd->add_option("--lambda", cfg.lambda, "Fixed lambda (default: validation grid search)");
  sweep_cmd->add_option("--rho", cfg.rho, "Elastic-net l1 share")->capture_default_str();

  attack_cmd->add_option("--method", method_text, "nopt | opt")->default_str("nopt");
  attack_cmd->add_option("--alpha", cfg.alpha, "Poisoning rate in (0, 0.2]")->capture_default_str();
  attack_cmd->add_option("--reference", reference_text, "clean-fit | current-model")->capture_default_str();
  for (auto* sub : {attack_cmd, sweep_cmd}) {
    sub->add_option("--epsilon-conv", cfg.epsilon_conv, "Outer-loop convergence threshold")->capture_default_str();
    sub->add_option("--max-iters", cfg.max_iters, "Outer-loop iteration cap")->capture_default_str();
  }

  defend_cmd->add_option("--method", method_text, "proda | trim")->default_str("proda");
  defend_cmd->add_option("--alpha-assumed,--alpha", cfg.alpha_assumed, "Assumed poisoning rate")
      ->capture_default_str();
  defend_cmd->add_option("--gamma", cfg.gamma, "Proda group size (0 = d+1)")->capture_default_str();
  defend_cmd->add_option("--jobs", cfg.jobs, "Worker threads for Proda groups")->capture_default_str();
  for (auto* sub : {defend_cmd, sweep_cmd}) {
    sub->add_option("--epsilon", cfg.epsilon, "Proda failure probability")->capture_default_str();
    sub->add_option("--trim-max-iters", cfg.trim_max_iters, "TRIM iteration budget")->capture_default_str();
    sub->add_option("--trim-restarts", cfg.trim_restarts, "TRIM random starts")->capture_default_str();
  }

  sweep_cmd->add_option("--attack", attacks_text, "Comma list from none, opt, nopt")->capture_default_str();
  sweep_cmd->add_option("--defense", defenses_text, "Comma list from none, trim, proda")->capture_default_str();
  sweep_cmd->add_option("--alphas", alphas_text, "Poisoning rates, start:stop:step or a list")
      ->default_str("0.04:0.20:0.04");
  sweep_cmd->add_option("--gammas", gammas_text, "Proda group sizes (0 = d+1)")->default_str("0");
  sweep_cmd->add_option("--alphas-assumed", assumed_text, "Defender's assumed rates")->default_str("0.2");
  sweep_cmd->add_option("--repeats", cfg.repeats, "Runs per grid cell")->capture_default_str();
  sweep_cmd->add_option("--jobs", cfg.jobs, "Cells run in parallel")->capture_default_str();
  sweep_cmd->add_option("--max-features", cfg.max_features, "Keep the first k features (0 = all)");
  sweep_cmd->add_option("--train-subsample", cfg.train_subsample, "Cap on the clean training fold (0 = all)");
  sweep_cmd->add_option("--surrogate-fraction", cfg.surrogate_fraction,
                        "Attacker sees a bootstrap of this fraction of the training fold (0 = the fold)");
  sweep_cmd->add_option("--rate", cfg.rate, "Iterations per second for modeled times")->capture_default_str();

  report_cmd->add_option("--records", cfg.records, "records.jsonl from a sweep")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return {std::nullopt, 0};
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return {std::nullopt, 0};
  } catch (const CLI::ParseError& e) {
    err << "poisonbench: " << e.what() << '\n';
    return {std::nullopt, 2};
  }

  try {
    cfg.out = out_dir;
    if (fit_cmd->parsed()) cfg.command = Command::kFit;
    if (attack_cmd->parsed()) cfg.command = Command::kAttack;
    if (defend_cmd->parsed()) cfg.command = Command::kDefend;
    if (sweep_cmd->parsed()) cfg.command = Command::kSweep;
    if (report_cmd->parsed()) cfg.command = Command::kReport;

    if (cfg.command != Command::kReport) {
      if (cfg.data.csv && !synthetic_text.empty()) throw UsageError("--csv and --synthetic are mutually exclusive");
      if (!cfg.data.csv && synthetic_text.empty()) throw UsageError("a dataset is required: --csv or --synthetic");
      if (cfg.data.csv && cfg.data.target.empty()) throw UsageError("--target is required with --csv");
      if (!synthetic_text.empty()) {
        auto [src, seed] = parse_synthetic(synthetic_text);
        cfg.data.synthetic = src;
        cfg.data.synthetic_seed = seed;
      }
      cfg.families.clear();
      for (const auto& f : split_list(cfg.command == Command::kSweep ? families_text : family_text)) {
        cfg.families.push_back(parse_family(f));
      }
      if (cfg.lambda && !(*cfg.lambda >= 0.0)) throw UsageError("--lambda must be >= 0");
      if (!(cfg.rho >= 0.0 && cfg.rho <= 1.0)) throw UsageError("--rho must lie in [0,1]");
    }

    switch (cfg.command) {
      case Command::kAttack:
        cfg.attacks = {parse_attack_kind(method_text.empty() ? "nopt" : method_text)};
        if (cfg.attacks.front() == AttackKind::kNone) throw UsageError("--method must be nopt or opt");
        if (reference_text == "clean-fit") {
          cfg.reference = ReferenceLoss::kCleanFit;
        } else if (reference_text == "current-model") {
          cfg.reference = ReferenceLoss::kCurrentModel;
        } else {
          throw UsageError("--reference must be clean-fit or current-model");
        }
        if (!(cfg.alpha > 0.0 && cfg.alpha <= 0.2 + 1e-12)) throw UsageError("--alpha must lie in (0, 0.2]");
        if (!(cfg.epsilon_conv > 0.0) || cfg.max_iters < 1) throw UsageError("--epsilon-conv and --max-iters must be positive");
        break;
      case Command::kDefend:
        cfg.defenses = {parse_defense_kind(method_text.empty() ? "proda" : method_text)};
        if (cfg.defenses.front() == DefenseKind::kNone) throw UsageError("--method must be proda or trim");
        if (!(cfg.alpha_assumed >= 0.0 && cfg.alpha_assumed < 1.0)) throw UsageError("--alpha-assumed must lie in [0,1)");
        if (cfg.gamma < 0) throw UsageError("--gamma must be >= 0");
        if (!(cfg.epsilon > 0.0 && cfg.epsilon < 1.0)) throw UsageError("--epsilon must lie in (0,1)");
        if (cfg.jobs < 1 || cfg.trim_max_iters < 1 || cfg.trim_restarts < 1) {
          throw UsageError("--jobs, --trim-max-iters and --trim-restarts must be >= 1");
        }
        break;
      case Command::kSweep: {
        cfg.attacks.clear();
        for (const auto& a : split_list(attacks_text)) cfg.attacks.push_back(parse_attack_kind(a));
        cfg.defenses.clear();
        for (const auto& d : split_list(defenses_text)) cfg.defenses.push_back(parse_defense_kind(d));
        if (!alphas_text.empty()) cfg.alphas = parse_grid(alphas_text);
        if (!gammas_text.empty()) {
          cfg.gammas.clear();
          for (double g : parse_grid(gammas_text)) cfg.gammas.push_back(std::lround(g));
        }
        if (!assumed_text.empty()) cfg.alphas_assumed = parse_grid(assumed_text);
        if (cfg.jobs < 1) throw UsageError("--jobs must be >= 1");
        // Same checks the harness applies, surfaced before any output exists.
        for (auto attack : cfg.attacks) {
          ExperimentSpec probe;
          probe.attack = attack;
          probe.families = cfg.families;
          probe.alphas = cfg.alphas;
          probe.gammas = cfg.gammas;
          probe.alphas_assumed = cfg.alphas_assumed;
          probe.repeats = cfg.repeats;
          probe.rho = cfg.rho;
          probe.lambda = cfg.lambda;
          probe.surrogate_fraction = cfg.surrogate_fraction;
          probe.attack_epsilon = cfg.epsilon_conv;
          probe.attack_max_iters = cfg.max_iters;
          probe.defense_epsilon = cfg.epsilon;
          probe.trim_max_iters = cfg.trim_max_iters;
          probe.trim_restarts = cfg.trim_restarts;
          probe.rate_iters_per_s = cfg.rate;
          probe.jobs = cfg.jobs;
          if (cfg.data.synthetic) probe.source.synthetic = *cfg.data.synthetic;
          if (cfg.data.csv) probe.source.csv_path = cfg.data.csv;
          probe.validate();
        }
        break;
      }
      case Command::kFit:
      case Command::kReport:
        break;
    }
  } catch (const std::invalid_argument& e) {
    err << "poisonbench: " << e.what() << '\n';
    return {std::nullopt, 2};
  } catch (const UsageError& e) {
    err << "poisonbench: " << e.what() << '\n';
    return {std::nullopt, 2};
  }
  return {std::move(cfg), 0};
}

int dispatch(const CliConfig& cfg, std::ostream& out, std::ostream& err) {
  try {
    switch (cfg.command) {
      case Command::kFit: return run_fit(cfg, out, err);
      case Command::kAttack: return run_attack(cfg, out, err);
      case Command::kDefend: return run_defend(cfg, out, err);
      case Command::kSweep: return run_sweep_cmd(cfg, out, err);
      case Command::kReport: return run_report(cfg, out, err);
    }
  } catch (const std::exception& e) {
    err << "poisonbench: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  auto parsed = parse_args(argc, argv, out, err);
  if (!parsed.config) return parsed.exit_code;
  return dispatch(*parsed.config, out, err);
}

}  // namespace poisonbench::cli
