#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "poisonbench/attack.hpp"
#include "poisonbench/data.hpp"
#include "poisonbench/defend.hpp"
#include "poisonbench/regress.hpp"

namespace py = pybind11;
using namespace poisonbench;

namespace {

Dataset to_dataset(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  Dataset ds;
  ds.features = x;
  ds.responses = y;
  for (Index j = 0; j < x.cols(); ++j) ds.feature_names.push_back("x" + std::to_string(j));
  ds.validate();
  return ds;
}

RegressionModel to_model(const Eigen::VectorXd& weights, double bias, std::string_view family, double lam,
                         double rho) {
  RegressionModel m;
  m.weights = weights;
  m.bias = bias;
  m.family = parse_family(family);
  m.lambda = lam;
  m.rho = rho;
  return m;
}

py::tuple xy(const Dataset& ds) { return py::make_tuple(ds.features, ds.responses); }

py::dict attack_dict(const AttackState& s) {
  py::dict d;
  d["poison_x"] = s.poison.features;
  d["poison_y"] = s.poison.responses;
  d["model"] = s.theta;
  d["objective_trace"] = s.e_trace;
  d["outer_iterations"] = s.outer_iterations;
  d["converged"] = s.converged;
  d["refits"] = s.refits;
  return d;
}

py::dict defense_dict(const DefenseResult& r) {
  py::dict d;
  d["subset_indices"] = r.subset_indices;
  d["model"] = r.model;
  d["subset_mse"] = r.subset_mse;
  d["beta_used"] = r.beta_used;
  d["iterations"] = r.iterations;
  d["group_mses"] = r.group_mse_trace;
  d["loss_trace"] = r.loss_trace;
  d["converged"] = r.converged;
  d["worst_case_log10_iterations"] = r.worst_case_log10_iterations;
  return d;
}

AttackConfig attack_config(double alpha, Index poison_rows, int max_iters, double epsilon, std::uint64_t seed) {
  AttackConfig cfg;
  cfg.alpha = alpha;
  cfg.poison_rows = poison_rows;
  cfg.max_outer_iters = max_iters;
  cfg.epsilon = epsilon;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Poisoning attacks and subset defenses for linear regression.";

  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<AttackError>(m, "AttackError", PyExc_RuntimeError);
  py::register_exception<DefenseError>(m, "DefenseError", PyExc_RuntimeError);

  py::class_<RegressionModel>(m, "Model")
      .def(py::init([](const Eigen::VectorXd& w, double b, const std::string& family, double lam, double rho) {
             return to_model(w, b, family, lam, rho);
           }),
           py::arg("weights"), py::arg("bias"), py::arg("family") = "ols", py::arg("lam") = 0.0,
           py::arg("rho") = 0.5)
      .def_readonly("weights", &RegressionModel::weights)
      .def_readonly("bias", &RegressionModel::bias)
      .def_readonly("lam", &RegressionModel::lambda)
      .def_readonly("rho", &RegressionModel::rho)
      .def_property_readonly("family", [](const RegressionModel& r) { return std::string(to_string(r.family)); })
      .def("predict", &RegressionModel::predict, py::arg("x"))
      .def("__repr__", [](const RegressionModel& r) {
        return "Model(family=" + std::string(to_string(r.family)) + ", dims=" + std::to_string(r.dims()) + ")";
      });

  m.def(
      "fit",
      [](const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const std::string& family, double lam, double rho) {
        return fit(to_dataset(x, y), parse_family(family), lam, {}, rho).model;
      },
      py::arg("x"), py::arg("y"), py::arg("family") = "ols", py::arg("lam") = 0.0, py::arg("rho") = 0.5);

  m.def(
      "mse",
      [](const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const RegressionModel& model) {
        return mse(to_dataset(x, y), model);
      },
      py::arg("x"), py::arg("y"), py::arg("model"));

  m.def(
      "loss",
      [](const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const RegressionModel& model, bool regularized) {
        return loss(to_dataset(x, y), model, regularized);
      },
      py::arg("x"), py::arg("y"), py::arg("model"), py::arg("regularized") = true);

  m.def(
      "generate_synthetic",
      [](Index d, Index n, double noise, std::uint64_t seed) {
        return xy(generate_synthetic(SyntheticSpec::with_random_weights(d, n, noise, seed)).dataset);
      },
      py::arg("d"), py::arg("n"), py::arg("noise") = 0.1, py::arg("seed") = 0);

  m.def(
      "split_three",
      [](const Eigen::MatrixXd& x, const Eigen::VectorXd& y, std::uint64_t seed) {
        const auto s = split_three(to_dataset(x, y), seed);
        return py::make_tuple(xy(s.train), xy(s.validation), xy(s.test));
      },
      py::arg("x"), py::arg("y"), py::arg("seed") = 0);

  m.def("compute_beta", &compute_beta, py::arg("alpha"), py::arg("gamma"), py::arg("epsilon") = 1e-5);
  m.def("retained_count", &retained_count, py::arg("alpha_assumed"), py::arg("rows"));

  m.def(
      "estimate_complexity",
      [](double alpha, long gamma, double epsilon, Index n, double rate) {
        const auto e = estimate_complexity(alpha, gamma, epsilon, n, rate);
        py::dict d;
        d["beta"] = e.beta;
        d["iterations_bound"] = e.iterations_bound;
        d["p_u"] = e.p_u;
        d["wallclock_estimate_s"] = e.wallclock_estimate_s;
        return d;
      },
      py::arg("alpha"), py::arg("gamma"), py::arg("epsilon") = 1e-5, py::arg("n") = 300, py::arg("rate") = 1e9);

  m.def(
      "dispersion_objective",
      [](const Eigen::MatrixXd& xc, const Eigen::VectorXd& yc, const Eigen::MatrixXd& xp, const Eigen::VectorXd& yp,
         const RegressionModel& model, double clean_ref_loss) {
        return dispersion_objective(to_dataset(xc, yc), to_dataset(xp, yp), model, clean_ref_loss);
      },
      py::arg("clean_x"), py::arg("clean_y"), py::arg("poison_x"), py::arg("poison_y"), py::arg("model"),
      py::arg("clean_ref_loss"));

  auto bind_attack = [&](const char* name, AttackState (*fn)(const Dataset&, const AttackConfig&, Family, double)) {
    m.def(
        name,
        [fn](const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double alpha, const std::string& family, double lam,
             Index poison_rows, int max_iters, double epsilon, std::uint64_t seed) {
          AttackState s;
          {
            py::gil_scoped_release release;
            s = fn(to_dataset(x, y), attack_config(alpha, poison_rows, max_iters, epsilon, seed), parse_family(family),
                   lam);
          }
          return attack_dict(s);
        },
        py::arg("x"), py::arg("y"), py::arg("alpha") = 0.2, py::arg("family") = "ols", py::arg("lam") = 0.0,
        py::arg("poison_rows") = 0, py::arg("max_iters") = 100, py::arg("epsilon") = 1e-6, py::arg("seed") = 0);
  };
  bind_attack("nopt_attack", &nopt_attack);
  bind_attack("opt_attack", &opt_attack);

  m.def(
      "proda_defend",
      [](const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double alpha_assumed, long gamma, double epsilon,
         const std::string& family, double lam, std::uint64_t seed, int jobs) {
        ProdaConfig cfg;
        cfg.alpha_assumed = alpha_assumed;
        cfg.gamma = gamma;
        cfg.epsilon = epsilon;
        cfg.seed = seed;
        cfg.jobs = jobs;
        DefenseResult r;
        {
          py::gil_scoped_release release;
          r = proda_defend(to_dataset(x, y), cfg, parse_family(family), lam);
        }
        return defense_dict(r);
      },
      py::arg("x"), py::arg("y"), py::arg("alpha_assumed") = 0.2, py::arg("gamma") = 0, py::arg("epsilon") = 1e-5,
      py::arg("family") = "ols", py::arg("lam") = 0.0, py::arg("seed") = 0, py::arg("jobs") = 1);

  m.def(
      "trim_defend",
      [](const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double alpha_assumed, const std::string& family,
         double lam, int max_iters, int restarts, std::uint64_t seed) {
        TrimConfig cfg;
        cfg.alpha_assumed = alpha_assumed;
        cfg.max_iters = max_iters;
        cfg.restarts = restarts;
        cfg.seed = seed;
        DefenseResult r;
        {
          py::gil_scoped_release release;
          r = trim_defend(to_dataset(x, y), cfg, parse_family(family), lam);
        }
        return defense_dict(r);
      },
      py::arg("x"), py::arg("y"), py::arg("alpha_assumed") = 0.2, py::arg("family") = "ols", py::arg("lam") = 0.0,
      py::arg("max_iters") = 400, py::arg("restarts") = 16, py::arg("seed") = 0);
}
