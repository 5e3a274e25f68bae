#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "einn/experiment.hpp"
#include "einn/gradcheck.hpp"

namespace py = pybind11;
using namespace einn;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

ReferenceSolution make_ref(const std::string& problem, double nu, double t0, int dim,
                           double stiffness, double sigma0) {
  ReferenceSolution r;
  if (problem == "lamb_oseen") {
    r = ReferenceSolution::lamb_oseen(nu, t0);
  } else if (problem == "barenblatt") {
    r = ReferenceSolution::barenblatt(t0);
  } else if (problem == "ou") {
    r = ReferenceSolution::ornstein_uhlenbeck(dim, nu, stiffness, sigma0);
  } else {
    throw py::value_error("unknown problem '" + problem + "'");
  }
  r.validate();
  return r;
}

// rows are points on the python side
void check_points(const ReferenceSolution& r, const MatrixXd& xs) {
  if (xs.cols() != r.dim) throw py::value_error("points must have shape (n, " + std::to_string(r.dim) + ")");
}

#define REF_ARGS                                                                             \
  py::arg("problem"), py::arg("t"), py::arg("xs"), py::arg("nu") = 0.1, py::arg("t0") = 0.1, \
      py::arg("dim") = 1, py::arg("stiffness") = 1.0, py::arg("sigma0") = 1.0

py::dict report_dict(const ExperimentReport& r) {
  py::dict d;
  d["dir"] = r.dir.string();
  d["iterations"] = r.log.size();
  d["wall_seconds"] = r.wall_seconds;
  d["skipped_steps"] = r.skipped_steps;
  std::vector<double> losses;
  for (const TrainLogRow& row : r.log) losses.push_back(row.loss);
  d["losses"] = losses;
  py::list cps;
  for (const CheckpointMetrics& m : r.checkpoints) {
    py::dict c;
    c["iteration"] = m.iteration;
    c["loss"] = m.loss;
    c["times"] = m.times;
    c["Q"] = m.q;
    c["KL"] = m.kl;
    c["F"] = m.energy;
    c["q_time_avg"] = m.q_time_avg;
    c["q_final"] = m.q_final;
    c["kl_sup"] = m.kl_sup;
    cps.append(c);
  }
  d["checkpoints"] = cps;
  return d;
}

}  // namespace

PYBIND11_MODULE(_einn, m) {
  m.doc() = "EINN solver for McKean-Vlasov equations";
  m.attr("__version__") = library_version();
  py::register_exception<SchemaError>(m, "SchemaError", PyExc_ValueError);

  m.def(
      "density",
      [](const std::string& p, double t, const MatrixXd& xs, double nu, double t0, int dim,
         double k, double s0) {
        const ReferenceSolution r = make_ref(p, nu, t0, dim, k, s0);
        check_points(r, xs);
        VectorXd out(xs.rows());
        for (Eigen::Index i = 0; i < xs.rows(); ++i) out(i) = density(r, t, xs.row(i).transpose());
        return out;
      },
      REF_ARGS, "Reference density at each row of xs.");
  m.def(
      "score",
      [](const std::string& p, double t, const MatrixXd& xs, double nu, double t0, int dim,
         double k, double s0) {
        const ReferenceSolution r = make_ref(p, nu, t0, dim, k, s0);
        check_points(r, xs);
        return MatrixXd(score_batch(r, t, xs.transpose()).transpose());
      },
      REF_ARGS, "grad log rho at each row of xs.");
  m.def(
      "convolution_field",
      [](const std::string& p, double t, const MatrixXd& xs, double nu, double t0, int dim,
         double k, double s0) {
        const ReferenceSolution r = make_ref(p, nu, t0, dim, k, s0);
        check_points(r, xs);
        MatrixXd out(xs.rows(), xs.cols());
        for (Eigen::Index i = 0; i < xs.rows(); ++i)
          out.row(i) = convolution_field(r, t, xs.row(i).transpose()).transpose();
        return out;
      },
      REF_ARGS, "Closed-form K * rho at each row of xs.");

  m.def(
      "conv_estimate",
      [](const std::string& kernel, const MatrixXd& xs, const MatrixXd& ys,
         std::optional<MatrixXd> zetas) {
        KernelSpec spec;
        if (kernel == "coulomb") {
          spec = KernelSpec::coulomb(static_cast<int>(xs.cols()));
        } else if (kernel == "biot_savart") {
          spec = KernelSpec::biot_savart();
        } else {
          throw py::value_error("kernel must be 'coulomb' or 'biot_savart'");
        }
        spec.validate();
        if (ys.cols() != xs.cols()) throw py::value_error("xs and ys differ in dimension");
        std::optional<MatrixXd> zt;
        if (zetas) zt = zetas->transpose();
        const MatrixXd xt = xs.transpose(), yt = ys.transpose();
        return MatrixXd(conv_estimate(spec, xt, yt, zt ? &*zt : nullptr).transpose());
      },
      py::arg("kernel"), py::arg("xs"), py::arg("ys"), py::arg("zetas") = py::none(),
      "Monte-Carlo estimate of K * rho at the rows of xs from particles ys.");

  m.def(
      "parse_config", [](const std::string& text) { return echo_config(parse_config(text)); },
      py::arg("text"), "Validate a config and return its canonical form.");
  m.def(
      "run_experiment",
      [](const std::string& text, std::optional<std::string> out_dir) {
        ExperimentConfig cfg = parse_config(text);
        if (out_dir) cfg.out_dir = *out_dir;
        cfg.validate();
        ExperimentReport r;
        {
          py::gil_scoped_release release;
          r = run_experiment(cfg);
        }
        return report_dict(r);
      },
      py::arg("config"), py::arg("out_dir") = py::none(),
      "Run one experiment from config text; returns a summary dict.");
  m.def(
      "gradcheck",
      [](int configs, std::uint64_t seed) {
        const GradcheckSuite s = run_gradcheck_suite(configs, seed);
        double worst = 0;
        for (const GradcheckResult& c : s.cases) worst = std::max(worst, c.max_rel_err);
        py::dict d;
        d["passed"] = s.passed;
        d["scalar_discrete"] = s.scalar.discrete;
        d["scalar_continuous"] = s.scalar.continuous;
        d["cases"] = s.cases.size();
        d["max_rel_err"] = worst;
        return d;
      },
      py::arg("configs") = 24, py::arg("seed") = 0);
  m.def(
      "compare_reports",
      [](const std::vector<std::filesystem::path>& paths) {
        py::list out;
        for (const CompareRow& r : compare_reports(paths)) {
          py::dict d;
          d["path"] = r.path;
          d["problem"] = r.problem;
          d["method"] = r.method;
          d["time_avg_Q"] = r.q_time_avg;
          d["final_Q"] = r.q_final;
          out.append(d);
        }
        return out;
      },
      py::arg("reports"));
}
