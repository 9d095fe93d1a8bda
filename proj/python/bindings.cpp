#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <memory>
#include <string>
#include <vector>

#include "samlab/attacks.hpp"
#include "samlab/data.hpp"
#include "samlab/harness.hpp"
#include "samlab/models.hpp"
#include "samlab/theory.hpp"

namespace py = pybind11;
using namespace samlab;

namespace {

FeatureModelSpec make_spec(double p, double eta, std::size_t n) { return {p, eta, n}; }

py::array_t<double> matrix_to_array(const Tensor& t) {
  const auto& shape = t.shape();
  py::array_t<double> out(std::vector<py::ssize_t>(shape.begin(), shape.end()));
  std::memcpy(out.mutable_data(), t.values().data(), t.size() * sizeof(double));
  return out;
}

Tensor array_to_matrix(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2) throw std::invalid_argument("expected a 2-d array of samples");
  const std::size_t rows = static_cast<std::size_t>(a.shape(0));
  const std::size_t cols = static_cast<std::size_t>(a.shape(1));
  std::vector<double> values(a.data(), a.data() + rows * cols);
  return Tensor::matrix(rows, cols, std::move(values));
}

py::dict dataset_to_dict(const Dataset& data) {
  py::dict out;
  out["x"] = matrix_to_array(data.x);
  py::array_t<int> labels(std::vector<py::ssize_t>{static_cast<py::ssize_t>(data.y.size())});
  std::memcpy(labels.mutable_data(), data.y.data(), data.y.size() * sizeof(int));
  out["y"] = std::move(labels);
  out["num_classes"] = data.num_classes;
  out["generator"] = data.meta.generator;
  out["seed"] = data.meta.seed;
  return out;
}

AttackBudget budget_from_kwargs(const std::string& norm, double eps, double alpha, int steps,
                                bool random_start) {
  AttackBudget budget;
  budget.norm = norm_from_string(norm);
  budget.epsilon = eps;
  budget.alpha = alpha;
  budget.steps = steps;
  budget.random_start = random_start;
  budget.validate();
  return budget;
}

py::dict sam_solve_to_dict(const SamSolve& solve) {
  py::dict out;
  out["w1"] = solve.w1;
  out["wr"] = solve.wr;
  out["residual"] = solve.residual;
  out["iterations"] = solve.iterations;
  out["bracket"] = py::make_tuple(solve.bracket_lo, solve.bracket_hi);
  return out;
}

py::dict report_to_dict(const TheoryReport& report) {
  py::dict out;
  out["p"] = report.spec.p;
  out["eta"] = report.spec.eta;
  out["n"] = report.spec.n;
  out["eps"] = report.eps;
  out["w1_star"] = report.w1_star;
  out["wr_star"] = report.wr_star;
  if (report.has_at) {
    out["w1_at"] = report.w1_at;
    out["wr_at"] = report.wr_at;
  } else {
    out["w1_at"] = py::none();
    out["wr_at"] = py::none();
  }
  out["w1_sam"] = report.w1_sam;
  out["wr_sam_numeric"] = report.wr_sam_numeric;
  out["wr_sam_approx"] = report.wr_sam_approx;
  if (report.eps > 0.0) {
    out["eps_at_equiv"] = report.eps_at_equiv;
    out["eps_at_exact"] = report.eps_at_exact;
  } else {
    out["eps_at_equiv"] = py::none();
    out["eps_at_exact"] = py::none();
  }
  out["solver"] = sam_solve_to_dict(report.solver);
  return out;
}

py::dict record_to_dict(const RunRecord& record) {
  py::dict out;
  out["task"] = record.task;
  out["seed"] = record.seed;
  out["epoch_losses"] = record.epoch_losses;
  out["final_train_loss"] = record.final_train_loss;
  out["clean_accuracy"] = record.clean_accuracy;
  py::dict robust;
  for (const auto& [label, value] : record.robust_accuracy) robust[py::str(label)] = value;
  out["robust_accuracy"] = robust;
  if (record.wr_estimated) {
    out["wr_estimated"] = *record.wr_estimated;
  } else {
    out["wr_estimated"] = py::none();
  }
  out["status"] = record.status;
  out["checkpoint"] = record.checkpoint_path;
  return out;
}

py::object run_config_text(const std::string& text) {
  const RunConfig config = RunConfig::load(KeyValueConfig::parse_text(text));
  switch (config.task) {
    case TaskKind::kTrain:
      return record_to_dict(run_train(config));
    case TaskKind::kAttack:
      return record_to_dict(run_attack(config));
    case TaskKind::kTheory: {
      py::list reports;
      for (const TheoryReport& report : run_theory(config)) reports.append(report_to_dict(report));
      return reports;
    }
    case TaskKind::kSweep: {
      py::list rows;
      for (const SweepRow& row : run_sweep(config)) {
        py::dict entry;
        entry["index"] = row.index;
        entry["point"] = row.point;
        entry["record"] = record_to_dict(row.record);
        rows.append(entry);
      }
      return rows;
    }
    case TaskKind::kPlot:
      run_plot(config);
      return py::none();
  }
  return py::none();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "samlab core: sharpness-aware minimization, gradient attacks and the "
            "closed-form robust-feature analysis of a synthetic Gaussian model";

  // Closed-form analysis.
  m.def("phi", &phi, py::arg("z"), "Standard normal CDF.");
  m.def(
      "clean_accuracy",
      [](double w1, double p, double eta, std::size_t n) {
        return clean_accuracy(w1, make_spec(p, eta, n));
      },
      py::arg("w1"), py::arg("p"), py::arg("eta"), py::arg("n"),
      "Exact 0-1 accuracy of sign(w.x) with unit non-robust weights.");
  m.def(
      "adv_accuracy",
      [](double w1, double p, double eta, std::size_t n, double eps) {
        return adv_accuracy(w1, make_spec(p, eta, n), eps);
      },
      py::arg("w1"), py::arg("p"), py::arg("eta"), py::arg("n"), py::arg("eps"),
      "Worst-case accuracy under an l-inf attack on the Gaussian coordinates.");
  m.def(
      "wr_standard",
      [](double p, double eta, std::size_t n) {
        const WrResult r = wr_standard(make_spec(p, eta, n));
        return py::make_tuple(r.w1, r.wr);
      },
      py::arg("p"), py::arg("eta"), py::arg("n"));
  m.def(
      "wr_at",
      [](double p, double eta, std::size_t n, double eps) {
        const WrResult r = wr_at(make_spec(p, eta, n), eps);
        return py::make_tuple(r.w1, r.wr);
      },
      py::arg("p"), py::arg("eta"), py::arg("n"), py::arg("eps"));
  m.def(
      "wr_sam_numeric",
      [](double p, double eta, std::size_t n, double eps) {
        return sam_solve_to_dict(wr_sam_numeric(make_spec(p, eta, n), eps));
      },
      py::arg("p"), py::arg("eta"), py::arg("n"), py::arg("eps"));
  m.def(
      "wr_sam_approx",
      [](double p, double eta, std::size_t n, double eps) {
        return wr_sam_approx(make_spec(p, eta, n), eps);
      },
      py::arg("p"), py::arg("eta"), py::arg("n"), py::arg("eps"));
  m.def(
      "eps_at_equivalent",
      [](double p, double eta, std::size_t n, double eps_sam) {
        const EpsRelation r = eps_at_equivalent(make_spec(p, eta, n), eps_sam);
        return py::make_tuple(r.eps_at_approx, r.eps_at_exact);
      },
      py::arg("p"), py::arg("eta"), py::arg("n"), py::arg("eps_sam"));
  m.def(
      "estimate_wr",
      [](const std::vector<double>& weights) {
        return estimate_wr(std::span<const double>(weights));
      },
      py::arg("weights"));
  m.def(
      "theory_report",
      [](double p, double eta, std::size_t n, double eps) {
        return report_to_dict(make_theory_report(make_spec(p, eta, n), eps));
      },
      py::arg("p"), py::arg("eta"), py::arg("n"), py::arg("eps"));

  // Samplers.
  m.def(
      "sample_feature_model",
      [](double p, double eta, std::size_t n, std::size_t count, std::uint64_t seed) {
        return dataset_to_dict(sample_feature_model(make_spec(p, eta, n), count, seed));
      },
      py::arg("p"), py::arg("eta"), py::arg("n"), py::arg("count"), py::arg("seed"));
  m.def(
      "sample_mixture2d",
      [](const std::vector<std::array<double, 2>>& centers, double spread, std::size_t count,
         std::uint64_t seed) {
        return dataset_to_dict(sample_mixture2d(centers, spread, count, seed));
      },
      py::arg("centers"), py::arg("spread"), py::arg("count"), py::arg("seed"));

  // Attacks against a linear scorer given explicitly.
  m.def(
      "pgd_linear",
      [](const std::vector<double>& w,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& x,
         const std::vector<int>& y, const std::string& norm, double eps, double alpha,
         int steps) {
        const LinearModel model = LinearModel::from_weights(w);
        const AttackResult result =
            pgd(model, array_to_matrix(x), y, budget_from_kwargs(norm, eps, alpha, steps, false));
        py::dict out;
        out["x_adv"] = matrix_to_array(result.x_adv);
        out["delta"] = matrix_to_array(result.delta);
        out["success"] = result.success_mask;
        return out;
      },
      py::arg("w"), py::arg("x"), py::arg("y"), py::arg("norm") = "linf", py::arg("eps") = 0.1,
      py::arg("alpha") = 0.025, py::arg("steps") = 10);
  m.def(
      "robust_accuracy_checkpoint",
      [](const std::string& checkpoint,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& x,
         const std::vector<int>& y, const std::string& norm, double eps, double alpha,
         int steps) {
        const std::unique_ptr<Model> model = load_checkpoint(checkpoint);
        Dataset data;
        data.x = array_to_matrix(x);
        data.y = y;
        return robust_accuracy(*model, data, budget_from_kwargs(norm, eps, alpha, steps, false));
      },
      py::arg("checkpoint"), py::arg("x"), py::arg("y"), py::arg("norm") = "linf",
      py::arg("eps") = 0.1, py::arg("alpha") = 0.025, py::arg("steps") = 10);

  // Full harness entry point: execute one task from configuration text.
  m.def("run", &run_config_text, py::arg("config_text"),
        "Run a theory/train/attack/sweep/plot task from configuration text and "
        "return its records.");

  py::register_exception<ConfigError>(m, "ConfigError");
}
