#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "demlearn/clustering.hpp"
#include "demlearn/config.hpp"
#include "demlearn/errors.hpp"
#include "demlearn/harness.hpp"
#include "demlearn/model.hpp"
#include "demlearn/trainer.hpp"

namespace py = pybind11;
using namespace demlearn;

namespace {

using Overrides = std::vector<std::pair<std::string, std::string>>;

Overrides to_overrides(const py::dict& settings) {
  Overrides out;
  for (const auto& [k, v] : settings) out.emplace_back(py::str(k), py::str(v));
  return out;
}

std::vector<ProxAnchor> to_anchors(const std::vector<std::pair<ParamVector, double>>& anchors) {
  std::vector<ProxAnchor> out;
  out.reserve(anchors.size());
  for (const auto& [w, c] : anchors) out.push_back(ProxAnchor{w, c});
  return out;
}

void check_batch(const RowMatrix& x, const std::vector<int>& y) {
  if (static_cast<std::size_t>(x.rows()) != y.size()) throw DimensionError("one label per feature row");
}

py::dict metrics_dict(const RoundMetrics& m) {
  py::dict d;
  d["t"] = m.round;
  d["c_spe"] = m.c_spe;
  d["c_gen"] = m.c_gen;
  d["g_spe"] = m.g_spe;
  d["g_gen"] = m.g_gen;
  d["global_acc"] = m.global_acc;
  d["global_loss"] = m.global_loss;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "DemLearn hierarchical federated learning simulator";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  py::class_<ModelSpec>(m, "ModelSpec")
      .def_static("logistic", &ModelSpec::logistic, py::arg("input_dim"), py::arg("num_classes"))
      .def_static("mlp", &ModelSpec::mlp, py::arg("input_dim"), py::arg("hidden_dim"), py::arg("num_classes"))
      .def_readonly("input_dim", &ModelSpec::input_dim)
      .def_readonly("hidden_dim", &ModelSpec::hidden_dim)
      .def_readonly("num_classes", &ModelSpec::num_classes)
      .def_property_readonly("param_count", [](const ModelSpec& s) { return s.param_count(); });

  m.def("init_params", &init_params, py::arg("spec"), py::arg("seed"));

  m.def(
      "loss",
      [](const ModelSpec& spec, const ParamVector& w, const RowMatrix& x, const std::vector<int>& y) {
        check_batch(x, y);
        return loss(spec, w, Batch(x, y));
      },
      py::arg("spec"), py::arg("w"), py::arg("x"), py::arg("y"));

  m.def(
      "prox_grad",
      [](const ModelSpec& spec, const ParamVector& w, const RowMatrix& x, const std::vector<int>& y,
         const std::vector<std::pair<ParamVector, double>>& anchors, double mu) {
        check_batch(x, y);
        return prox_grad(spec, w, Batch(x, y), to_anchors(anchors), mu);
      },
      py::arg("spec"), py::arg("w"), py::arg("x"), py::arg("y"), py::arg("anchors") = std::vector<std::pair<ParamVector, double>>{},
      py::arg("mu") = 0.0);

  m.def(
      "predict",
      [](const ModelSpec& spec, const ParamVector& w, const RowMatrix& x) {
        const std::vector<int> none(static_cast<std::size_t>(x.rows()), 0);
        return predict(spec, w, Batch(x, none));
      },
      py::arg("spec"), py::arg("w"), py::arg("x"));

  m.def(
      "agglomerate",
      [](const RowMatrix& d) {
        const Dendrogram dend = agglomerate(DistanceMatrix{d});
        std::vector<std::tuple<int, int, double, int>> out;
        for (const Merge& mg : dend.merges) out.emplace_back(mg.left, mg.right, mg.height, mg.count);
        return out;
      },
      py::arg("distances"), "UPGMA merges as (left, right, height, count); merge k creates node n + k.");

  m.def(
      "truncate",
      [](const RowMatrix& d, int levels) { return truncate(agglomerate(DistanceMatrix{d}), levels).group_of; },
      py::arg("distances"), py::arg("levels"), "Group index of every client at levels 1..K.");

  m.def(
      "synthetic_dataset",
      [](int classes, int input_dim, int per_class, double separation, std::uint64_t seed) {
        Dataset ds = synthetic_dataset(classes, input_dim, per_class, separation, seed);
        return std::make_pair(std::move(ds.features), std::move(ds.labels));
      },
      py::arg("classes"), py::arg("input_dim"), py::arg("samples_per_class"), py::arg("separation"),
      py::arg("seed"));

  m.def(
      "simulate",
      [](const py::dict& settings) {
        const ExperimentPlan plan = parse_config(std::nullopt, to_overrides(settings));
        const NamedRun& named = plan.runs.front();
        RunResult r;
        {
          py::gil_scoped_release release;
          const Federation fed = make_federation(named.config, load_partition(plan.data));
          r = run(fed, named.config);
        }
        std::vector<py::dict> history;
        for (const auto& row : r.history) history.push_back(metrics_dict(row));
        return history;
      },
      py::arg("settings") = py::dict(), "Runs one configured experiment in memory and returns per-round metrics.");

  m.def(
      "run_plan",
      [](const py::dict& settings) {
        const ExperimentPlan plan = parse_config(std::nullopt, to_overrides(settings));
        std::ostringstream log;
        int code = 0;
        {
          py::gil_scoped_release release;
          code = run_plan(plan, log);
        }
        return std::make_pair(code, log.str());
      },
      py::arg("settings") = py::dict(), "Runs the plan and writes its artifacts; returns (exit code, log).");
}
