#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cmath>
#include <string>

#include "agesel/config.hpp"
#include "agesel/error.hpp"
#include "agesel/experiment.hpp"
#include "agesel/selection.hpp"
#include "agesel/theory.hpp"

namespace py = pybind11;
using nlohmann::json;

namespace {

json record_json(const agesel::RoundRecord& r) {
  json j{{"round", r.round},
         {"comm_cost", r.comm_cost},
         {"cumulative_cost", r.cumulative_cost},
         {"ages", r.ages},
         {"num_infrequent", r.num_infrequent},
         {"num_age_selected", r.num_age_selected},
         {"download_set", r.download_set},
         {"upload_set", r.upload_set}};
  j["loss"] = r.loss ? json(*r.loss) : json(nullptr);
  j["accuracy"] = r.accuracy ? json(*r.accuracy) : json(nullptr);
  j["squared_grad_norm"] = r.squared_grad_norm ? json(*r.squared_grad_norm) : json(nullptr);
  return j;
}

json summary_json(const agesel::RunSummary& s, bool with_trace) {
  json j{{"label", s.label},
         {"strategy", std::string(agesel::to_string(s.kind))},
         {"run", s.run},
         {"seed", s.seed},
         {"rounds_to_target", s.rounds_to_target},
         {"reached_target", s.reached_target},
         {"total_comm_cost", s.total_comm_cost},
         {"diverged", s.diverged},
         {"error", s.error}};
  j["final_accuracy"] = s.final_accuracy ? json(*s.final_accuracy) : json(nullptr);
  if (with_trace) {
    j["trace"] = json::array();
    for (const auto& r : s.trace) j["trace"].push_back(record_json(r));
  }
  return j;
}

// Config and results cross the boundary as JSON text; the Python side decodes.
std::string run_experiment_json(const std::string& config, bool write_files, bool with_trace) {
  const agesel::ExperimentConfig cfg = agesel::config_from_json(json::parse(config));
  std::vector<agesel::RunSummary> runs;
  {
    py::gil_scoped_release release;
    runs = agesel::run_experiment(cfg, agesel::RunOptions{write_files, true, nullptr});
  }
  json out{{"runs", json::array()}, {"comparison", agesel::to_json(agesel::compare_report(runs))}};
  for (const auto& s : runs) out["runs"].push_back(summary_json(s, with_trace));
  return out.dump();
}

std::string lemma_json(const std::string& constants, double c, std::size_t J) {
  const agesel::TheoryConstants k = agesel::theory_from_json(json::parse(constants));
  const agesel::BoundReport rep = c > 0.0 ? agesel::make_bound_report(k, c) : agesel::make_bound_report(k);
  json out{{"Z1", rep.Z1},           {"Z2", rep.Z2}, {"c_upper", rep.c_upper}, {"c_used", rep.c_used},
           {"stepsize_ok", rep.stepsize_ok}};
  out["V"] = std::isnan(rep.V) ? json(nullptr) : json(rep.V);
  if (J > 0) {
    const double b = rep.bound_at(J);
    out["bound"] = std::isnan(b) ? json(nullptr) : json(b);
  }
  return out.dump();
}

}  // namespace

PYBIND11_MODULE(_agesel, m) {
  m.doc() = "Local-SGD parameter-server simulator";

  auto base = py::register_exception<agesel::Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<agesel::ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<agesel::FormatError>(m, "FormatError", base.ptr());
  py::register_exception<agesel::IoError>(m, "IoError", base.ptr());
  py::register_exception<agesel::NumericError>(m, "NumericError", base.ptr());

  m.def("default_config", [] { return agesel::to_json(agesel::ExperimentConfig{}).dump(); });
  m.def("normalize_config",
        [](const std::string& config) { return agesel::to_json(agesel::config_from_json(json::parse(config))).dump(); });
  m.def("run_experiment", &run_experiment_json, py::arg("config"), py::arg("write_files") = false,
        py::arg("with_trace") = false);
  m.def("bound_report", &lemma_json, py::arg("constants"), py::arg("c") = 0.0, py::arg("J") = 0);
  m.def(
      "select_download",
      [](const std::string& strategy, std::size_t S, std::size_t tau_max, std::vector<std::size_t> ages,
         const std::vector<double>& weights, std::size_t round, std::uint64_t seed) {
        const agesel::StrategyConfig sc{agesel::strategy_kind_from_string(strategy), S, tau_max};
        agesel::RandomStream rng(seed);
        return agesel::select_download(sc, agesel::AgeVector{std::move(ages), tau_max}, weights, round, rng);
      },
      py::arg("strategy"), py::arg("S"), py::arg("tau_max"), py::arg("ages"), py::arg("weights"), py::arg("round"),
      py::arg("seed") = 0);
}
