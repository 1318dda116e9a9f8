#include <optional>
#include <string>
#include <vector>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "pathflow/acceptance.hpp"
#include "pathflow/benchmarks.hpp"
#include "pathflow/error.hpp"
#include "pathflow/experiment.hpp"
#include "pathflow/forward.hpp"
#include "pathflow/parallel.hpp"

namespace py = pybind11;
using nlohmann::json;

namespace {

// JSON crosses the boundary as text; the Python wrapper handles dict conversion.
std::string run_json(const std::string& config) {
  return pathflow::run_experiment(pathflow::parse_config(json::parse(config))).to_json().dump();
}

py::array_t<double> simulate_present(const std::string& benchmark, int n_steps, int n_paths, std::uint64_t seed,
                                     const std::vector<double>& x0) {
  const pathflow::Benchmark& b = pathflow::find_benchmark(benchmark);
  const pathflow::PathGrid grid(b.horizon, n_steps);
  const pathflow::CoefficientSet c = b.coefficients();
  const pathflow::LiftedState start = x0.empty() ? pathflow::sample_profile(b.profile, grid).state
                                                 : pathflow::LiftedState::constant(grid, x0);
  std::optional<pathflow::ForwardEnsemble> run;
  {
    py::gil_scoped_release release;
    run.emplace(pathflow::simulate_forward(c, 0.0, start, {seed, n_paths, c.noise_dim, grid}));
  }
  const pathflow::ForwardEnsemble& ens = *run;
  py::array_t<double> out({ens.n_paths(), ens.n_steps() + 1, ens.dim()});
  auto v = out.mutable_unchecked<3>();
  for (int p = 0; p < ens.n_paths(); ++p) {
    for (int k = 0; k <= ens.n_steps(); ++k) {
      const auto y = ens.present(p, k);
      for (int i = 0; i < ens.dim(); ++i) v(p, k, i) = y[i];
    }
  }
  return out;
}

py::list accept(const std::string& suite, const std::vector<int>& only) {
  pathflow::AcceptanceOptions o;
  o.suite = suite == "full" ? pathflow::Suite::kFull : pathflow::Suite::kFast;
  o.only = only;
  std::vector<pathflow::CriterionResult> results;
  {
    py::gil_scoped_release release;
    results = pathflow::run_acceptance(o);
  }
  py::list rows;
  for (const auto& r : results) {
    py::dict d;
    d["id"] = r.id;
    d["name"] = r.name;
    d["passed"] = r.passed;
    d["seconds"] = r.seconds;
    d["detail"] = r.detail;
    rows.append(d);
  }
  return rows;
}

}  // namespace

PYBIND11_MODULE(_pathflow, m) {
  m.doc() = "Path-dependent Monte Carlo: lifted states, regression BSDEs and control on the history";

  static py::exception<pathflow::Error> error(m, "PathflowError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const pathflow::Error& e) {
      error(e.what());
    }
  });

  m.def("build_id", &pathflow::build_id);
  m.def("benchmarks_json", [] { return pathflow::benchmark_table().dump(); });
  m.def("run_json", &run_json, py::arg("config"), py::call_guard<py::gil_scoped_release>());
  m.def("simulate_present", &simulate_present, py::arg("benchmark"), py::arg("n_steps"), py::arg("n_paths"),
        py::arg("seed"), py::arg("x0") = std::vector<double>{},
        "Present-coordinate trajectories, shape (n_paths, n_steps + 1, d).");
  m.def("accept", &accept, py::arg("suite") = "fast", py::arg("only") = std::vector<int>{});
  m.def("set_thread_count", &pathflow::set_thread_count, py::arg("n"));
  m.def("thread_count", &pathflow::thread_count);
}
