// Thin bindings; structured values cross the boundary as JSON text and the
// Python package converts them to dicts.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "epd/experiment.hpp"

namespace py = pybind11;
using namespace epd;
using nlohmann::json;

namespace {

json trajectory_json(const Trajectory& t) {
  return json{{"times", t.times}, {"states", t.states}, {"nfe", t.nfe}, {"para_nfe", t.para_nfe}};
}

std::string run_sampler_json(const std::string& solver, const GaussianMixture& g, const std::string& schedule,
                             std::size_t steps, const Vec& x, bool afs, double t_min, double t_max, double rho) {
  const auto s = build_schedule(parse_schedule_kind(schedule), steps, t_min, t_max, rho);
  py::gil_scoped_release release;
  return trajectory_json(run_sampler(parse_solver_kind(solver), g, s, x, afs)).dump();
}

std::string run_epd_json(const std::string& params_json, const GaussianMixture& g, const Vec& x, std::size_t workers) {
  const EpdParams p = params_from_json(json::parse(params_json));
  py::gil_scoped_release release;
  Executor ex(workers);
  return trajectory_json(run_epd(p, g, ex, p.schedule(), x, p.plugin)).dump();
}

std::string train_json(const std::string& config_json, const GaussianMixture& g, std::size_t workers) {
  const TrainConfig tc = experiment_config_from_json(json::parse(config_json)).train;
  py::gil_scoped_release release;
  Executor ex(workers);
  auto [params, log] = train(tc, g, ex);
  std::ostringstream csv;
  write_train_log_csv(csv, log, false);
  return json{{"params", params_to_json(params)},
              {"monitor_loss", log.monitor_loss},
              {"initial_monitor_loss", log.initial_monitor_loss},
              {"iterations_run", log.iterations_run},
              {"log_csv", csv.str()}}
      .dump();
}

std::string run_experiment_json(const std::string& config_path, std::size_t workers) {
  const ExperimentConfig c = load_experiment_config(config_path);
  py::gil_scoped_release release;
  Executor ex(workers);
  const auto result = run_experiment(c, ex);
  json rows = json::array();
  for (const auto& r : result.rows)
    rows.push_back({{"solver", r.solver},
                    {"K", r.K},
                    {"para_nfe", r.para_nfe},
                    {"nfe", r.nfe},
                    {"steps", r.steps},
                    {"seeds", r.seeds},
                    {"mean_endpoint_error", r.mean_endpoint_error},
                    {"node_errors", r.node_errors},
                    {"status", r.status}});
  return rows.dump();
}

std::string validate_json(const std::vector<std::string>& paths) {
  std::vector<std::filesystem::path> ps(paths.begin(), paths.end());
  const auto report = validate_fixtures(ps);
  json out = json::array();
  for (const auto& e : report.entries)
    out.push_back({{"path", e.path.string()}, {"ok", e.ok}, {"violations", e.violations},
                   {"output_scaling", e.output_scaling}});
  return out.dump();
}

}  // namespace

PYBIND11_MODULE(_epd, m) {
  py::register_exception<TrainingDiverged>(m, "TrainingDiverged", PyExc_RuntimeError);
  py::register_exception<BranchError>(m, "BranchError", PyExc_RuntimeError);

  py::class_<GaussianMixture>(m, "GaussianMixture")
      .def_static("from_json", [](const std::string& s) { return GaussianMixture::from_json(json::parse(s)); })
      .def("to_json", [](const GaussianMixture& g) { return g.to_json().dump(); })
      .def_property_readonly("dim", &GaussianMixture::dim)
      .def("noise_prediction", [](const GaussianMixture& g, const Vec& x, double t) { return g.noise_prediction(x, t); })
      .def("score", [](const GaussianMixture& g, const Vec& x, double t) { return g.score(x, t); })
      .def("log_density", [](const GaussianMixture& g, const Vec& x, double t) { return g.log_density(x, t); });

  m.def("default_gmm", &default_gmm);
  m.def("single_gaussian", &single_gaussian);
  m.def("closed_form_flow", [](const Vec& mean, const Vec& var, const Vec& x, double t_from, double t_to) {
    return closed_form_flow(mean, var, x, t_from, t_to);
  });
  m.def(
      "build_schedule",
      [](const std::string& kind, std::size_t steps, double t_min, double t_max, double rho) {
        return build_schedule(parse_schedule_kind(kind), steps, t_min, t_max, rho).times;
      },
      py::arg("kind"), py::arg("steps"), py::arg("t_min") = kDefaultTMin, py::arg("t_max") = kDefaultTMax,
      py::arg("rho") = kDefaultRho);
  m.def("resolve_steps", [](const std::string& solver, std::size_t para_nfe, bool afs) {
    return resolve_steps(parse_solver_kind(solver), para_nfe, afs);
  });
  m.def("_run_sampler", &run_sampler_json);
  m.def("_run_epd", &run_epd_json);
  m.def("_train", &train_json);
  m.def("_run_experiment", &run_experiment_json);
  m.def("_validate_params", &validate_json);
  m.def("_initial_params", [](std::size_t K, std::size_t steps) { return params_to_json(initial_params(K, steps)).dump(); });
}
