#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "epd/experiment.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const char* kBudgetHelp =
    "Budget (Para.NFE) to step count, with AFS:\n"
    "  ddim, ipndm                  N = budget + 1\n"
    "  heun, dpm2, epd, epd_plugin  N = (budget + 1) / 2, odd budgets only\n"
    "Without AFS drop the +1. Unachievable budgets are reported per row.\n";

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> workers;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "experiment config (JSON)");
  sub->add_option("--seed", c.seed, "override training seed and first evaluation seed");
  sub->add_option("--out", c.out, "override output directory");
  sub->add_option("--workers", c.workers, "override worker count");
}

epd::ExperimentConfig load(const Common& c) {
  epd::ExperimentConfig cfg = c.config.empty() ? epd::experiment_config_from_json(json::object())
                                               : epd::load_experiment_config(c.config);
  if (c.seed) {
    cfg.train.seed = *c.seed;
    const std::size_t n = cfg.seeds.size();
    cfg.seeds.clear();
    for (std::size_t i = 0; i < n; ++i) cfg.seeds.push_back(*c.seed + i);
  }
  if (c.out) cfg.output_dir = *c.out;
  if (c.workers) {
    if (*c.workers == 0) throw epd::InvalidArgument("--workers must be >= 1");
    cfg.workers = *c.workers;
  }
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

void print_rows(const std::vector<epd::MetricsRow>& rows) {
  std::printf("%-12s %3s %8s %5s %6s %14s\n", "solver", "K", "para_nfe", "nfe", "steps", "endpoint_err");
  for (const auto& r : rows) {
    if (r.status != "ok") {
      std::printf("%-12s %3zu %8zu %5s %6s %14s\n", r.solver.c_str(), r.K, r.para_nfe, "-", "-", r.status.c_str());
      continue;
    }
    std::printf("%-12s %3zu %8zu %5zu %6zu %14.6g\n", r.solver.c_str(), r.K, r.para_nfe, r.nfe, r.steps,
                r.mean_endpoint_error);
  }
}

int cmd_teacher(const Common& c, std::optional<std::size_t> count) {
  auto cfg = load(c);
  if (count) cfg.train.samples = *count;
  cfg.train.validate();
  fs::create_directories(cfg.output_dir);
  const epd::TeacherSet set = epd::training_teacher_set(cfg.train, *cfg.model);
  std::ostringstream csv;
  csv << "sample,node,t";
  for (std::size_t d = 0; d < cfg.model->dim(); ++d) csv << ",x" << d;
  csv << '\n';
  char buf[40];
  for (std::size_t i = 0; i < set.size(); ++i)
    for (std::size_t n = 0; n < set.refs[i].size(); ++n) {
      std::snprintf(buf, sizeof buf, "%.17g", set.schedule.times[n]);
      csv << i << ',' << n << ',' << buf;
      for (double v : set.refs[i][n]) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        csv << ',' << buf;
      }
      csv << '\n';
    }
  write_text(cfg.output_dir / "teacher.csv", csv.str());
  std::printf("teacher: %zu samples x %zu nodes -> %s\n", set.size(), set.schedule.times.size(),
              (cfg.output_dir / "teacher.csv").string().c_str());
  return 0;
}

int cmd_train(const Common& c) {
  auto cfg = load(c);
  epd::Executor executor(cfg.workers);
  fs::create_directories(cfg.output_dir);
  auto [params, log] = epd::train(cfg.train, *cfg.model, executor);
  epd::save_params(params, cfg.output_dir / "params.json");
  std::ostringstream csv;
  epd::write_train_log_csv(csv, log);
  write_text(cfg.output_dir / "trainlog.csv", csv.str());
  std::printf("train: K=%zu N=%zu iterations=%zu%s monitor loss %.6g -> %.6g\n", cfg.train.K, cfg.train.steps,
              log.iterations_run, log.stopped_early ? " (early stop)" : "", log.initial_monitor_loss,
              log.monitor_loss.empty() ? log.initial_monitor_loss : log.monitor_loss.back());
  return 0;
}

int cmd_sample(const Common& c, std::optional<std::string> params_path, std::optional<std::string> solver,
               std::optional<std::size_t> budget) {
  auto cfg = load(c);
  if (params_path) cfg.params_path = *params_path;
  epd::Executor executor(cfg.workers);
  fs::create_directories(cfg.output_dir);

  std::optional<epd::EpdParams> params;
  epd::SolverKind kind;
  epd::TimeSchedule schedule;
  if (solver) {
    kind = epd::parse_solver_kind(*solver);
  } else if (cfg.params_path) {
    kind = epd::SolverKind::epd;
  } else {
    throw epd::InvalidArgument("sample: give --params or --solver");
  }
  if (kind == epd::SolverKind::epd || kind == epd::SolverKind::epd_plugin) {
    if (!cfg.params_path) throw epd::InvalidArgument("sample: EPD sampling needs --params");
    params = epd::load_params(*cfg.params_path);
    kind = params->plugin ? epd::SolverKind::epd_plugin : epd::SolverKind::epd;
    schedule = params->schedule();
  } else {
    if (!budget) throw epd::InvalidArgument("sample: baseline sampling needs --budget");
    const auto steps = epd::resolve_steps(kind, *budget, cfg.afs);
    if (!steps) throw epd::InvalidArgument("sample: budget " + std::to_string(*budget) + " unachievable for " + *solver);
    schedule = cfg.schedule_for(kind).build(*steps);
  }

  std::vector<epd::Trajectory> trajs(cfg.seeds.size()), refs(cfg.seeds.size());
  executor.parallel_for(cfg.seeds.size(), [&](std::size_t i) {
    const epd::Vec x = epd::seed_noise(cfg.seeds[i], schedule.t_max(), cfg.model->dim());
    trajs[i] = params ? epd::run_epd(*params, *cfg.model, executor, schedule, x, params->plugin,
                                     cfg.afs_variant)
                      : epd::run_sampler(kind, *cfg.model, schedule, x, cfg.afs, cfg.afs_variant);
    refs[i] = epd::reference_trajectory(*cfg.model, schedule, cfg.reference_solver, cfg.reference_steps, x);
  });
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    std::ostringstream csv;
    epd::write_trajectory_csv(csv, trajs[i]);
    write_text(cfg.output_dir / ("traj_" + epd::to_string(kind) + "_" + std::to_string(cfg.seeds[i]) + ".csv"),
               csv.str());
  }
  epd::MetricsRow row = epd::compute_trajectory_metrics(trajs, refs);
  row.solver = epd::to_string(kind);
  row.K = params ? params->K : 0;
  std::ostringstream metrics;
  epd::write_metrics_csv(metrics, std::vector<epd::MetricsRow>{row});
  write_text(cfg.output_dir / "metrics.csv", metrics.str());
  print_rows({row});
  return 0;
}

int cmd_compare(const Common& c) {
  auto cfg = load(c);
  epd::Executor executor(cfg.workers);
  const auto result = epd::run_experiment(cfg, executor);
  print_rows(result.rows);
  if (result.latency) {
    for (const auto& r : result.latency->rows)
      std::printf("latency K=%zu workers=%zu: %.3f ms +/- %.3f\n", r.K, r.workers, r.mean_ms, r.ci95_ms);
  }
  std::printf("results in %s\n", cfg.output_dir.string().c_str());
  return 0;
}

int cmd_bench(const Common& c) {
  auto cfg = load(c);
  fs::create_directories(cfg.output_dir);
  const auto base = std::static_pointer_cast<const epd::NoiseOracle>(cfg.model);
  const auto costly = epd::with_cost(base, cfg.latency.cost_ns, cfg.latency.mode);
  const auto report =
      epd::bench_step_latency(*costly, cfg.latency.k_values, cfg.latency.workers, cfg.latency.options);
  std::ostringstream csv;
  epd::write_latency_csv(csv, report);
  write_text(cfg.output_dir / "latency.csv", csv.str());
  std::cout << csv.str();
  return 0;
}

int cmd_validate(const Common& c, const std::vector<std::string>& extra) {
  auto cfg = load(c);
  std::vector<fs::path> paths = cfg.fixtures;
  for (const auto& p : extra) paths.emplace_back(p);
  if (paths.empty()) throw epd::InvalidArgument("validate-params: no parameter files given");
  const auto report = epd::validate_fixtures(paths);
  for (const auto& e : report.entries) {
    std::printf("%s %s o_n=[", e.ok ? "OK  " : "FAIL", e.path.string().c_str());
    for (std::size_t n = 0; n < e.output_scaling.size(); ++n) std::printf("%s%.5f", n ? ", " : "", e.output_scaling[n]);
    std::printf("]\n");
    for (const auto& v : e.violations) std::printf("      %s\n", v.c_str());
  }
  if (!report.all_ok()) {
    json bad = json::array();
    for (const auto& e : report.entries)
      if (!e.ok) bad.push_back({{"path", e.path.string()}, {"violations", e.violations}});
    std::cerr << json{{"error", {{"type", "invalid_params"}, {"files", bad}}}}.dump() << '\n';
    return 4;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ensemble parallel direction sampler: teacher generation, training, sampling, comparison"};
  app.footer(kBudgetHelp);
  app.require_subcommand(1);

  Common common;
  std::optional<std::size_t> count;
  std::optional<std::string> params_path, solver;
  std::optional<std::size_t> budget;
  std::vector<std::string> extra;

  auto* teacher = app.add_subcommand("teacher", "generate the teacher set (teacher.csv)");
  add_common(teacher, common);
  teacher->add_option("--count", count, "number of teacher samples");
  auto* train = app.add_subcommand("train", "distil EPD parameters (params.json, trainlog.csv)");
  add_common(train, common);
  auto* sample = app.add_subcommand("sample", "run a solver over the evaluation seeds");
  add_common(sample, common);
  sample->add_option("--params", params_path, "trained parameter file");
  sample->add_option("--solver", solver, "ddim|heun|dpm2|ipndm (or epd with --params)");
  sample->add_option("--budget", budget, "Para.NFE budget for baseline solvers");
  auto* compare = app.add_subcommand("compare", "full solver x budget x K grid (metrics.csv)");
  add_common(compare, common);
  auto* bench = app.add_subcommand("bench", "per-step latency vs K and workers (latency.csv)");
  add_common(bench, common);
  auto* validate = app.add_subcommand("validate-params", "check parameter files against their bounds");
  add_common(validate, common);
  validate->add_option("files", extra, "parameter files");

  CLI11_PARSE(app, argc, argv);

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    if (*teacher) return cmd_teacher(common, count);
    if (*train) return cmd_train(common);
    if (*sample) return cmd_sample(common, params_path, solver, budget);
    if (*compare) return cmd_compare(common);
    if (*bench) return cmd_bench(common);
    if (*validate) return cmd_validate(common, extra);
  } catch (const epd::InvalidArgument& e) {
    std::cerr << json{{"error", {{"command", name}, {"type", "invalid_argument"}, {"message", e.what()}}}}.dump()
              << '\n';
    return 2;
  } catch (const epd::TrainingDiverged& e) {
    std::cerr << json{{"error", {{"command", name}, {"type", "training_diverged"}, {"message", e.what()}}}}.dump()
              << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << json{{"error", {{"command", name}, {"type", "runtime_error"}, {"message", e.what()}}}}.dump()
              << '\n';
    return 1;
  }
  return 1;
}
