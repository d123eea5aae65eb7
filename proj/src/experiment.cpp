#include "epd/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace epd {

namespace fs = std::filesystem;
using nlohmann::json;

const ScheduleSpec& ExperimentConfig::schedule_for(SolverKind kind) const {
  const auto it = solver_schedules.find(kind);
  return it == solver_schedules.end() ? schedule : it->second;
}

namespace {

ScheduleSpec schedule_spec_from_json(const json& j, ScheduleSpec base) {
  if (!j.is_object()) throw InvalidArgument("config: schedule must be an object");
  if (j.contains("kind")) base.kind = parse_schedule_kind(j.at("kind").get<std::string>());
  base.t_min = j.value("t_min", base.t_min);
  base.t_max = j.value("t_max", base.t_max);
  base.rho = j.value("rho", base.rho);
  if (!(base.t_min > 0.0) || !(base.t_max > base.t_min)) throw InvalidArgument("config: need 0 < t_min < t_max");
  return base;
}

CostMode parse_cost_mode(const std::string& s) {
  if (s == "busy") return CostMode::busy;
  if (s == "blocking") return CostMode::blocking;
  throw InvalidArgument("config: unknown latency mode '" + s + "'");
}

fs::path resolve(const fs::path& base_dir, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
}

void read_train(const json& j, TrainConfig& t) {
  t.inserted = j.value("inserted", t.inserted);
  if (j.contains("teacher")) t.teacher = parse_solver_kind(j.at("teacher").get<std::string>());
  t.teacher_afs = j.value("teacher_afs", t.teacher_afs);
  t.samples = j.value("samples", t.samples);
  t.batch = j.value("batch", t.batch);
  t.iterations = j.value("iterations", t.iterations);
  t.seed = j.value("seed", t.seed);
  t.adam.lr = j.value("lr", t.adam.lr);
  t.adam.beta1 = j.value("beta1", t.adam.beta1);
  t.adam.beta2 = j.value("beta2", t.adam.beta2);
  t.adam.eps = j.value("eps", t.adam.eps);
  t.fd_step = j.value("fd_step", t.fd_step);
  t.patience = j.value("patience", t.patience);
  t.min_rel_improvement = j.value("min_rel_improvement", t.min_rel_improvement);
  t.loss_floor = j.value("loss_floor", t.loss_floor);
  t.K = j.value("K", t.K);
  t.steps = j.value("steps", t.steps);
  t.plugin = j.value("plugin", t.plugin);
  t.bounds.s_width = j.value("s_width", t.bounds.s_width);
  t.bounds.sig_width = j.value("sig_width", t.bounds.sig_width);
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10e", v);
  return buf;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

}  // namespace

std::vector<std::uint64_t> parse_seeds(const json& j) {
  std::vector<std::uint64_t> seeds;
  if (j.is_array()) {
    for (const auto& s : j) seeds.push_back(s.get<std::uint64_t>());
  } else if (j.is_object()) {
    const auto base = j.value("base", std::uint64_t{0});
    const auto count = j.at("count").get<std::uint64_t>();
    for (std::uint64_t i = 0; i < count; ++i) seeds.push_back(base + i);
  } else {
    throw InvalidArgument("config: seeds must be a list or {base, count}");
  }
  if (seeds.empty()) throw InvalidArgument("config: seeds must be nonempty");
  return seeds;
}

ExperimentConfig experiment_config_from_json(const json& j, const fs::path& base_dir) {
  ExperimentConfig c;
  if (!j.is_object()) throw InvalidArgument("config: top level must be an object");
  if (j.contains("model")) {
    const auto& m = j.at("model");
    c.model = std::make_shared<GaussianMixture>(m.is_string() ? load_gmm(resolve(base_dir, m.get<std::string>()))
                                                              : GaussianMixture::from_json(m));
  }
  if (j.contains("schedule")) c.schedule = schedule_spec_from_json(j.at("schedule"), c.schedule);
  if (j.contains("solver_schedules"))
    for (const auto& [name, spec] : j.at("solver_schedules").items())
      c.solver_schedules[parse_solver_kind(name)] = schedule_spec_from_json(spec, c.schedule);
  if (j.contains("solvers")) {
    c.solvers.clear();
    for (const auto& s : j.at("solvers")) c.solvers.push_back(parse_solver_kind(s.get<std::string>()));
  }
  if (j.contains("k_values")) c.k_values = j.at("k_values").get<std::vector<std::size_t>>();
  if (j.contains("budgets")) c.budgets = j.at("budgets").get<std::vector<std::size_t>>();
  c.afs = j.value("afs", c.afs);
  if (j.contains("afs_variant")) c.afs_variant = parse_afs_variant(j.at("afs_variant").get<std::string>());
  c.seeds = j.contains("seeds") ? parse_seeds(j.at("seeds")) : parse_seeds(json{{"base", 1000}, {"count", 256}});
  if (j.contains("reference")) {
    const auto& r = j.at("reference");
    if (r.contains("solver")) c.reference_solver = parse_solver_kind(r.at("solver").get<std::string>());
    c.reference_steps = r.value("steps", c.reference_steps);
  }
  c.trajectory_exports = j.value("trajectory_exports", c.trajectory_exports);
  if (j.contains("output_dir")) c.output_dir = resolve(base_dir, j.at("output_dir").get<std::string>());
  c.workers = j.value("workers", c.workers);
  if (j.contains("latency")) {
    const auto& l = j.at("latency");
    c.latency.enabled = l.value("enabled", true);
    if (l.contains("cost_ms")) c.latency.cost_ns = std::llround(l.at("cost_ms").get<double>() * 1e6);
    if (l.contains("mode")) c.latency.mode = parse_cost_mode(l.at("mode").get<std::string>());
    if (l.contains("k_values")) c.latency.k_values = l.at("k_values").get<std::vector<std::size_t>>();
    if (l.contains("workers")) c.latency.workers = l.at("workers").get<std::vector<std::size_t>>();
    c.latency.options.reps = l.value("reps", c.latency.options.reps);
    c.latency.options.warmup = l.value("warmup", c.latency.options.warmup);
    c.latency.options.include_start_eval = l.value("include_start_eval", c.latency.options.include_start_eval);
  }
  if (j.contains("params")) c.params_path = resolve(base_dir, j.at("params").get<std::string>());
  if (j.contains("fixtures"))
    for (const auto& f : j.at("fixtures")) c.fixtures.push_back(resolve(base_dir, f.get<std::string>()));

  // Student defaults follow the EPD schedule and AFS flag; the train block may override.
  const ScheduleSpec& s = c.schedule_for(SolverKind::epd);
  c.train.schedule_kind = s.kind;
  c.train.t_min = s.t_min;
  c.train.t_max = s.t_max;
  c.train.rho = s.rho;
  c.train.afs = c.afs;
  c.train.afs_variant = c.afs_variant;
  if (j.contains("train")) read_train(j.at("train"), c.train);
  if (c.train.plugin) {
    const ScheduleSpec& p = c.schedule_for(SolverKind::epd_plugin);
    c.train.schedule_kind = p.kind;
    c.train.rho = p.rho;
  }

  if (c.workers == 0) throw InvalidArgument("config: workers must be >= 1");
  if (c.solvers.empty()) throw InvalidArgument("config: solver list is empty");
  for (std::size_t K : c.k_values)
    if (K == 0) throw InvalidArgument("config: K must be >= 1");
  for (std::size_t b : c.budgets)
    if (b == 0) throw InvalidArgument("config: budgets must be >= 1");
  return c;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw InvalidArgument("config " + path.string() + ": " + e.what());
  }
  return experiment_config_from_json(j, path.parent_path());
}

Vec seed_noise(std::uint64_t seed, double t_max, std::size_t dim) {
  std::mt19937_64 rng(seed);
  return sample_initial(rng, t_max, dim, 1).front();
}

std::optional<std::size_t> resolve_steps(SolverKind kind, std::size_t para_nfe, bool afs) {
  const std::size_t shifted = para_nfe + (afs ? 1 : 0);
  const std::size_t depth = (kind == SolverKind::ddim || kind == SolverKind::ipndm) ? 1 : 2;
  if (shifted % depth != 0 || shifted / depth == 0) return std::nullopt;
  return shifted / depth;
}

MetricsRow compute_trajectory_metrics(std::span<const Trajectory> trajectories,
                                      std::span<const Trajectory> references) {
  if (trajectories.empty()) throw InvalidArgument("metrics: no trajectories");
  if (trajectories.size() != references.size()) throw InvalidArgument("metrics: trajectory/reference count mismatch");
  MetricsRow row;
  row.seeds = trajectories.size();
  row.nfe = trajectories.front().nfe;
  row.para_nfe = trajectories.front().para_nfe;
  row.steps = trajectories.front().times.size() - 1;
  row.node_errors.assign(trajectories.front().times.size(), 0.0);
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    const Trajectory& tr = trajectories[i];
    const Trajectory& ref = references[i];
    if (tr.times != trajectories.front().times) throw InvalidArgument("metrics: trajectories use different nodes");
    std::size_t r = 0;
    for (std::size_t node = 0; node < tr.times.size(); ++node) {
      while (r < ref.times.size() && ref.times[r] != tr.times[node]) ++r;
      if (r == ref.times.size())
        throw InvalidArgument("metrics: node t=" + format_double(tr.times[node]) + " missing from reference");
      row.node_errors[node] += std::sqrt(squared_distance(tr.states[node], ref.states[r]));
    }
  }
  for (double& e : row.node_errors) e /= static_cast<double>(row.seeds);
  row.mean_endpoint_error = row.node_errors.back();
  return row;
}

void write_metrics_csv(std::ostream& out, std::span<const MetricsRow> rows) {
  out << "solver,K,para_nfe,nfe,steps,seeds,mean_endpoint_error,node_errors,status\n";
  for (const auto& r : rows) {
    out << r.solver << ',' << r.K << ',' << r.para_nfe << ',' << r.nfe << ',' << r.steps << ',' << r.seeds << ',';
    out << (r.status == "ok" ? format_double(r.mean_endpoint_error) : "") << ',';
    for (std::size_t i = 0; i < r.node_errors.size(); ++i) out << (i ? ";" : "") << format_double(r.node_errors[i]);
    out << ',' << r.status << '\n';
  }
}

Trajectory reference_trajectory(const NoiseOracle& oracle, const TimeSchedule& student, SolverKind solver,
                                std::size_t reference_steps, std::span<const double> x_init) {
  const std::size_t n = student.steps();
  const std::size_t per = (reference_steps + n - 1) / n;
  const TimeSchedule fine = refine_for_teacher(student, per > 0 ? per - 1 : 0);
  return run_sampler(solver, oracle, fine, x_init, false);
}

namespace {

struct RowPlan {
  SolverKind kind;
  std::size_t K = 0;
  std::size_t budget = 0;
  std::string label;
};

std::string row_label(SolverKind kind, std::size_t K, std::size_t budget) {
  std::string s = to_string(kind);
  if (kind == SolverKind::epd || kind == SolverKind::epd_plugin) s += "-K" + std::to_string(K);
  return s + "-nfe" + std::to_string(budget);
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config, Executor& executor) {
  if (config.seeds.empty()) throw InvalidArgument("experiment: seeds must be nonempty");
  const GaussianMixture& oracle = *config.model;
  fs::create_directories(config.output_dir);

  std::vector<RowPlan> plans;
  for (SolverKind kind : config.solvers)
    for (std::size_t budget : config.budgets) {
      if (kind == SolverKind::epd || kind == SolverKind::epd_plugin) {
        for (std::size_t K : config.k_values) plans.push_back({kind, K, budget, row_label(kind, K, budget)});
      } else {
        plans.push_back({kind, 0, budget, row_label(kind, 0, budget)});
      }
    }

  std::vector<Vec> noises;
  for (std::uint64_t seed : config.seeds) noises.push_back(seed_noise(seed, config.schedule.t_max, oracle.dim()));

  // reference trajectories keyed by student node times
  std::map<Vec, std::vector<Trajectory>> ref_cache;
  auto references_for = [&](const TimeSchedule& s) -> const std::vector<Trajectory>& {
    auto it = ref_cache.find(s.times);
    if (it != ref_cache.end()) return it->second;
    std::vector<Trajectory> refs(noises.size());
    executor.parallel_for(noises.size(), [&](std::size_t i) {
      refs[i] = reference_trajectory(oracle, s, config.reference_solver, config.reference_steps, noises[i]);
    });
    return ref_cache.emplace(s.times, std::move(refs)).first->second;
  };

  ExperimentResult result;
  for (const RowPlan& plan : plans) {
    MetricsRow row;
    row.solver = to_string(plan.kind);
    row.K = plan.K;
    row.para_nfe = plan.budget;
    const auto steps = resolve_steps(plan.kind, plan.budget, config.afs);
    if (!steps) {
      row.status = "unachievable";
      result.rows.push_back(row);
      continue;
    }
    const ScheduleSpec& spec = config.schedule_for(plan.kind);
    const TimeSchedule schedule = spec.build(*steps);

    std::vector<Trajectory> trajs(noises.size());
    if (plan.kind == SolverKind::epd || plan.kind == SolverKind::epd_plugin) {
      TrainConfig tc = config.train;
      tc.K = plan.K;
      tc.steps = *steps;
      tc.plugin = plan.kind == SolverKind::epd_plugin;
      tc.schedule_kind = spec.kind;
      tc.t_min = spec.t_min;
      tc.t_max = spec.t_max;
      tc.rho = spec.rho;
      tc.afs = config.afs;
      tc.afs_variant = config.afs_variant;
      auto [params, log] = train(tc, oracle, executor);
      params.extra["label"] = plan.label;
      save_params(params, config.output_dir / ("params_" + plan.label + ".json"));
      std::ostringstream log_csv;
      write_train_log_csv(log_csv, log, false);
      write_file(config.output_dir / ("trainlog_" + plan.label + ".csv"), log_csv.str());
      executor.parallel_for(noises.size(), [&](std::size_t i) {
        trajs[i] = run_epd(params, oracle, executor, schedule, noises[i], tc.plugin, config.afs_variant);
      });
      result.trained.emplace(plan.label, std::move(params));
    } else {
      executor.parallel_for(noises.size(), [&](std::size_t i) {
        trajs[i] = run_sampler(plan.kind, oracle, schedule, noises[i], config.afs, config.afs_variant);
      });
    }

    const auto& refs = references_for(schedule);
    MetricsRow computed = compute_trajectory_metrics(trajs, refs);
    computed.solver = row.solver;
    computed.K = row.K;
    if (computed.para_nfe != plan.budget) throw std::logic_error("experiment: para_nfe accounting mismatch");
    result.rows.push_back(computed);

    const std::size_t exports = std::min(config.trajectory_exports, trajs.size());
    for (std::size_t i = 0; i < exports; ++i) {
      std::ostringstream csv;
      write_trajectory_csv(csv, trajs[i]);
      write_file(config.output_dir / ("traj_" + plan.label + "_" + std::to_string(config.seeds[i]) + ".csv"),
                 csv.str());
    }
  }

  std::ostringstream metrics;
  write_metrics_csv(metrics, result.rows);
  write_file(config.output_dir / "metrics.csv", metrics.str());

  if (config.latency.enabled) {
    const auto base = std::static_pointer_cast<const NoiseOracle>(config.model);
    const OraclePtr costly = with_cost(base, config.latency.cost_ns, config.latency.mode);
    result.latency = bench_step_latency(*costly, config.latency.k_values, config.latency.workers,
                                        config.latency.options);
    std::ostringstream lat;
    write_latency_csv(lat, *result.latency);
    write_file(config.output_dir / "latency.csv", lat.str());
  }
  return result;
}

bool FixtureReport::all_ok() const {
  for (const auto& e : entries)
    if (!e.ok) return false;
  return true;
}

FixtureEntry check_params_document(const json& j) {
  FixtureEntry entry;
  auto fail = [&](std::string msg) {
    entry.ok = false;
    entry.violations.push_back(std::move(msg));
  };
  Bounds bounds;
  if (j.contains("bounds")) {
    bounds.s_width = j.at("bounds").value("s_width", bounds.s_width);
    bounds.sig_width = j.at("bounds").value("sig_width", bounds.sig_width);
  }
  if (!j.contains("steps") || !j.at("steps").is_array() || j.at("steps").empty()) {
    fail("missing or empty 'steps' table");
    return entry;
  }
  const std::size_t K = j.value("K", j.at("steps").at(0).size());
  const double tol = 1e-12;
  const auto& steps = j.at("steps");
  for (std::size_t n = 0; n < steps.size(); ++n) {
    const auto& row = steps[n];
    const std::string where = "step n=" + std::to_string(n);
    if (!row.is_array() || row.size() != K) {
      fail(where + ": expected " + std::to_string(K) + " branches");
      entry.output_scaling.push_back(std::nan(""));
      continue;
    }
    double lam_sum = 0.0;
    double o = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      const std::string at = where + " branch k=" + std::to_string(k);
      const auto& b = row[k];
      const double r = b.value("r", std::nan(""));
      const double lam = b.value("lambda", std::nan(""));
      const double s = b.value("s", std::nan(""));
      const double sig = b.value("sigma", std::nan(""));
      if (!(r >= 0.0 && r <= 1.0)) fail(at + ": r=" + format_double(r) + " outside [0, 1]");
      if (!(lam >= 0.0)) fail(at + ": lambda=" + format_double(lam) + " negative");
      if (!(std::abs(s - 1.0) <= bounds.s_width / 2 + tol))
        fail(at + ": s=" + format_double(s) + " outside 1 +/- " + format_double(bounds.s_width / 2));
      if (!(std::abs(sig - 1.0) <= bounds.sig_width / 2 + tol))
        fail(at + ": sigma=" + format_double(sig) + " outside 1 +/- " + format_double(bounds.sig_width / 2));
      lam_sum += lam;
      o += lam * sig;
    }
    if (!(std::abs(lam_sum - 1.0) <= 1e-4)) fail(where + ": lambda sum " + format_double(lam_sum) + " != 1");
    o -= 1.0;
    if (!(std::abs(o) <= bounds.sig_width / 2 + 1e-4))
      fail(where + ": o_n=" + format_double(o) + " outside sigma band");
    entry.output_scaling.push_back(o);
  }
  return entry;
}

FixtureReport validate_fixtures(std::span<const fs::path> paths) {
  FixtureReport report;
  for (const auto& p : paths) {
    FixtureEntry entry;
    try {
      std::ifstream in(p);
      if (!in) throw InvalidArgument("cannot open");
      json j;
      in >> j;
      entry = check_params_document(j);
      if (entry.ok) params_from_json(j);  // full loader must agree
    } catch (const std::exception& e) {
      entry.ok = false;
      entry.violations.push_back(std::string("load failed: ") + e.what());
    }
    entry.path = p;
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace epd
