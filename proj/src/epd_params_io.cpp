#include <fstream>

#include "epd/epd_solver.hpp"

namespace epd {

namespace {
const char* mode_name(ParamMode m) { return m == ParamMode::raw ? "raw" : "constrained"; }

ParamMode parse_mode(const std::string& s) {
  if (s == "raw") return ParamMode::raw;
  if (s == "constrained") return ParamMode::constrained;
  throw InvalidArgument("params: unknown mode '" + s + "'");
}
}  // namespace

nlohmann::json params_to_json(const EpdParams& params) {
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& row : params.steps) {
    nlohmann::json branches = nlohmann::json::array();
    for (const auto& b : row) branches.push_back({{"r", b.r}, {"s", b.s}, {"sigma", b.sig}, {"lambda", b.lam}});
    steps.push_back(std::move(branches));
  }
  nlohmann::json j = params.extra.is_object() ? params.extra : nlohmann::json::object();
  j["K"] = params.K;
  j["bounds"] = {{"s_width", params.bounds.s_width}, {"sig_width", params.bounds.sig_width}};
  j["mode"] = mode_name(params.mode);
  j["afs"] = params.afs;
  j["plugin"] = params.plugin;
  j["schedule"] = {{"kind", to_string(params.schedule_kind)},
                   {"t_min", params.t_min},
                   {"t_max", params.t_max},
                   {"rho", params.rho}};
  j["steps"] = std::move(steps);
  return j;
}

EpdParams params_from_json(const nlohmann::json& j) {
  EpdParams p;
  try {
    p.K = j.at("K").get<std::size_t>();
    if (j.contains("bounds")) {
      const auto& b = j.at("bounds");
      p.bounds.s_width = b.value("s_width", p.bounds.s_width);
      p.bounds.sig_width = b.value("sig_width", p.bounds.sig_width);
    }
    p.mode = parse_mode(j.value("mode", std::string("raw")));
    p.afs = j.value("afs", true);
    p.plugin = j.value("plugin", false);
    if (j.contains("schedule")) {
      const auto& s = j.at("schedule");
      p.schedule_kind = parse_schedule_kind(s.value("kind", std::string("polynomial")));
      p.t_min = s.value("t_min", kDefaultTMin);
      p.t_max = s.value("t_max", kDefaultTMax);
      p.rho = s.value("rho", kDefaultRho);
    }
    for (const auto& row : j.at("steps")) {
      std::vector<BranchParams> branches;
      for (const auto& b : row)
        branches.push_back({b.at("r").get<double>(), b.at("lambda").get<double>(), b.at("s").get<double>(),
                            b.at("sigma").get<double>()});
      p.steps.push_back(std::move(branches));
    }
    for (const auto& [key, value] : j.items()) {
      if (key == "K" || key == "bounds" || key == "mode" || key == "afs" || key == "plugin" ||
          key == "schedule" || key == "steps")
        continue;
      p.extra[key] = value;
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("params: schema violation: ") + e.what());
  }
  p.validate();
  return p;
}

EpdParams load_params(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("params: cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument("params: " + path.string() + ": " + e.what());
  }
  return params_from_json(j);
}

void save_params(const EpdParams& params, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("params: cannot write " + path.string());
  out << params_to_json(params).dump(2) << '\n';
}

}  // namespace epd
