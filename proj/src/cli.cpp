#include "lcot/cli.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>
#include <yaml-cpp/yaml.h>

#include "lcot/control.hpp"
#include "lcot/cost.hpp"
#include "lcot/dynamic.hpp"
#include "lcot/errors.hpp"
#include "lcot/io.hpp"
#include "lcot/linsys.hpp"
#include "lcot/transport.hpp"

namespace lcot {

using Json = nlohmann::ordered_json;

namespace {

const std::vector<std::string> kCommands{"flow", "controllability", "cost", "plan", "paths", "bb-verify"};

Json toJson(const Vector& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

Json toJson(const Matrix& m) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) out.push_back(toJson(Vector(m.row(i).transpose())));
  return out;
}

Json entriesJson(const TransportPlan& plan) {
  Json out = Json::array();
  for (const auto& e : plan.entries) out.push_back({{"i", e.i}, {"j", e.j}, {"mass", e.mass}});
  return out;
}

// Everything a command produces: the JSON summary, an optional table
// and the exit code.
struct Output {
  Json summary;
  std::string table;
  std::string tableName;
  int exitCode = 0;
};

struct Loaded {
  SystemDescription desc;
  std::optional<ControlSystem> system;
};

void loadSystem(const RunConfig& config, Loaded& loaded) {
  if (config.systemPath.empty()) throw UsageError("--system is required for '" + config.command + "'");
  loaded.desc = parseSystem(config.systemPath);
  FlowOptions fo;
  fo.gridSteps = config.gridSteps;
  fo.flowTol = config.tolerances.flowTol;
  loaded.system.emplace(buildFlow(loaded.desc.m, fo), loaded.desc.nInput);
}

SolverOptions solverOptions(const RunConfig& config) {
  SolverOptions opts;
  opts.solveTol = config.tolerances.solveTol;
  return opts;
}

Vector endpointArg(const std::string& text, const std::string& flag, int d) {
  if (text.empty()) throw UsageError(flag + " is required");
  Vector v = parseVector(text, flag);
  if (v.size() != d)
    throw UsageError(flag + " has " + std::to_string(v.size()) + " components, system dimension is " +
                     std::to_string(d));
  return v;
}

std::pair<DiscreteMeasure, DiscreteMeasure> measures(const RunConfig& config, int d) {
  if (config.muPath.empty() || config.nuPath.empty()) throw UsageError("--mu and --nu are required");
  DiscreteMeasure mu = readMeasure(config.muPath);
  DiscreteMeasure nu = readMeasure(config.nuPath);
  if (mu.dim() != d || nu.dim() != d)
    throw InputError("measure atoms must have dimension " + std::to_string(d));
  return {std::move(mu), std::move(nu)};
}

TransportPlan computePlan(const RunConfig& config, const ControlSystem& system,
                          const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                          const DualityExponents& exps, Matrix* costsOut = nullptr) {
  const Matrix costs = costMatrix(system, mu, nu, exps, solverOptions(config), config.threads);
  if (costsOut) *costsOut = costs;
  if (config.method == "sinkhorn") {
    SinkhornOptions sk;
    sk.epsilon = config.eps;
    return sinkhorn(costs, mu.weights, nu.weights, sk);
  }
  return solvePlan(costs, mu, nu);
}

Output runFlow(const RunConfig& config) {
  Loaded loaded;
  loadSystem(config, loaded);
  const FlowMap& flow = loaded.system->flow();
  Output out;
  out.summary["d"] = flow.dim();
  out.summary["T"] = flow.horizon();
  out.summary["gridSteps"] = flow.steps();
  out.summary["phi0T"] = toJson(flow.end());
  out.summary["phiT0"] = toJson(flow.backwardInverse(0));
  out.summary["consistencyDefect"] = flow.consistencyDefect();
  out.summary["opNormBoundM1"] = flow.opNormBoundM1();
  if (!config.flowQuery.empty()) {
    const Vector st = parseVector(config.flowQuery, "--query");
    if (st.size() != 2) throw UsageError("--query expects s,t");
    out.summary["query"] = {{"s", st(0)}, {"t", st(1)}, {"phi", toJson(flow.at(st(0), st(1)))}};
  }
  std::string table = "t";
  const int d = flow.dim();
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) table += ",phi" + std::to_string(i + 1) + std::to_string(j + 1);
  table += "\n";
  for (int k = 0; k <= flow.steps(); ++k) {
    table += formatDouble(flow.grid()[k]);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) table += "," + formatDouble(flow.forward(k)(i, j));
    table += "\n";
  }
  out.table = std::move(table);
  out.tableName = "flow.csv";
  return out;
}

Output runControllability(const RunConfig& config) {
  Loaded loaded;
  loadSystem(config, loaded);
  ControlOptions co;
  co.rankTol = config.tolerances.rankTol;
  using Method = ControllabilityReport::Method;
  ControllabilityReport report;
  std::string rankNote;
  try {
    report = analyzeControllability(loaded.desc.m, loaded.desc.nInput, loaded.system->flow(),
                                    Method::kBoth, co);
  } catch (const CapabilityError& e) {
    rankNote = e.what();
    report = analyzeControllability(loaded.desc.m, loaded.desc.nInput, loaded.system->flow(),
                                    Method::kGramian, co);
  }
  Output out;
  Json& s = out.summary;
  s["beta"] = report.beta;
  if (rankNote.empty()) {
    Json blocks = Json::array();
    for (const auto& b : report.blocks) blocks.push_back(toJson(b));
    s["blocks"] = blocks;
    s["rankMatrix"] = toJson(report.rankMatrix);
    s["singularValues"] = toJson(report.singularValues);
    s["numericalRank"] = report.numericalRank;
    s["rankControllable"] = report.rankControllable;
  } else {
    s["rankCondition"] = "unavailable: " + rankNote;
  }
  s["gramian"] = toJson(report.gramian);
  s["gramianEigenvalues"] = toJson(report.gramianEigenvalues);
  s["gramianMinEig"] = report.gramianMinEig;
  s["gramTol"] = report.gramTol;
  s["gramianControllable"] = report.gramianControllable;
  s["method"] = report.method == Method::kBoth ? "both" : "gramian";
  s["controllable"] = report.controllable;
  s["verdict"] = report.controllable ? "controllable" : "not controllable";
  std::string table = "index,singular_value\n";
  for (Eigen::Index i = 0; i < report.singularValues.size(); ++i)
    table += std::to_string(i) + "," + formatDouble(report.singularValues(i)) + "\n";
  out.table = std::move(table);
  out.tableName = "singular_values.csv";
  return out;
}

Output runCost(const RunConfig& config) {
  Loaded loaded;
  loadSystem(config, loaded);
  const ControlSystem& system = *loaded.system;
  const Vector x = endpointArg(config.x, "--x", system.dim());
  const Vector y = endpointArg(config.y, "--y", system.dim());
  const auto exps = DualityExponents::fromP(config.p);
  const OptimalControl oc = solvePoint(system, x, y, exps, solverOptions(config));
  Output out;
  out.summary["cost"] = oc.cost;
  out.summary["xi"] = toJson(oc.xi);
  out.summary["residual"] = oc.endpointResidual;
  out.summary["iterations"] = oc.solverIterations;
  out.summary["x"] = toJson(x);
  out.summary["y"] = toJson(y);
  std::string table = "t";
  for (int i = 0; i < system.inputs(); ++i) table += ",a" + std::to_string(i + 1);
  table += "\n";
  const auto& grid = system.flow().grid();
  for (std::size_t k = 0; k < grid.size(); ++k) {
    table += formatDouble(grid[k]);
    for (int i = 0; i < system.inputs(); ++i) table += "," + formatDouble(oc.alphaSamples[k](i));
    table += "\n";
  }
  out.table = std::move(table);
  out.tableName = "control.csv";
  return out;
}

Output runPlan(const RunConfig& config) {
  Loaded loaded;
  loadSystem(config, loaded);
  const auto [mu, nu] = measures(config, loaded.system->dim());
  const auto exps = DualityExponents::fromP(config.p);
  const TransportPlan plan = computePlan(config, *loaded.system, mu, nu, exps);
  Output out;
  out.summary["cost"] = plan.cost;
  out.summary["iterations"] = plan.iterations;
  out.summary["method"] = config.method;
  if (config.method == "sinkhorn") out.summary["epsilon"] = config.eps;
  out.summary["entries"] = entriesJson(plan);
  out.table = planCsv(plan);
  out.tableName = "plan.csv";
  return out;
}

Output runPaths(const RunConfig& config) {
  Loaded loaded;
  loadSystem(config, loaded);
  const ControlSystem& system = *loaded.system;
  const auto [mu, nu] = measures(config, system.dim());
  const auto exps = DualityExponents::fromP(config.p);
  const TransportPlan plan = computePlan(config, system, mu, nu, exps);
  EnsembleOptions eo;
  eo.solver = solverOptions(config);
  eo.threads = config.threads;
  const PathEnsemble ensemble = planToEnsemble(plan, mu, nu, system, exps, eo);
  Output out;
  out.summary["staticCost"] = plan.cost;
  out.summary["dynamicAction"] = dynamicAction(ensemble).pathAction;
  Json paths = Json::array();
  for (std::size_t p = 0; p < ensemble.paths.size(); ++p) {
    const auto& path = ensemble.paths[p];
    paths.push_back({{"id", p},
                     {"source", path.source},
                     {"target", path.target},
                     {"weight", path.weight},
                     {"action", path.action},
                     {"endpointResidual", path.endpointResidual}});
  }
  out.summary["paths"] = paths;
  out.table = trajectoryCsv(ensemble);
  out.tableName = "trajectories.csv";
  return out;
}

Output runVerify(const RunConfig& config) {
  Loaded loaded;
  loadSystem(config, loaded);
  const ControlSystem& system = *loaded.system;
  const auto [mu, nu] = measures(config, system.dim());
  const auto exps = DualityExponents::fromP(config.p);
  EquivalenceOptions eo;
  eo.ensemble.solver = solverOptions(config);
  eo.ensemble.threads = config.threads;
  eo.seed = config.seed;
  eo.perturbations = config.perturbations;
  eo.residTol = config.tolerances.residTol;
  eo.useSinkhorn = config.method == "sinkhorn";
  eo.sinkhornEpsilon = config.eps;
  const EquivalenceReport report = verifyEquivalence(system, mu, nu, exps, eo);

  Output out;
  Json& s = out.summary;
  s["staticCost"] = report.staticCost;
  s["dynamicAction"] = report.dynamicAction;
  s["gap"] = report.gap;
  s["relativeGap"] = report.relativeGap;
  s["ok"] = report.ok;
  s["checks"] = {{"gap", report.gapOk},
                 {"perturbations", report.perturbationsOk},
                 {"residuals", report.residualsOk},
                 {"moments", report.moments.holds}};
  Json residuals = Json::array();
  for (const auto& r : report.residuals)
    residuals.push_back({{"name", r.name}, {"residual", r.residual}, {"c1Norm", r.c1Norm}});
  s["residuals"] = residuals;
  Json coincidences = Json::array();
  for (const auto& c : report.coincidences)
    coincidences.push_back({{"t", c.t}, {"pathA", c.pathA}, {"pathB", c.pathB}, {"distance", c.distance}});
  s["coincidences"] = coincidences;
  if (report.fieldAction) s["fieldAction"] = *report.fieldAction;
  Json perturbations = Json::array();
  for (const auto& pert : report.perturbations)
    perturbations.push_back({{"path", pert.path},
                             {"delta", pert.delta},
                             {"action", pert.action},
                             {"endpointShift", pert.endpointShift}});
  s["perturbations"] = perturbations;
  s["moments"] = {{"supMoment", report.moments.supMoment},
                  {"bound", report.moments.bound},
                  {"constant", report.moments.constant}};
  Json pairs = Json::array();
  for (std::size_t p = 0; p < report.ensemble.paths.size(); ++p) {
    const auto& path = report.ensemble.paths[p];
    pairs.push_back({{"source", path.source},
                     {"target", path.target},
                     {"mass", path.weight},
                     {"cost", report.costs(path.source, path.target)},
                     {"action", path.action}});
  }
  s["pairs"] = pairs;
  out.table = trajectoryCsv(report.ensemble);
  out.tableName = "trajectories.csv";
  out.exitCode = report.ok ? 0 : 1;
  return out;
}

Json errorJson(const std::string& kind, const std::string& message, int code) {
  return {{"error", {{"kind", kind}, {"message", message}, {"exitCode", code}}}};
}

}  // namespace

void RunConfig::validate() const {
  if (!(p > 1.0) || !std::isfinite(p)) throw UsageError("--p must be a finite number > 1");
  if (gridSteps < 2 || gridSteps % 2 != 0) throw UsageError("--grid must be even and at least 2");
  const Tolerances& t = tolerances;
  if (!(t.flowTol > 0.0) || !(t.solveTol > 0.0) || !(t.residTol > 0.0) || !(t.rankTol > 0.0))
    throw UsageError("tolerances must be positive");
  if (format != "json" && format != "csv") throw UsageError("--format must be json or csv");
  if (method != "simplex" && method != "sinkhorn") throw UsageError("--method must be simplex or sinkhorn");
  if (!(eps > 0.0)) throw UsageError("--eps must be positive");
  if (threads < 1) throw UsageError("--threads must be at least 1");
  if (perturbations < 0) throw UsageError("--perturbations must be nonnegative");
}

int dispatch(const RunConfig& config, std::ostream& out, std::ostream& err) {
  try {
    if (std::find(kCommands.begin(), kCommands.end(), config.command) == kCommands.end())
      throw UsageError("unknown command '" + config.command + "'");
    config.validate();
    static const std::map<std::string, std::function<Output(const RunConfig&)>> table{
        {"flow", runFlow},   {"controllability", runControllability},
        {"cost", runCost},   {"plan", runPlan},
        {"paths", runPaths}, {"bb-verify", runVerify}};
    Output result = table.at(config.command)(config);

    Json summary;
    summary["command"] = config.command;
    summary["meta"] = {{"seed", config.seed},
                       {"p", config.p},
                       {"gridSteps", config.gridSteps},
                       {"method", config.method}};
    for (auto& [key, value] : result.summary.items()) summary[key] = value;
    const std::string json = summary.dump(2) + "\n";

    if (!config.outputDir.empty()) {
      std::filesystem::create_directories(config.outputDir);
      const std::filesystem::path dir(config.outputDir);
      writeFileAtomic((dir / "summary.json").string(), json);
      if (!result.table.empty()) writeFileAtomic((dir / result.tableName).string(), result.table);
    }
    const std::string& primary = config.format == "csv" ? result.table : json;
    if (config.outPath.empty()) {
      out << primary;
    } else {
      writeFileAtomic(config.outPath, primary);
    }
    if (result.exitCode != 0)
      err << errorJson("validation", "equivalence check failed", result.exitCode).dump() << "\n";
    return result.exitCode;
  } catch (const UsageError& e) {
    err << errorJson(e.kind(), e.what(), 2).dump() << "\n";
    return 2;
  } catch (const Error& e) {
    err << errorJson(e.kind(), e.what(), 1).dump() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << errorJson("internal", e.what(), 1).dump() << "\n";
    return 1;
  }
}

int runCli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  RunConfig config;
  if (const char* env = std::getenv("LCOT_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) config.threads = static_cast<int>(v);
  }
  std::string configPath;

  CLI::App app{"Optimal-control transport costs for linear time-varying systems"};
  app.add_option("command", config.command, "flow | controllability | cost | plan | paths | bb-verify");
  std::map<std::string, CLI::Option*> options;
  std::map<std::string, std::function<void(const YAML::Node&)>> fromConfig;
  auto add = [&](const std::string& name, auto& target, const std::string& help) {
    options[name] = app.add_option("--" + name, target, help);
    fromConfig[name] = [&target](const YAML::Node& node) {
      target = node.as<std::remove_reference_t<decltype(target)>>();
    };
  };
  add("system", config.systemPath, "system description (YAML)");
  add("p", config.p, "cost exponent p > 1");
  add("grid", config.gridSteps, "grid steps (even)");
  add("x", config.x, "initial state, comma separated");
  add("y", config.y, "target state, comma separated");
  add("mu", config.muPath, "source measure CSV (weight,x1..xd)");
  add("nu", config.nuPath, "target measure CSV (weight,x1..xd)");
  add("method", config.method, "simplex | sinkhorn");
  add("eps", config.eps, "Sinkhorn regularisation");
  add("seed", config.seed, "random seed");
  add("out", config.outPath, "primary output file (default stdout)");
  add("format", config.format, "json | csv");
  add("threads", config.threads, "worker threads (default LCOT_THREADS or 1)");
  add("output-dir", config.outputDir, "directory for summary.json and CSV tables");
  add("flow-tol", config.tolerances.flowTol, "flow consistency tolerance");
  add("solve-tol", config.tolerances.solveTol, "endpoint residual tolerance");
  add("resid-tol", config.tolerances.residTol, "continuity residual tolerance");
  add("rank-tol", config.tolerances.rankTol, "relative singular value threshold");
  add("query", config.flowQuery, "flow: evaluate Phi(s,t) for s,t");
  add("perturbations", config.perturbations, "bb-verify: number of perturbations");
  app.add_option("--config", configPath, "YAML file of flag values; flags take precedence");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << errorJson("usage", e.what(), 2).dump() << "\n";
    return 2;
  }

  if (!configPath.empty()) {
    try {
      const YAML::Node root = YAML::LoadFile(configPath);
      if (!root.IsMap()) throw UsageError("config file must be a key-value map");
      for (const auto& item : root) {
        const std::string key = item.first.as<std::string>();
        if (key == "command") {
          if (config.command.empty()) config.command = item.second.as<std::string>();
          continue;
        }
        const auto it = fromConfig.find(key);
        if (it == fromConfig.end()) throw UsageError("unknown config key '" + key + "'");
        if (options[key]->count() == 0) it->second(item.second);
      }
    } catch (const UsageError& e) {
      err << errorJson("usage", e.what(), 2).dump() << "\n";
      return 2;
    } catch (const YAML::Exception& e) {
      err << errorJson("usage", "config file '" + configPath + "': " + e.what(), 2).dump() << "\n";
      return 2;
    }
  }
  if (config.command.empty()) {
    err << errorJson("usage", "missing command", 2).dump() << "\n";
    return 2;
  }
  return dispatch(config, out, err);
}

}  // namespace lcot
