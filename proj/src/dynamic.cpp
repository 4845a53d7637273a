#include "lcot/dynamic.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include "lcot/errors.hpp"

namespace lcot {

namespace {

// Runs body(idx) for idx in [0, count) on up to `threads` workers; the
// error from the lowest failing index is rethrown with `label`.
template <class Body>
void parallelFor(int count, int threads, const std::string& label, const Body& body) {
  std::atomic<int> next{0};
  std::mutex mutex;
  int failedAt = count;
  std::string message;
  std::string kind;
  auto work = [&] {
    for (int idx = next++; idx < count; idx = next++) {
      try {
        body(idx);
      } catch (const Error& e) {
        std::lock_guard<std::mutex> lock(mutex);
        if (idx < failedAt) {
          failedAt = idx;
          message = label + " " + std::to_string(idx) + ": " + e.what();
          kind = e.kind();
        }
      }
    }
  };
  const int workers = std::clamp(threads, 1, std::max(1, count));
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (failedAt < count) {
    if (kind == "input") throw InputError(message);
    throw SolverError(message);
  }
}

double powNorm(const Vector& v, double p) {
  const double n = v.norm();
  return n == 0.0 ? 0.0 : std::pow(n, p);
}

}  // namespace

Vector PathRecord::stateAt(const ControlSystem& system, double t) const {
  const FlowMap& flow = system.flow();
  const int k = flow.gridIndex(t);
  if (k >= 0) return states[k];
  return flow.forwardAt(t) * states.front() +
         flow.backwardInverseAt(t) * law.steeringUpTo(t, cumulative);
}

const std::vector<double>& PathEnsemble::grid() const { return system->flow().grid(); }

double PathEnsemble::totalWeight() const {
  double acc = 0.0;
  for (const auto& path : paths) acc += path.weight;
  return acc;
}

DiscreteMeasure PathEnsemble::rho(int k) const {
  DiscreteMeasure out;
  for (const auto& path : paths) {
    out.points.push_back(path.states.at(k));
    out.weights.push_back(path.weight);
  }
  return out;
}

PathEnsemble planToEnsemble(const TransportPlan& plan, const DiscreteMeasure& mu,
                            const DiscreteMeasure& nu, const ControlSystem& system,
                            const DualityExponents& exps, const EnsembleOptions& opts) {
  mu.validate();
  nu.validate();
  if (plan.sources != mu.size() || plan.targets != nu.size())
    throw InputError("plan shape does not match the measures");
  const Vector rows = plan.rowSums(), cols = plan.colSums();
  for (int i = 0; i < mu.size(); ++i)
    if (std::abs(rows(i) - mu.weights[i]) > 1e-10)
      throw InputError("plan row " + std::to_string(i) + " does not match the source weight");
  for (int j = 0; j < nu.size(); ++j)
    if (std::abs(cols(j) - nu.weights[j]) > 1e-10)
      throw InputError("plan column " + std::to_string(j) + " does not match the target weight");

  PathEnsemble ensemble;
  ensemble.system = &system;
  ensemble.exponents = exps;
  ensemble.mu = mu;
  ensemble.nu = nu;
  std::vector<PlanEntry> entries;
  for (const auto& e : plan.entries)
    if (e.mass > 0.0) entries.push_back(e);
  ensemble.paths.resize(entries.size());

  const FlowMap& flow = system.flow();
  const int steps = flow.steps();
  parallelFor(static_cast<int>(entries.size()), opts.threads, "plan entry", [&](int idx) {
    const PlanEntry& e = entries[idx];
    const Vector& x = mu.points[e.i];
    const Vector& y = nu.points[e.j];
    OptimalControl oc;
    try {
      oc = solvePoint(system, x, y, exps, opts.solver);
    } catch (const Error& err) {
      throw SolverError("pair (" + std::to_string(e.i) + ", " + std::to_string(e.j) +
                        "): " + err.what());
    }
    PathRecord& path = ensemble.paths[idx];
    path.weight = e.mass;
    path.source = e.i;
    path.target = e.j;
    path.law = std::move(oc.law);
    path.cumulative = path.law.cumulativeSteering();
    path.controls = path.law.gridAlpha();
    path.states.resize(steps + 1);
    path.states[0] = x;
    for (int k = 1; k <= steps; ++k)
      path.states[k] = flow.forward(k) * x + flow.backwardInverse(k) * path.cumulative[k];
    path.action = path.law.action();
    path.endpointResidual = (path.states[steps] - y).norm();
  });
  return ensemble;
}

TransportPlan ensembleToPlan(const PathEnsemble& ensemble) {
  std::map<std::pair<int, int>, double> cells;
  std::map<std::pair<int, int>, double> costs;
  for (const auto& path : ensemble.paths) {
    cells[{path.source, path.target}] += path.weight;
    costs[{path.source, path.target}] += path.weight * path.action;
  }
  TransportPlan plan;
  plan.sources = ensemble.mu.size();
  plan.targets = ensemble.nu.size();
  for (const auto& [key, mass] : cells) {
    plan.entries.push_back({key.first, key.second, mass});
    plan.cost += costs[key];
  }
  return plan;
}

EnsembleCheck validateEnsemble(const PathEnsemble& ensemble, double pathTol, double solveTol) {
  EnsembleCheck check;
  if (!ensemble.system) {
    check.valid = false;
    check.problems.push_back("ensemble has no system");
    return check;
  }
  const FlowMap& flow = ensemble.system->flow();
  const int steps = flow.steps();
  std::vector<double> rowMass(ensemble.mu.size(), 0.0), colMass(ensemble.nu.size(), 0.0);
  for (std::size_t p = 0; p < ensemble.paths.size(); ++p) {
    const auto& path = ensemble.paths[p];
    const std::string tag = "path " + std::to_string(p);
    if (!(path.weight > 0.0)) check.problems.push_back(tag + " has nonpositive weight");
    if (path.source < 0 || path.source >= ensemble.mu.size() || path.target < 0 ||
        path.target >= ensemble.nu.size()) {
      check.problems.push_back(tag + " has out-of-range endpoint indices");
      continue;
    }
    if (static_cast<int>(path.states.size()) != steps + 1) {
      check.problems.push_back(tag + " is not sampled on the flow grid");
      continue;
    }
    rowMass[path.source] += path.weight;
    colMass[path.target] += path.weight;
    if (path.states.front() != ensemble.mu.points[path.source])
      check.problems.push_back(tag + " does not start at its source atom");
    const Vector& y = ensemble.nu.points[path.target];
    const double endGap = (path.states.back() - y).norm();
    check.worstEndpoint = std::max(check.worstEndpoint, endGap);
    if (endGap > solveTol * (1.0 + y.norm())) check.problems.push_back(tag + " misses its target");
    for (int k = 0; k < steps; ++k) {
      const Vector predicted =
          flow.forward(k + 1) * flow.forwardInverse(k) * path.states[k] +
          flow.backwardInverse(k + 1) * (path.cumulative[k + 1] - path.cumulative[k]);
      const double defect =
          (path.states[k + 1] - predicted).norm() / (1.0 + path.states[k + 1].norm());
      check.worstStep = std::max(check.worstStep, defect);
    }
    if (check.worstStep > pathTol) check.problems.push_back(tag + " violates the sampled dynamics");
  }
  for (int i = 0; i < ensemble.mu.size(); ++i)
    check.worstMarginal = std::max(check.worstMarginal, std::abs(rowMass[i] - ensemble.mu.weights[i]));
  for (int j = 0; j < ensemble.nu.size(); ++j)
    check.worstMarginal = std::max(check.worstMarginal, std::abs(colMass[j] - ensemble.nu.weights[j]));
  if (check.worstMarginal > 1e-10) check.problems.push_back("endpoint marginals do not match");
  check.valid = check.problems.empty();
  return check;
}

std::vector<Coincidence> detectCoincidences(const PathEnsemble& ensemble, double collisionTol) {
  std::vector<Coincidence> out;
  const auto& grid = ensemble.grid();
  const int steps = static_cast<int>(grid.size()) - 1;
  const int count = static_cast<int>(ensemble.paths.size());
  // Endpoint meetings come from mass splitting and are excluded.
  for (int k = 1; k < steps; ++k) {
    for (int a = 0; a < count; ++a) {
      for (int b = a + 1; b < count; ++b) {
        const double dist = (ensemble.paths[a].states[k] - ensemble.paths[b].states[k]).norm();
        if (dist < collisionTol) out.push_back({grid[k], k, a, b, dist});
      }
    }
  }
  return out;
}

DynamicAction dynamicAction(const PathEnsemble& ensemble, double collisionTol) {
  DynamicAction out;
  const double p = ensemble.exponents.p;
  const auto& weights = ensemble.system->simpson();
  const int steps = static_cast<int>(weights.size()) - 1;
  for (const auto& path : ensemble.paths) {
    out.pathAction += path.weight * path.action;
    double grid = 0.0;
    for (int k = 0; k <= steps; ++k) grid += weights[k] * powNorm(path.controls[k], p);
    out.gridPathAction += path.weight * grid;
  }
  out.coincidences = detectCoincidences(ensemble, collisionTol);
  if (out.coincidences.empty()) return out;

  // u(t_k, x) = mass-weighted mean of the controls of the particles at x.
  const int count = static_cast<int>(ensemble.paths.size());
  std::vector<std::vector<std::pair<int, int>>> byTime(steps + 1);
  for (const auto& c : out.coincidences) byTime[c.gridIndex].emplace_back(c.pathA, c.pathB);
  double field = 0.0;
  std::vector<int> parent(count);
  for (int k = 0; k <= steps; ++k) {
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int a) {
      while (parent[a] != a) a = parent[a] = parent[parent[a]];
      return a;
    };
    for (const auto& [a, b] : byTime[k]) parent[find(a)] = find(b);
    std::map<int, std::pair<double, Vector>> groups;
    for (int a = 0; a < count; ++a) {
      const auto& path = ensemble.paths[a];
      auto [it, fresh] = groups.try_emplace(find(a), 0.0, Vector::Zero(path.controls[k].size()));
      it->second.first += path.weight;
      it->second.second += path.weight * path.controls[k];
    }
    double density = 0.0;
    for (const auto& [root, g] : groups) density += g.first * powNorm(g.second / g.first, p);
    field += weights[k] * density;
  }
  out.fieldAction = field;
  out.fieldMayBeSmaller = true;
  return out;
}

namespace {

struct Monomial {
  int i = -1;
  int j = -1;
};

double monomialValue(const Monomial& m, const Vector& x) {
  if (m.i < 0) return 1.0;
  if (m.j < 0) return x(m.i);
  return x(m.i) * x(m.j);
}

Vector monomialGrad(const Monomial& m, const Vector& x) {
  Vector g = Vector::Zero(x.size());
  if (m.i < 0) return g;
  if (m.j < 0) {
    g(m.i) = 1.0;
    return g;
  }
  g(m.i) += x(m.j);
  g(m.j) += x(m.i);
  return g;
}

}  // namespace

std::vector<TestFunction> defaultTestBattery(int dim, double horizon, double radius) {
  if (dim <= 0) throw DomainError("battery dimension must be positive");
  if (!(horizon > 0.0) || !(radius > 0.0)) throw DomainError("battery horizon and radius must be positive");
  const double T = horizon, R = radius;

  auto bump = [T](double t) {
    const double s = t / T;
    const double a = 4.0 * s * (1.0 - s);
    return a * a * a;
  };
  auto bumpDt = [T](double t) {
    const double s = t / T;
    const double a = 4.0 * s * (1.0 - s);
    return 3.0 * a * a * 4.0 * (1.0 - 2.0 * s) / T;
  };
  // Radial cutoff chi(r) and chi'(r): one minus the degree-9 smoothstep,
  // whose derivative 630 u^4 (1 - u)^4 makes chi four times differentiable.
  auto chi = [R](double r) {
    if (r <= R) return 1.0;
    if (r >= 2.0 * R) return 0.0;
    const double u = (r - R) / R;
    const double u5 = u * u * u * u * u;
    return 1.0 - u5 * (126.0 + u * (-420.0 + u * (540.0 + u * (-315.0 + 70.0 * u))));
  };
  auto chiPrime = [R](double r) {
    if (r <= R || r >= 2.0 * R) return 0.0;
    const double u = (r - R) / R;
    const double v = u * (1.0 - u);
    return -630.0 * v * v * v * v / R;
  };

  std::vector<std::pair<std::string, Monomial>> monomials{{"1", {}}};
  for (int i = 0; i < dim; ++i) monomials.push_back({"x" + std::to_string(i + 1), {i, -1}});
  for (int i = 0; i < dim; ++i)
    for (int j = i; j < dim; ++j)
      monomials.push_back({"x" + std::to_string(i + 1) + "*x" + std::to_string(j + 1), {i, j}});

  std::vector<TestFunction> out;
  for (const auto& [label, mono] : monomials) {
    TestFunction f;
    f.name = "bump*" + label;
    f.value = [=](double t, const Vector& x) {
      return bump(t) * monomialValue(mono, x) * chi(x.norm());
    };
    f.dt = [=](double t, const Vector& x) {
      return bumpDt(t) * monomialValue(mono, x) * chi(x.norm());
    };
    f.grad = [=](double t, const Vector& x) {
      const double r = x.norm();
      Vector g = monomialGrad(mono, x) * chi(r);
      const double dchi = chiPrime(r);
      if (dchi != 0.0) g += monomialValue(mono, x) * dchi / r * x;
      return Vector(bump(t) * g);
    };
    out.push_back(std::move(f));
  }
  return out;
}

double dataRadius(const PathEnsemble& ensemble) {
  double r = 0.0;
  for (const auto& x : ensemble.mu.points) r = std::max(r, x.norm());
  for (const auto& y : ensemble.nu.points) r = std::max(r, y.norm());
  return std::max(r, 1.0);
}

std::vector<ResidualResult> continuityResidual(const PathEnsemble& ensemble,
                                               const std::vector<TestFunction>& tests,
                                               int threads) {
  const ControlSystem& system = *ensemble.system;
  const FlowMap& flow = system.flow();
  const MatrixCurve& m = flow.drift();
  const MatrixCurve& n = system.inputMatrix();
  const double T = flow.horizon();

  // Quadrature nodes of every path with state and velocity M gamma + N alpha.
  struct NodeState {
    double t;
    double weight;
    Vector state;
    Vector velocity;
  };
  std::vector<std::vector<NodeState>> nodes(ensemble.paths.size());
  parallelFor(static_cast<int>(ensemble.paths.size()), threads, "path", [&](int p) {
    const auto& path = ensemble.paths[p];
    const auto& rule = path.law.nodes();
    const auto& alpha = path.law.nodeAlpha();
    auto& out = nodes[p];
    out.reserve(rule.size());
    for (std::size_t i = 0; i < rule.size(); ++i) {
      const QuadNode& node = rule[i];
      Vector state = node.gridIndex >= 0 ? path.states[node.gridIndex] : path.stateAt(system, node.t);
      Vector velocity = m.eval(node.t) * state + n.eval(node.t) * alpha[i];
      out.push_back({node.t, node.weight, std::move(state), std::move(velocity)});
    }
  });

  std::vector<ResidualResult> results(tests.size());
  parallelFor(static_cast<int>(tests.size()), threads, "test function", [&](int f) {
    const TestFunction& phi = tests[f];
    ResidualResult& res = results[f];
    res.name = phi.name;
    for (const auto& path : ensemble.paths) {
      const double start = phi.value(0.0, path.states.front());
      const double end = phi.value(T, path.states.back());
      if (std::abs(start) > 1e-12 || std::abs(end) > 1e-12)
        throw InputError("test function " + phi.name + " does not vanish at t = 0 and t = T");
    }
    double acc = 0.0;
    double c1 = 0.0;
    for (std::size_t p = 0; p < ensemble.paths.size(); ++p) {
      double pathAcc = 0.0;
      for (const auto& node : nodes[p]) {
        const double dt = phi.dt(node.t, node.state);
        const Vector grad = phi.grad(node.t, node.state);
        pathAcc += node.weight * (dt + grad.dot(node.velocity));
        c1 = std::max({c1, std::abs(phi.value(node.t, node.state)), std::abs(dt), grad.norm()});
      }
      acc += ensemble.paths[p].weight * pathAcc;
    }
    res.residual = acc;
    res.c1Norm = c1;
  });
  return results;
}

MomentReport momentBound(const PathEnsemble& ensemble) {
  const ControlSystem& system = *ensemble.system;
  const double p = ensemble.exponents.p, q = ensemble.exponents.q;
  const double T = system.horizon();
  MomentReport out;
  const int steps = system.flow().steps();
  for (int k = 0; k <= steps; ++k) {
    double moment = 0.0;
    for (const auto& path : ensemble.paths) moment += path.weight * powNorm(path.states[k], p);
    out.supMoment = std::max(out.supMoment, moment);
  }
  const double cp = system.analyticUpperConstant(p);
  const double phiEnd = opNorm(system.flow().end());
  out.constant = std::pow(2.0, p - 1.0) * std::pow(system.supFlowNorm(), p) *
                 std::pow(1.0 + system.supInputNorm(), p) * (1.0 + std::pow(T, p / q)) *
                 (1.0 + std::pow(2.0, p - 1.0) * cp * std::pow(1.0 + phiEnd, p));
  out.bound = out.constant * (ensemble.mu.moment(p) + ensemble.nu.moment(p));
  out.holds = out.supMoment <= out.bound;
  return out;
}

PerturbationSample perturbPath(const PathEnsemble& ensemble, int pathIndex, double delta,
                               std::uint64_t seed) {
  const PathRecord& path = ensemble.paths.at(pathIndex);
  const ControlSystem& system = *ensemble.system;
  const double p = ensemble.exponents.p;
  const double T = system.horizon();
  const int d = system.dim(), n = system.inputs();
  const auto& rule = path.law.nodes();
  const auto& b = path.law.nodeSteering();
  const auto& alpha = path.law.nodeAlpha();

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  constexpr int kModes = 3;
  std::vector<Vector> sinC(kModes + 1, Vector(n)), cosC(kModes + 1, Vector(n));
  for (int mode = 0; mode <= kModes; ++mode)
    for (int i = 0; i < n; ++i) {
      sinC[mode](i) = gauss(rng);
      cosC[mode](i) = gauss(rng);
    }
  auto eta = [&](double t) {
    Vector v = cosC[0];
    for (int mode = 1; mode <= kModes; ++mode) {
      const double w = mode * M_PI * t / T;
      v += std::sin(w) * sinC[mode] + std::cos(w) * cosC[mode];
    }
    return v;
  };

  // Gramian and endpoint map on the path's own rule.
  Matrix g = Matrix::Zero(d, d);
  Vector e = Vector::Zero(d);
  std::vector<Vector> etaAt(rule.size());
  for (std::size_t i = 0; i < rule.size(); ++i) {
    etaAt[i] = eta(rule[i].t);
    g += rule[i].weight * (b[i] * b[i].transpose());
    e += rule[i].weight * (b[i] * etaAt[i]);
  }
  const Vector lambda = g.ldlt().solve(e);
  std::vector<Vector> pert(rule.size());
  double pertSq = 0.0, alphaSq = 0.0;
  for (std::size_t i = 0; i < rule.size(); ++i) {
    pert[i] = etaAt[i] - b[i].transpose() * lambda;
    pertSq += rule[i].weight * pert[i].squaredNorm();
    alphaSq += rule[i].weight * alpha[i].squaredNorm();
  }
  // delta is relative to the L2 size of alpha* (absolute for the zero control).
  const double scale = pertSq > 0.0 ? (alphaSq > 0.0 ? std::sqrt(alphaSq / pertSq) : 1.0 / std::sqrt(pertSq)) : 0.0;
  const double step = delta * scale;

  PerturbationSample out;
  out.path = pathIndex;
  out.delta = delta;
  Vector shift = Vector::Zero(d);
  for (std::size_t i = 0; i < rule.size(); ++i) {
    const Vector perturbed = alpha[i] + step * pert[i];
    out.action += rule[i].weight * powNorm(perturbed, p);
    shift += rule[i].weight * (b[i] * (step * pert[i]));
  }
  out.endpointShift = shift.norm();
  return out;
}

EquivalenceReport verifyEquivalence(const ControlSystem& system, const DiscreteMeasure& mu,
                                    const DiscreteMeasure& nu, const DualityExponents& exps,
                                    const EquivalenceOptions& opts) {
  EquivalenceReport report;
  report.costs = costMatrix(system, mu, nu, exps, opts.ensemble.solver, opts.ensemble.threads);
  if (opts.useSinkhorn) {
    SinkhornOptions sk;
    sk.epsilon = opts.sinkhornEpsilon;
    report.plan = sinkhorn(report.costs, mu.weights, nu.weights, sk);
  } else {
    report.plan = solvePlan(report.costs, mu, nu);
  }
  report.staticCost = report.plan.cost;
  report.ensemble = planToEnsemble(report.plan, mu, nu, system, exps, opts.ensemble);

  const DynamicAction action = dynamicAction(report.ensemble, opts.collisionTol);
  report.dynamicAction = action.pathAction;
  report.fieldAction = action.fieldAction;
  report.coincidences = action.coincidences;
  for (const auto& path : report.ensemble.paths) report.pathActions.push_back(path.action);
  report.gap = std::abs(report.dynamicAction - report.staticCost);
  report.relativeGap = report.gap / (1.0 + report.staticCost);
  report.gapOk = report.relativeGap <= opts.gapTol;

  std::mt19937_64 rng(opts.seed);
  std::vector<double> pathWeights;
  for (const auto& path : report.ensemble.paths) pathWeights.push_back(path.weight);
  std::discrete_distribution<int> pick(pathWeights.begin(), pathWeights.end());
  std::uniform_real_distribution<double> logDelta(std::log(1e-3), std::log(0.5));
  for (int s = 0; s < opts.perturbations && !report.ensemble.paths.empty(); ++s) {
    const int k = pick(rng);
    const double delta = std::exp(logDelta(rng));
    PerturbationSample sample = perturbPath(report.ensemble, k, delta, rng());
    const auto& path = report.ensemble.paths[k];
    // Ensemble action with path k replaced by its perturbation.
    sample.action = report.dynamicAction - path.weight * path.action + path.weight * sample.action;
    if (sample.action < report.staticCost - opts.perturbationSlack) report.perturbationsOk = false;
    report.perturbations.push_back(sample);
  }

  const auto battery =
      defaultTestBattery(system.dim(), system.horizon(), dataRadius(report.ensemble));
  report.residuals = continuityResidual(report.ensemble, battery, opts.ensemble.threads);
  for (const auto& r : report.residuals)
    if (!(std::abs(r.residual) <= opts.residTol)) report.residualsOk = false;
  report.moments = momentBound(report.ensemble);
  report.ok = report.gapOk && report.perturbationsOk && report.residualsOk && report.moments.holds;
  return report;
}

}  // namespace lcot
