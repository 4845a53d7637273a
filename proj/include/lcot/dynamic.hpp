#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "lcot/cost.hpp"
#include "lcot/transport.hpp"

namespace lcot {

/// One optimally controlled trajectory carrying the mass of a plan entry.
struct PathRecord {
  double weight = 0.0;
  int source = 0;
  int target = 0;
  /// gamma(t_k) and alpha*(t_k) on the flow grid.
  std::vector<Vector> states;
  std::vector<Vector> controls;
  /// int_0^T |alpha*|^p under the path's quadrature rule.
  double action = 0.0;
  double endpointResidual = 0.0;
  /// Control law and its cumulative steering integrals, for off-grid queries.
  ControlLaw law;
  std::vector<Vector> cumulative;

  /// gamma(t) for any t in [0, T].
  Vector stateAt(const ControlSystem& system, double t) const;
};

/// Discrete path measure eta = sum_k w_k delta_{gamma_k}. All paths share
/// the grid of `system`, which must outlive the ensemble.
struct PathEnsemble {
  const ControlSystem* system = nullptr;
  DualityExponents exponents;
  DiscreteMeasure mu;
  DiscreteMeasure nu;
  std::vector<PathRecord> paths;

  const std::vector<double>& grid() const;
  double totalWeight() const;
  /// rho_{t_k} = (e_{t_k})# eta, one atom per path.
  DiscreteMeasure rho(int k) const;
};

struct EnsembleOptions {
  SolverOptions solver;
  int threads = 1;
};

/// Discrete inverse of the endpoint bijection: one path per positive entry.
PathEnsemble planToEnsemble(const TransportPlan& plan, const DiscreteMeasure& mu,
                            const DiscreteMeasure& nu, const ControlSystem& system,
                            const DualityExponents& exps, const EnsembleOptions& opts = {});

/// Pushes each path weight to its endpoint pair.
TransportPlan ensembleToPlan(const PathEnsemble& ensemble);

struct EnsembleCheck {
  bool valid = true;
  double worstStep = 0.0;
  double worstEndpoint = 0.0;
  double worstMarginal = 0.0;
  std::vector<std::string> problems;
};

/// Step-wise dynamics, endpoint and marginal checks on an ensemble.
EnsembleCheck validateEnsemble(const PathEnsemble& ensemble, double pathTol = 1e-8,
                               double solveTol = 1e-8);

struct Coincidence {
  double t = 0.0;
  int gridIndex = 0;
  int pathA = 0;
  int pathB = 0;
  double distance = 0.0;
};

/// Pairs of paths closer than collisionTol at an interior grid time.
std::vector<Coincidence> detectCoincidences(const PathEnsemble& ensemble,
                                            double collisionTol = 1e-9);

struct DynamicAction {
  /// sum_k w_k int |alpha_k|^p with each path's own rule.
  double pathAction = 0.0;
  /// Same integrand on the plain grid Simpson rule.
  double gridPathAction = 0.0;
  std::vector<Coincidence> coincidences;
  /// Grid Simpson action of the averaged field u, present when paths meet.
  std::optional<double> fieldAction;
  bool fieldMayBeSmaller = false;
};

DynamicAction dynamicAction(const PathEnsemble& ensemble, double collisionTol = 1e-9);

/// Smooth test function phi(t, x) with its partial derivatives.
struct TestFunction {
  std::string name;
  std::function<double(double, const Vector&)> value;
  std::function<double(double, const Vector&)> dt;
  std::function<Vector(double, const Vector&)> grad;
};

/// Temporal bump b(t) = (4 s (1 - s))^3, s = t / T, times the monomials
/// 1, x_i, x_i x_j (i <= j), times a radial C^4 cutoff equal to 1 on
/// |x| <= radius and 0 for |x| >= 2 radius.
std::vector<TestFunction> defaultTestBattery(int dim, double horizon, double radius);
/// Data radius used by the battery: the largest atom norm of mu and nu (at least 1).
double dataRadius(const PathEnsemble& ensemble);

struct ResidualResult {
  std::string name;
  double residual = 0.0;
  /// max |phi|, |d_t phi|, |grad phi| over the points used.
  double c1Norm = 0.0;
};

/// Weak continuity-equation residual
/// sum_k w_k int [d_t phi + grad phi . (M gamma_k + N alpha_k)] dt per test function.
std::vector<ResidualResult> continuityResidual(const PathEnsemble& ensemble,
                                               const std::vector<TestFunction>& tests,
                                               int threads = 1);

struct MomentReport {
  double supMoment = 0.0;
  double bound = 0.0;
  double constant = 0.0;
  bool holds = false;
};

/// sup_k of the p-th moment of rho_{t_k} against the explicit constant
/// 2^{p-1} ||Phi||^p (1 + ||N||)^p (1 + T^{p/q}) (1 + 2^{p-1} C_p (1 + ||Phi(0,T)||)^p)
/// times the sum of the p-th moments of mu and nu.
MomentReport momentBound(const PathEnsemble& ensemble);

struct EquivalenceOptions {
  EnsembleOptions ensemble;
  int perturbations = 10;
  std::uint64_t seed = 1;
  double collisionTol = 1e-9;
  double gapTol = 1e-8;
  double perturbationSlack = 1e-9;
  double residTol = 1e-6;
  bool useSinkhorn = false;
  double sinkhornEpsilon = 1e-2;
};

struct PerturbationSample {
  int path = 0;
  double delta = 0.0;
  double action = 0.0;
  double endpointShift = 0.0;
};

struct EquivalenceReport {
  double staticCost = 0.0;
  double dynamicAction = 0.0;
  double gap = 0.0;
  double relativeGap = 0.0;
  bool gapOk = false;
  bool perturbationsOk = true;
  bool residualsOk = true;
  bool ok = false;
  std::optional<double> fieldAction;
  TransportPlan plan;
  Matrix costs;
  PathEnsemble ensemble;
  std::vector<double> pathActions;
  std::vector<PerturbationSample> perturbations;
  std::vector<ResidualResult> residuals;
  std::vector<Coincidence> coincidences;
  MomentReport moments;
};

/// Endpoint-preserving perturbation alpha* + delta (eta - P eta) of one
/// path. P eta = B^T G^{-1} E(eta) with G and E taken on the path's quadrature
/// rule, so the perturbed control steers to the same endpoint.
PerturbationSample perturbPath(const PathEnsemble& ensemble, int path, double delta,
                               std::uint64_t seed);

/// C_p through the transport module, the ensemble from the optimal plan,
/// D_p from the ensemble, endpoint-preserving perturbations and the
/// continuity residuals of the default battery.
EquivalenceReport verifyEquivalence(const ControlSystem& system, const DiscreteMeasure& mu,
                                    const DiscreteMeasure& nu, const DualityExponents& exps,
                                    const EquivalenceOptions& opts = {});

}  // namespace lcot
