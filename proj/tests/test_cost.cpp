#include <doctest.h>

#include <cmath>
#include <random>

#include "lcot/control.hpp"
#include "lcot/cost.hpp"
#include "lcot/errors.hpp"
#include "systems.hpp"

using namespace lcot;
using fixtures::mat;

namespace {

ControlSystem makeSystem(const fixtures::TestSystem& sys, int steps = 1000) {
  return ControlSystem(buildFlow(sys.m, steps), sys.n);
}

Vector vec(std::initializer_list<double> v) {
  Vector out(v.size());
  int i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

}  // namespace

TEST_CASE("duality maps are mutually inverse") {
  const Vector v = vec({0.3, -1.2, 2.0});
  for (double p : {1.5, 2.0, 3.0}) {
    const auto e = DualityExponents::fromP(p);
    CHECK((jDual(jDual(v, p), e.q) - v).norm() < 1e-13);
  }
  CHECK(jDual(Vector::Zero(2), 1.5).norm() == 0.0);
  CHECK_THROWS_AS(DualityExponents::fromP(1.0), DomainError);
}

TEST_CASE("double integrator anchor: x = 0, y = (1, 0) costs 12") {
  const ControlSystem system = makeSystem(fixtures::doubleIntegrator());
  const auto oc = solveP2(system, vec({0, 0}), vec({1, 0}));
  CHECK(oc.cost == doctest::Approx(12.0).epsilon(1e-9));
  CHECK(oc.endpointResidual < 1e-10);
  // alpha(t) = 6 - 12 t.
  CHECK(oc.alphaSamples[0](0) == doctest::Approx(6.0).epsilon(1e-9));
  CHECK(oc.alphaSamples[500](0) == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(endpoint(system, vec({0, 0}), oc.alphaSamples).isApprox(vec({1, 0}), 1e-10));
}

TEST_CASE("p = 2 closed form matches the Gramian oracle and the general solver") {
  const ControlSystem system = makeSystem(fixtures::doubleIntegrator());
  std::mt19937 rng(11);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 10; ++trial) {
    const Vector x = vec({g(rng), g(rng)}), y = vec({g(rng), g(rng)});
    const auto closed = solveP2(system, x, y);
    CHECK(closed.cost == doctest::Approx(oracle::doubleIntegratorC2(x, y, 1.0)).epsilon(1e-10));
    const auto general = solveGeneralP(system, x, y, DualityExponents::fromP(2.0));
    CHECK((general.xi - closed.xi).norm() <= 1e-6 * closed.xi.norm());
    CHECK(general.cost == doctest::Approx(closed.cost).epsilon(1e-6));
  }
}

TEST_CASE("Euclidean reduction c_p = |y - x|^p / T^{p-1}") {
  const ControlSystem system = makeSystem(fixtures::euclidean(3, 2.0), 200);
  const Vector x = vec({0.5, -1, 2}), y = vec({-1, 0.25, 1});
  for (double p : {1.5, 2.0, 3.0}) {
    const auto oc = solveGeneralP(system, x, y, DualityExponents::fromP(p));
    CHECK(oc.cost == doctest::Approx(oracle::euclideanCp(x, y, p, 2.0)).epsilon(1e-9));
  }
}

TEST_CASE("multiplier identity c_p = <xi, r> / p and the optimality relation") {
  const ControlSystem system = makeSystem(fixtures::rotation());
  const Vector x = vec({0.3, -0.4}), y = vec({1.1, 0.7});
  const Vector r = y - system.flow().end() * x;
  for (double p : {1.5, 3.0}) {
    const auto exps = DualityExponents::fromP(p);
    const auto oc = solveGeneralP(system, x, y, exps);
    CHECK(oc.cost == doctest::Approx(oc.xi.dot(r) / p).epsilon(1e-8));
    // j_p(alpha) = B^T xi / p on the grid.
    for (int k : {0, 137, 500, 1000}) {
      const Vector lhs = jDual(oc.alphaSamples[k], p);
      const Vector rhs = system.steering(k).transpose() * oc.xi / p;
      CHECK((lhs - rhs).norm() < 1e-10 * (1 + rhs.norm()));
    }
  }
}

TEST_CASE("y = Phi(0,T) x short-circuits to the zero control") {
  const ControlSystem system = makeSystem(fixtures::timeVarying());
  const Vector x = vec({0.4, -0.2});
  const Vector y = system.flow().end() * x;
  for (double p : {1.5, 2.0, 3.0}) {
    const auto oc = solvePoint(system, x, y, DualityExponents::fromP(p));
    CHECK(oc.cost == 0.0);
    CHECK(oc.xi.norm() == 0.0);
  }
}

TEST_CASE("uncontrollable systems are reported") {
  auto m = MatrixCurve::constant(mat(2, 2, {1, 0, 0, 2}), 1.0);
  auto n = MatrixCurve::constant(mat(2, 1, {1, 0}), 1.0);
  const ControlSystem system(buildFlow(m, 100), n);
  CHECK_FALSE(system.controllable());
  CHECK_THROWS_AS(solveP2(system, vec({0, 0}), vec({1, 1})), NotControllableError);
  CHECK_THROWS_AS(solveGeneralP(system, vec({0, 0}), vec({1, 1}), DualityExponents::fromP(3)),
                  NotControllableError);
}

TEST_CASE("shape errors") {
  const ControlSystem system = makeSystem(fixtures::doubleIntegrator(), 100);
  CHECK_THROWS_AS(solveP2(system, vec({0, 0, 0}), vec({1, 0})), ShapeError);
  CHECK_THROWS_AS(endpoint(system, vec({0, 0}), std::vector<Vector>(5, Vector::Zero(1))), ConfigError);
}

TEST_CASE("sign changes of B^T xi split Simpson panels for single inputs") {
  const ControlSystem system = makeSystem(fixtures::doubleIntegrator());
  const auto exps = DualityExponents::fromP(3.0);
  SolverOptions tight;
  tight.solveTol = 1e-12;
  const auto oc = solveGeneralP(system, vec({0, 0}), vec({1, 0}), exps, tight);
  // w(t) vanishes once, at t = 1/2.
  CHECK(oc.law.splitPanelCount() == 1);
  const auto& pieces = oc.law.panelPieces(250);
  REQUIRE(pieces.size() == 2);
  CHECK(pieces[0].hi == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(oc.endpointResidual < 1e-12 * 2);
  // Multi-input systems need no splitting.
  const ControlSystem euclid = makeSystem(fixtures::euclidean(2), 100);
  CHECK(solveGeneralP(euclid, vec({0, 0}), vec({1, 1}), exps).law.splitPanelCount() == 0);
}

TEST_CASE("cumulative steering integrals are consistent with the full integral") {
  const ControlSystem system = makeSystem(fixtures::timeVarying(), 400);
  const auto oc = solveGeneralP(system, vec({0.1, 0.2}), vec({-0.5, 0.8}), DualityExponents::fromP(3.0));
  const auto cumulative = oc.law.cumulativeSteering();
  CHECK((cumulative.back() - oc.law.steeringIntegral()).norm() < 1e-13);
  const auto& grid = system.flow().grid();
  CHECK((oc.law.steeringUpTo(grid[37], cumulative) - cumulative[37]).norm() == 0.0);
  // Off-grid values interpolate between neighbouring grid values.
  const double t = 0.5 * (grid[37] + grid[38]);
  const Vector mid = oc.law.steeringUpTo(t, cumulative);
  CHECK((mid - 0.5 * (cumulative[37] + cumulative[38])).norm() < 1e-5);
}

TEST_CASE("general p agrees with direct transcription on one instance") {
  const auto sys = fixtures::doubleIntegrator();
  const ControlSystem system = makeSystem(sys);
  const Vector x = vec({0.2, -0.5}), y = vec({1.0, 0.3});
  const auto cells = oracle::cellResponses(sys.mFn, sys.nFn, 2, 1, 1.0, 200);
  for (double p : {1.5, 3.0}) {
    const auto oc = solveGeneralP(system, x, y, DualityExponents::fromP(p));
    const auto tr = oracle::transcribe(cells, x, y, p);
    CHECK(std::abs(tr.cost - oc.cost) / oc.cost < 5e-3);
    CHECK(tr.cost >= oc.cost * (1 - 1e-9));
  }
}

TEST_CASE("d_p vanishes on the diagonal and is symmetric") {
  const ControlSystem system = makeSystem(fixtures::rotation(), 400);
  const auto exps = DualityExponents::fromP(1.5);
  const Vector x = vec({0.4, 1.0}), z = vec({-0.3, 0.2});
  CHECK(costMetric(system, x, x, exps) <= 1e-8);
  CHECK(costMetric(system, x, z, exps) == doctest::Approx(costMetric(system, z, x, exps)).epsilon(1e-9));
}

TEST_CASE("comparison bounds stay within the analytic constant") {
  const ControlSystem system = makeSystem(fixtures::doubleIntegrator(), 400);
  for (double p : {1.5, 2.0, 3.0}) {
    const auto bounds = comparisonBounds(system, DualityExponents::fromP(p), 20, 5);
    CHECK(bounds.lower > 0.0);
    CHECK(bounds.lower <= bounds.upper);
    CHECK(bounds.upperWithinAnalytic);
    CHECK(bounds.ratios.size() == 20);
  }
}

TEST_CASE("multiplier depends continuously on the endpoint") {
  const ControlSystem system = makeSystem(fixtures::timeVarying(), 400);
  const auto exps = DualityExponents::fromP(3.0);
  const Vector x = vec({0.0, 0.0}), y = vec({1.0, -0.5});
  const Vector xi0 = solveGeneralP(system, x, y, exps).xi;
  double prev = std::numeric_limits<double>::infinity();
  for (double h : {1e-2, 1e-3, 1e-4}) {
    const Vector xi = solveGeneralP(system, x, y + vec({h, h}), exps).xi;
    const double change = (xi - xi0).norm();
    CHECK(change < prev);
    prev = change;
  }
  CHECK(prev < 1e-2);
}

TEST_CASE("anchored pieces integrate square-root behaviour off the singular point") {
  const double r = 0.3;
  auto exact = [&](double a, double b) { return 2.0 / 3.0 * (std::pow(b - r, 1.5) - std::pow(a - r, 1.5)); };
  GradedPiece right{0.31, 0.35, GradedPiece::Singular::kAnchored, r};
  double acc = 0.0;
  for (const auto& node : right.nodes()) acc += node.weight * std::sqrt(node.t - r);
  CHECK(acc == doctest::Approx(exact(0.31, 0.35)).epsilon(1e-14));
  acc = 0.0;
  for (const auto& node : right.nodesUpTo(0.33)) acc += node.weight * std::sqrt(node.t - r);
  CHECK(acc == doctest::Approx(exact(0.31, 0.33)).epsilon(1e-14));
  GradedPiece left{0.2, 0.29, GradedPiece::Singular::kAnchored, r};
  acc = 0.0;
  for (const auto& node : left.nodes()) acc += node.weight / std::sqrt(r - node.t);
  CHECK(acc == doctest::Approx(2.0 * (std::sqrt(0.1) - std::sqrt(0.01))).epsilon(1e-14));
}

TEST_CASE("panels near a sign change use the anchored rule only when needed") {
  const ControlSystem system = makeSystem(fixtures::doubleIntegrator());
  const Vector x = vec({0, 0}), y = vec({1, 0});
  // q - 1 = 1/2: 50 panels on each side of t = 1/2 lie within 0.1 T.
  const auto rough = solveGeneralP(system, x, y, DualityExponents::fromP(3.0));
  CHECK(rough.law.anchoredPanelCount() == 100);
  // q - 1 = 2: the control is polynomial on each side of the root.
  const auto smooth = solveGeneralP(system, x, y, DualityExponents::fromP(1.5));
  CHECK(smooth.law.splitPanelCount() == 1);
  CHECK(smooth.law.anchoredPanelCount() == 0);
}
