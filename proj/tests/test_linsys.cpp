#include <doctest.h>

#include <cmath>
#include <random>

#include "lcot/errors.hpp"
#include "lcot/linsys.hpp"
#include "systems.hpp"

using namespace lcot;
using fixtures::mat;

TEST_CASE("polynomial coefficients ascend in t") {
  // Entry [0, 1] is the polynomial t.
  auto curve = MatrixCurve::polynomial({mat(1, 1, {0}), mat(1, 1, {1})}, 2.0);
  CHECK(curve.eval(0.75)(0, 0) == doctest::Approx(0.75));
  CHECK(curve.eval(0.75, 1)(0, 0) == doctest::Approx(1.0));
  CHECK(curve.eval(0.75, 2)(0, 0) == doctest::Approx(0.0));

  auto cubic = MatrixCurve::polynomial({mat(1, 1, {1}), mat(1, 1, {0}), mat(1, 1, {0}), mat(1, 1, {2})}, 1.0);
  CHECK(cubic.eval(0.5)(0, 0) == doctest::Approx(1.25));
  CHECK(cubic.eval(0.5, 1)(0, 0) == doctest::Approx(1.5));
  CHECK(cubic.eval(0.5, 2)(0, 0) == doctest::Approx(6.0));
  CHECK(cubic.eval(0.5, 3)(0, 0) == doctest::Approx(12.0));
  CHECK(cubic.eval(0.5, 4)(0, 0) == doctest::Approx(0.0));
}

TEST_CASE("constant curves have vanishing derivatives") {
  auto curve = MatrixCurve::constant(mat(2, 2, {1, 2, 3, 4}), 1.0);
  CHECK(curve.isConstant());
  CHECK(curve.eval(0.3) == mat(2, 2, {1, 2, 3, 4}));
  CHECK(curve.eval(0.3, 1).norm() == 0.0);
  CHECK(evalCurve(curve, 0.9, 0)(1, 0) == 3.0);
}

TEST_CASE("curve evaluation outside the horizon is a domain error") {
  auto curve = MatrixCurve::constant(Matrix::Identity(2, 2), 1.0);
  CHECK_THROWS_AS(curve.eval(1.5), DomainError);
  CHECK_THROWS_AS(curve.eval(-0.1), DomainError);
}

TEST_CASE("sampled curves interpolate and reject second derivatives") {
  std::vector<Matrix> values;
  const double dt = 0.1;
  for (int k = 0; k <= 10; ++k) values.push_back(mat(1, 1, {std::sin(k * dt)}));
  auto curve = MatrixCurve::sampled(dt, values);
  CHECK(curve.horizon() == doctest::Approx(1.0));
  CHECK(curve.maxDerivativeOrder() == 1);
  CHECK(curve.eval(0.3)(0, 0) == doctest::Approx(std::sin(0.3)).epsilon(1e-12));
  CHECK(curve.eval(0.35)(0, 0) == doctest::Approx(std::sin(0.35)).epsilon(1e-3));
  CHECK(curve.eval(0.3, 1)(0, 0) == doctest::Approx(std::cos(0.3)).epsilon(1e-2));
  CHECK_THROWS_AS(curve.eval(0.3, 2), CapabilityError);
}

TEST_CASE("flow basics on the double integrator") {
  const auto sys = fixtures::doubleIntegrator();
  const FlowMap flow = buildFlow(sys.m);
  CHECK(flow.steps() == 1000);
  CHECK((flowAt(flow, 0.4, 0.4) - Matrix::Identity(2, 2)).norm() == 0.0);
  CHECK((flowAt(flow, 0.25, 0.75) - mat(2, 2, {1, 0.5, 0, 1})).norm() < 1e-12);
  CHECK((flowAt(flow, 0.0, 1.0) * flowAt(flow, 1.0, 0.0) - Matrix::Identity(2, 2)).norm() < 1e-8);
  // Off-grid arguments.
  CHECK((flow.at(0.12345, 0.6789) - mat(2, 2, {1, 0.6789 - 0.12345, 0, 1})).norm() < 1e-10);
}

TEST_CASE("odd step counts are rounded up to even") {
  const auto sys = fixtures::rotation();
  CHECK(buildFlow(sys.m, FlowOptions{11, 1e-3}).steps() == 12);
  CHECK_THROWS_AS(buildFlow(sys.m, 1), ConfigError);
}

TEST_CASE("flow matches the oracle RK4 on a time-varying system") {
  const auto sys = fixtures::threeState();
  const FlowMap flow = buildFlow(sys.m, 400);
  const Matrix ref = oracle::rk4Flow(sys.mFn, 3, sys.T, 4000);
  CHECK((flow.end() - ref).norm() < 1e-10);
}

TEST_CASE("semigroup property on random grid triples") {
  const auto sys = fixtures::timeVarying();
  const FlowMap flow = buildFlow(sys.m, 200);
  std::mt19937 rng(3);
  std::uniform_int_distribution<int> idx(0, 200);
  for (int trial = 0; trial < 200; ++trial) {
    int a = idx(rng), b = idx(rng), c = idx(rng);
    int s = std::min({a, b, c}), t = std::max({a, b, c}), tau = a + b + c - s - t;
    const auto& g = flow.grid();
    const Matrix lhs = flow.at(g[tau], g[t]) * flow.at(g[s], g[tau]);
    CHECK((lhs - flow.at(g[s], g[t])).norm() <= 10 * flow.flowTol());
  }
}

TEST_CASE("central differences of Phi(0, t) match M Phi to second order") {
  const auto sys = fixtures::timeVarying();
  double prev = 0.0;
  for (int steps : {100, 200, 400}) {
    const FlowMap flow = buildFlow(sys.m, steps);
    const double h = flow.step();
    double err = 0.0;
    for (int k = 1; k < steps; ++k) {
      const Matrix fd = (flow.forward(k + 1) - flow.forward(k - 1)) / (2 * h);
      err = std::max(err, (fd - sys.mFn(flow.grid()[k]) * flow.forward(k)).norm());
    }
    if (prev > 0.0) CHECK(prev / err > 3.5);
    prev = err;
  }
}

TEST_CASE("RK4 error on the rotation system drops by at least 12 per halving") {
  const auto sys = fixtures::rotation();
  const double c = std::cos(1.0), s = std::sin(1.0);
  const Matrix exact = mat(2, 2, {c, s, -s, c});
  double prev = 0.0;
  for (int steps : {8, 16, 32, 64}) {
    // Coarse grids fail the default consistency tolerance by design.
    const double err = (buildFlow(sys.m, FlowOptions{steps, 1e-2}).end() - exact).norm();
    if (prev > 0.0) CHECK(prev / err >= 12.0);
    prev = err;
  }
}

TEST_CASE("growth bound ||Phi(s,t)|| <= exp(M1 |t - s|)") {
  const auto sys = fixtures::threeState();
  const FlowMap flow = buildFlow(sys.m, 100);
  const double m1 = flow.opNormBoundM1();
  const auto& g = flow.grid();
  for (int i = 0; i <= 100; i += 5)
    for (int j = 0; j <= 100; j += 5)
      CHECK(opNorm(flow.at(g[i], g[j])) / std::exp(m1 * std::abs(g[j] - g[i])) <= 1 + 1e-6);
}

TEST_CASE("the consistency check rejects under-resolved grids") {
  const auto sys = fixtures::rotation();
  CHECK_THROWS_AS(buildFlow(sys.m, 8), IntegrationError);
  CHECK(buildFlow(sys.m, 1000).consistencyDefect() < 1e-12);
}

TEST_CASE("an under-resolved stiff flow fails the consistency check") {
  auto m = MatrixCurve::polynomial({mat(2, 2, {0, 0, 0, 0}), mat(2, 2, {-400, 300, 0, 200})}, 1.0);
  CHECK_THROWS_AS(buildFlow(m, 4), IntegrationError);
}

TEST_CASE("non-square state matrices are rejected") {
  CHECK_THROWS_AS(buildFlow(MatrixCurve::constant(Matrix::Zero(2, 3), 1.0)), ShapeError);
}
