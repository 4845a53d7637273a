#include <doctest.h>

#include <cmath>

#include "lcot/dynamic.hpp"
#include "lcot/errors.hpp"
#include "systems.hpp"

using namespace lcot;
using fixtures::mat;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(v.size());
  int i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

struct Problem {
  ControlSystem system;
  DiscreteMeasure mu;
  DiscreteMeasure nu;
};

Problem euclideanProblem(int steps = 200) {
  const auto sys = fixtures::euclidean(2);
  return {ControlSystem(buildFlow(sys.m, steps), sys.n),
          DiscreteMeasure::uniform({vec({0, 0}), vec({1, 0}), vec({0, 1})}),
          DiscreteMeasure::uniform({vec({2, 0}), vec({2, 1}), vec({1, 2})})};
}

PathEnsemble ensembleFor(const Problem& pr, double p) {
  const auto exps = DualityExponents::fromP(p);
  const Matrix c = costMatrix(pr.system, pr.mu, pr.nu, exps);
  return planToEnsemble(solvePlan(c, pr.mu, pr.nu), pr.mu, pr.nu, pr.system, exps);
}

}  // namespace

TEST_CASE("single atom: one path carrying all mass") {
  const auto sys = fixtures::doubleIntegrator();
  const ControlSystem system(buildFlow(sys.m), sys.n);
  const auto mu = DiscreteMeasure::uniform({vec({0, 0})});
  const auto nu = DiscreteMeasure::uniform({vec({1, 0})});
  const auto exps = DualityExponents::fromP(2.0);
  const auto plan = solvePlan(costMatrix(system, mu, nu, exps), mu, nu);
  const auto ensemble = planToEnsemble(plan, mu, nu, system, exps);
  REQUIRE(ensemble.paths.size() == 1);
  const auto& path = ensemble.paths[0];
  CHECK(path.weight == 1.0);
  CHECK((path.states.front() - vec({0, 0})).norm() == 0.0);
  CHECK((path.states.back() - vec({1, 0})).norm() < 1e-10);
  // gamma(t) = (3t^2 - 2t^3, 6t - 6t^2).
  const double t = 0.3;
  CHECK((path.states[300] - vec({3 * t * t - 2 * t * t * t, 6 * t - 6 * t * t})).norm() < 1e-10);
  CHECK((path.stateAt(system, 0.3051) -
         vec({3 * 0.3051 * 0.3051 - 2 * std::pow(0.3051, 3), 6 * 0.3051 - 6 * 0.3051 * 0.3051}))
            .norm() < 1e-8);
  CHECK(dynamicAction(ensemble).pathAction == doctest::Approx(12.0).epsilon(1e-9));
  CHECK(validateEnsemble(ensemble).valid);
}

TEST_CASE("pairs joined by the free flow have zero control") {
  const auto sys = fixtures::rotation();
  const ControlSystem system(buildFlow(sys.m), sys.n);
  const auto mu = DiscreteMeasure::uniform({vec({1, 0}), vec({0, -1})});
  std::vector<Vector> ys;
  for (const auto& x : mu.points) ys.push_back(system.flow().end() * x);
  const auto nu = DiscreteMeasure::uniform(ys);
  const auto exps = DualityExponents::fromP(3.0);
  const auto plan = solvePlan(costMatrix(system, mu, nu, exps), mu, nu);
  const auto ensemble = planToEnsemble(plan, mu, nu, system, exps);
  for (const auto& path : ensemble.paths) {
    CHECK(path.action == 0.0);
    for (const auto& a : path.controls) CHECK(a.norm() == 0.0);
    CHECK((path.states[500] - system.flow().forward(500) * mu.points[path.source]).norm() < 1e-14);
  }
  CHECK(dynamicAction(ensemble).pathAction == 0.0);
}

TEST_CASE("plan to ensemble to plan is the identity") {
  const Problem pr = euclideanProblem();
  const auto exps = DualityExponents::fromP(2.0);
  const auto plan = solvePlan(costMatrix(pr.system, pr.mu, pr.nu, exps), pr.mu, pr.nu);
  const auto back = ensembleToPlan(planToEnsemble(plan, pr.mu, pr.nu, pr.system, exps));
  CHECK(back.entries == plan.entries);
}

TEST_CASE("plans with the wrong marginals are rejected") {
  const Problem pr = euclideanProblem(50);
  TransportPlan plan;
  plan.sources = 3;
  plan.targets = 3;
  plan.entries = {{0, 0, 0.5}, {1, 1, 0.25}, {2, 2, 0.25}};
  CHECK_THROWS_AS(planToEnsemble(plan, pr.mu, pr.nu, pr.system, DualityExponents::fromP(2.0)), InputError);
}

TEST_CASE("Euclidean ensembles move on straight lines and match static cost") {
  const Problem pr = euclideanProblem();
  for (double p : {1.5, 2.0, 3.0}) {
    const auto exps = DualityExponents::fromP(p);
    const Matrix c = costMatrix(pr.system, pr.mu, pr.nu, exps);
    const auto plan = solvePlan(c, pr.mu, pr.nu);
    const auto ensemble = planToEnsemble(plan, pr.mu, pr.nu, pr.system, exps);
    const auto action = dynamicAction(ensemble);
    CHECK(action.pathAction == doctest::Approx(plan.cost).epsilon(1e-9));
    for (const auto& path : ensemble.paths) {
      const Vector x = pr.mu.points[path.source], y = pr.nu.points[path.target];
      CHECK((path.states[100] - 0.5 * (x + y)).norm() < 1e-12);
    }
    CHECK(validateEnsemble(ensemble).valid);
  }
}

TEST_CASE("path action is invariant under relabelling the atoms") {
  const Problem pr = euclideanProblem();
  Problem swapped{pr.system,
                  DiscreteMeasure::uniform({pr.mu.points[2], pr.mu.points[0], pr.mu.points[1]}),
                  DiscreteMeasure::uniform({pr.nu.points[1], pr.nu.points[2], pr.nu.points[0]})};
  const double a = dynamicAction(ensembleFor(pr, 3.0)).pathAction;
  const double b = dynamicAction(ensembleFor(swapped, 3.0)).pathAction;
  CHECK(a == doctest::Approx(b).epsilon(1e-12));
}

TEST_CASE("validation flags broken ensembles") {
  const Problem pr = euclideanProblem(100);
  auto ensemble = ensembleFor(pr, 2.0);
  CHECK(validateEnsemble(ensemble).valid);
  ensemble.paths[0].states[40] += vec({1e-3, 0});
  const auto check = validateEnsemble(ensemble);
  CHECK_FALSE(check.valid);
  CHECK(check.worstStep > 1e-8);
}

TEST_CASE("crossing paths are detected and the field action does not exceed the path action") {
  // Two segments crossing at (0.5, 0.5) at t = 1/2.
  const auto sys = fixtures::euclidean(2);
  const ControlSystem system(buildFlow(sys.m, 100), sys.n);
  const auto mu = DiscreteMeasure::uniform({vec({0, 0}), vec({1, 0})});
  const auto nu = DiscreteMeasure::uniform({vec({1, 1}), vec({0, 1})});
  const auto exps = DualityExponents::fromP(2.0);
  TransportPlan plan;
  plan.sources = plan.targets = 2;
  plan.entries = {{0, 0, 0.5}, {1, 1, 0.5}};
  const auto ensemble = planToEnsemble(plan, mu, nu, system, exps);
  const auto coincidences = detectCoincidences(ensemble);
  REQUIRE(coincidences.size() == 1);
  CHECK(coincidences[0].gridIndex == 50);
  CHECK(coincidences[0].t == doctest::Approx(0.5));
  const auto action = dynamicAction(ensemble);
  REQUIRE(action.fieldAction.has_value());
  CHECK(*action.fieldAction <= action.gridPathAction + 1e-12);
  CHECK(action.fieldMayBeSmaller);
  // Endpoint coincidences alone are not reported.
  const auto shared = DiscreteMeasure::uniform({vec({0, 0}), vec({0, 0})});
  const auto far = DiscreteMeasure::uniform({vec({1, 0}), vec({0, 1})});
  plan.entries = {{0, 0, 0.5}, {1, 1, 0.5}};
  CHECK(detectCoincidences(planToEnsemble(plan, shared, far, system, exps)).empty());
}

TEST_CASE("continuity residual vanishes for the identity-flow ensemble") {
  const Problem pr = euclideanProblem();
  for (double p : {1.5, 2.0, 3.0}) {
    const auto ensemble = ensembleFor(pr, p);
    const auto tests = defaultTestBattery(2, 1.0, dataRadius(ensemble));
    CHECK(tests.size() == 6);
    for (const auto& r : continuityResidual(ensemble, tests, 2)) CHECK(std::abs(r.residual) <= 1e-6 * (1 + r.c1Norm));
  }
}

TEST_CASE("residuals on a time-varying single-input system") {
  const auto sys = fixtures::timeVarying();
  const ControlSystem system(buildFlow(sys.m), sys.n);
  const auto mu = DiscreteMeasure::uniform({vec({0, 0}), vec({0.5, -0.5}), vec({-0.3, 0.2})});
  const auto nu = DiscreteMeasure::uniform({vec({1, 0.5}), vec({0.2, 1}), vec({-0.8, -0.4})});
  const auto exps = DualityExponents::fromP(3.0);
  const auto plan = solvePlan(costMatrix(system, mu, nu, exps), mu, nu);
  const auto ensemble = planToEnsemble(plan, mu, nu, system, exps);
  const auto tests = defaultTestBattery(2, 1.0, dataRadius(ensemble));
  for (const auto& r : continuityResidual(ensemble, tests)) CHECK(std::abs(r.residual) <= 1e-6 * (1 + r.c1Norm));
}

TEST_CASE("zero test function and non-vanishing test functions") {
  const Problem pr = euclideanProblem(100);
  const auto ensemble = ensembleFor(pr, 2.0);
  TestFunction zero{"zero", [](double, const Vector&) { return 0.0; }, [](double, const Vector&) { return 0.0; },
                    [](double, const Vector& x) { return Vector::Zero(x.size()).eval(); }};
  CHECK(continuityResidual(ensemble, {zero})[0].residual == 0.0);
  TestFunction constant{"one", [](double, const Vector&) { return 1.0; }, [](double, const Vector&) { return 0.0; },
                        [](double, const Vector& x) { return Vector::Zero(x.size()).eval(); }};
  CHECK_THROWS_AS(continuityResidual(ensemble, {constant}), InputError);
}

TEST_CASE("test battery derivatives match finite differences") {
  const auto tests = defaultTestBattery(2, 1.0, 1.0);
  const Vector x = vec({0.9, 1.1});  // inside the cutoff transition region
  const double t = 0.37, h = 1e-6;
  for (const auto& phi : tests) {
    const double dt = (phi.value(t + h, x) - phi.value(t - h, x)) / (2 * h);
    CHECK(phi.dt(t, x) == doctest::Approx(dt).epsilon(1e-6));
    for (int i = 0; i < 2; ++i) {
      Vector e = Vector::Zero(2);
      e(i) = h;
      const double dx = (phi.value(t, x + e) - phi.value(t, x - e)) / (2 * h);
      CHECK(phi.grad(t, x)(i) == doctest::Approx(dx).epsilon(1e-6));
    }
    CHECK(phi.value(0.0, x) == 0.0);
    CHECK(phi.value(1.0, x) == 0.0);
  }
}

TEST_CASE("moment bound holds along the path measure") {
  const auto sys = fixtures::rotation();
  const ControlSystem system(buildFlow(sys.m), sys.n);
  const auto mu = DiscreteMeasure::uniform({vec({1, 0}), vec({0, 2})});
  const auto nu = DiscreteMeasure::uniform({vec({-1, 1}), vec({2, 0.5})});
  for (double p : {1.5, 2.0, 3.0}) {
    const auto exps = DualityExponents::fromP(p);
    const auto plan = solvePlan(costMatrix(system, mu, nu, exps), mu, nu);
    const auto report = momentBound(planToEnsemble(plan, mu, nu, system, exps));
    CHECK(report.holds);
    CHECK(report.supMoment <= report.bound);
    CHECK(report.supMoment >= std::min(mu.moment(p), nu.moment(p)) - 1e-12);
  }
}

TEST_CASE("endpoint-preserving perturbations never lower the action") {
  const auto sys = fixtures::doubleIntegrator();
  const ControlSystem system(buildFlow(sys.m), sys.n);
  const auto mu = DiscreteMeasure::uniform({vec({0, 0}), vec({0.5, 0.2})});
  const auto nu = DiscreteMeasure::uniform({vec({1, 0}), vec({-0.5, 0.4})});
  for (double p : {1.5, 3.0}) {
    const auto exps = DualityExponents::fromP(p);
    const auto plan = solvePlan(costMatrix(system, mu, nu, exps), mu, nu);
    const auto ensemble = planToEnsemble(plan, mu, nu, system, exps);
    for (int k = 0; k < static_cast<int>(ensemble.paths.size()); ++k) {
      for (double delta : {1e-3, 1e-1, 0.5}) {
        const auto sample = perturbPath(ensemble, k, delta, 7 + k);
        CHECK(sample.endpointShift < 1e-10);
        CHECK(sample.action >= ensemble.paths[k].action * (1 - 1e-9));
      }
    }
  }
}

TEST_CASE("full equivalence check on a small time-varying problem") {
  const auto sys = fixtures::timeVarying();
  const ControlSystem system(buildFlow(sys.m), sys.n);
  const auto mu = DiscreteMeasure::uniform({vec({0, 0}), vec({0.5, -0.5}), vec({-0.3, 0.2})});
  const auto nu = DiscreteMeasure::uniform({vec({1, 0.5}), vec({0.2, 1}), vec({-0.8, -0.4})});
  for (double p : {1.5, 2.0, 3.0}) {
    EquivalenceOptions opts;
    opts.perturbations = 4;
    const auto report = verifyEquivalence(system, mu, nu, DualityExponents::fromP(p), opts);
    CHECK(report.gapOk);
    CHECK(report.relativeGap <= 1e-8);
    CHECK(report.perturbationsOk);
    CHECK(report.residualsOk);
    CHECK(report.moments.holds);
    CHECK(report.ok);
    CHECK(report.perturbations.size() == 4);
  }
}
