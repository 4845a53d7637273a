#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "lcot/linsys.hpp"
#include "lcot/quadrature.hpp"

namespace lcot {

/// Conjugate exponents p > 1 and q = p / (p - 1).
struct DualityExponents {
  double p = 2.0;
  double q = 2.0;

  static DualityExponents fromP(double p);
};

/// Duality map v -> |v|^{r-2} v, with 0 -> 0.
Vector jDual(const Vector& v, double r);

/// One control system (M, N) on a fixed grid, with everything the
/// point-to-point problems reuse: B_k = Phi(t_k, T) N(t_k), Simpson
/// weights, the Gramian and its inverse.
class ControlSystem {
 public:
  ControlSystem(FlowMap flow, MatrixCurve n);

  const FlowMap& flow() const { return flow_; }
  const MatrixCurve& inputMatrix() const { return n_; }
  int dim() const { return flow_.dim(); }
  int inputs() const { return n_.cols(); }
  double horizon() const { return flow_.horizon(); }

  /// Phi(t_k, T) N(t_k).
  const Matrix& steering(int k) const { return b_[k]; }
  /// Phi(t, T) N(t) at any t (interpolated between grid points).
  Matrix steeringAt(double t) const;
  const std::vector<double>& simpson() const { return weights_; }

  const Matrix& gramian() const { return gramian_; }
  double gramianMinEig() const { return gramMinEig_; }
  double gramTol() const { return gramTol_; }
  bool controllable() const { return gramMinEig_ > gramTol_; }
  /// G^{-1}; throws NotControllableError when G is singular.
  const Matrix& gramianInverse() const;

  /// sup over grid pairs of ||Phi(s, t)||, sup_t ||N(t)||, ||Phi(T, 0)||.
  double supFlowNorm() const { return supPhi_; }
  double supInputNorm() const { return supN_; }

  /// T ||Phi||_inf^p ||N||_inf^p ||G^{-1}||^p: c_p(x,y) <= C_p |y - Phi(0,T)x|^p.
  double analyticUpperConstant(double p) const;

 private:
  FlowMap flow_;
  MatrixCurve n_;
  std::vector<Matrix> b_;
  std::vector<double> weights_;
  Matrix gramian_;
  Matrix gramianInv_;
  double gramMinEig_ = 0.0;
  double gramTol_ = 0.0;
  double supPhi_ = 0.0;
  double supN_ = 0.0;
};

/// The control alpha(t) = j_q(B(t)^T xi) / p^{q-1} parametrised by a
/// multiplier xi, together with the quadrature rule used for every
/// integral of it.
///
/// The rule is composite Simpson on the flow grid. For single-input
/// systems with p != 2 the control has a power-type singularity in
/// some derivative wherever B(t)^T xi changes sign; Simpson panels
/// containing such a root are replaced by graded Gauss pieces that end
/// at the root, and nearby panels by Gauss pieces in sqrt|t - root|.
class ControlLaw {
 public:
  ControlLaw() = default;
  /// `system` must outlive the law.
  ControlLaw(const ControlSystem& system, Vector xi, DualityExponents exps,
             bool adaptive = true);

  const Vector& xi() const { return xi_; }
  const DualityExponents& exponents() const { return exps_; }

  /// alpha at an arbitrary time.
  Vector alphaAt(double t) const;
  /// alpha on the flow grid.
  const std::vector<Vector>& gridAlpha() const { return gridAlpha_; }

  const std::vector<QuadNode>& nodes() const { return nodes_; }
  const std::vector<Matrix>& nodeSteering() const { return nodeB_; }
  const std::vector<Vector>& nodeAlpha() const { return nodeAlpha_; }

  /// Integral over [0, T] of B alpha, i.e. E^0_{0,T}(alpha).
  Vector steeringIntegral() const;
  /// int_0^T |alpha|^p.
  double action() const;
  /// Dual functional (1/(q p^{q-1})) int |B^T xi|^q - <r, xi>.
  double dualValue(const Vector& r) const;
  /// Jacobian of steeringIntegral() with respect to xi.
  Matrix steeringJacobian(double regularization) const;

  /// Integral of B alpha over [0, t_k] for every grid index k.
  std::vector<Vector> cumulativeSteering() const;
  /// Integral of B alpha over [0, t] for arbitrary t, given the output
  /// of cumulativeSteering().
  Vector steeringUpTo(double t, const std::vector<Vector>& cumulative) const;

  /// Graded pieces of the panel [t_{2m}, t_{2m+2}], empty for Simpson panels.
  const std::vector<GradedPiece>& panelPieces(int panel) const;
  bool panelIsSplit(int panel) const { return !panelPieces(panel).empty(); }
  /// Panels containing a sign change of B^T xi.
  int splitPanelCount() const { return rootPanels_; }
  /// Root-free panels near a sign change that use the anchored rule.
  int anchoredPanelCount() const;

 private:
  Vector integrandAt(double t) const;
  Vector integrateSplit(int panel, double upTo) const;

  const ControlSystem* system_ = nullptr;
  Vector xi_;
  DualityExponents exps_;
  std::vector<Vector> gridAlpha_;
  std::vector<QuadNode> nodes_;
  std::vector<Matrix> nodeB_;
  std::vector<Vector> nodeAlpha_;
  std::vector<std::vector<GradedPiece>> pieces_;
  int rootPanels_ = 0;
};

/// Reach of the anchored rule around sign changes, relative to T.
inline constexpr double kAnchorReach = 0.1;

struct SolverOptions {
  /// Endpoint residual target, relative to 1 + |y|.
  double solveTol = 1e-8;
  int maxIter = 200;
  double quadTol = 1e-8;
  /// Overrides the default starting multiplier.
  std::optional<Vector> initialXi;
  /// Disable only for diagnostics: forces plain Simpson everywhere.
  bool adaptiveQuadrature = true;
};

struct OptimalControl {
  Vector x;
  Vector y;
  double p = 2.0;
  double cost = 0.0;
  Vector xi;
  std::vector<Vector> alphaSamples;
  double endpointResidual = 0.0;
  int solverIterations = 0;
  ControlLaw law;
};

/// E^x_{0,T}(alpha) for controls sampled on the flow grid (Simpson).
Vector endpoint(const ControlSystem& system, const Vector& x,
                const std::vector<Vector>& alphaSamples);

/// Closed-form minimum-energy control for p = 2.
OptimalControl solveP2(const ControlSystem& system, const Vector& x, const Vector& y);

/// Minimum of int |alpha|^p over controls steering x to y, via damped
/// Newton on the strictly convex dual functional in xi.
OptimalControl solveGeneralP(const ControlSystem& system, const Vector& x, const Vector& y,
                             const DualityExponents& exps, const SolverOptions& opts = {});

/// solveP2 for p = 2 and solveGeneralP otherwise; endpoints already
/// joined by the free flow short-circuit to the zero control.
OptimalControl solvePoint(const ControlSystem& system, const Vector& x, const Vector& y,
                          const DualityExponents& exps, const SolverOptions& opts = {});

/// d_p(x, z) = c_p(x, Phi(0,T) z)^{1/p}.
double costMetric(const ControlSystem& system, const Vector& x, const Vector& z,
                  const DualityExponents& exps, const SolverOptions& opts = {});

struct ComparisonBounds {
  double lower = 0.0;  ///< empirical K1
  double upper = 0.0;  ///< empirical K2
  double analyticUpper = 0.0;  ///< C_p
  std::vector<double> ratios;
  Vector lowerDirection;
  Vector upperDirection;
  int skipped = 0;
  bool upperWithinAnalytic = false;
};

/// Samples c_p(x, y) / |y - Phi(0,T)x|^p over random pairs.
ComparisonBounds comparisonBounds(const ControlSystem& system, const DualityExponents& exps,
                                  int sampleCount, std::uint64_t seed,
                                  const SolverOptions& opts = {});

}  // namespace lcot
