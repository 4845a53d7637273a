#pragma once

#include <vector>

#include "lcot/cost.hpp"
#include "lcot/linsys.hpp"

namespace lcot {

/// Finitely supported probability measure sum_i w_i delta_{x_i}.
struct DiscreteMeasure {
  std::vector<Vector> points;
  std::vector<double> weights;

  int size() const { return static_cast<int>(points.size()); }
  int dim() const { return points.empty() ? 0 : static_cast<int>(points.front().size()); }

  /// Throws InputError unless weights are positive, sum to 1 within
  /// 1e-12 and every point is finite with a common dimension.
  void validate() const;
  double moment(double p) const;

  static DiscreteMeasure uniform(std::vector<Vector> points);
};

struct PlanEntry {
  int i = 0;
  int j = 0;
  double mass = 0.0;

  bool operator==(const PlanEntry&) const = default;
};

struct TransportPlan {
  int sources = 0;
  int targets = 0;
  /// Positive-mass cells in row-major order.
  std::vector<PlanEntry> entries;
  double cost = 0.0;
  int iterations = 0;
  /// Dual potentials: u_i + v_j <= c_ij, with equality on basic cells.
  Vector u;
  Vector v;
  /// Basic cells of the final simplex tableau (sources + targets - 1).
  std::vector<std::pair<int, int>> basis;

  Matrix dense() const;
  Vector rowSums() const;
  Vector colSums() const;
};

struct SimplexOptions {
  /// Reduced costs above -optimalityTol * (1 + max|c|) count as nonnegative.
  double optimalityTol = 1e-13;
  /// Pivot cap; zero selects 50 * m * n + 1000.
  int maxPivots = 0;
};

struct SinkhornOptions {
  double epsilon = 1e-2;
  int maxIter = 100000;
  /// Stop once both marginals are matched to this l1 accuracy.
  double tolerance = 1e-10;
};

/// Entry (i, j) is c_p(x_i, y_j); evaluated with up to `threads` workers.
/// Solver failures are reported with the offending indices.
Matrix costMatrix(const ControlSystem& system, const DiscreteMeasure& mu,
                  const DiscreteMeasure& nu, const DualityExponents& exps,
                  const SolverOptions& opts = {}, int threads = 1);

/// Exact transportation simplex: northwest-corner start, MODI potentials,
/// Bland's rule for entering and leaving cells.
TransportPlan solvePlan(const Matrix& costs, const std::vector<double>& mu,
                        const std::vector<double>& nu, const SimplexOptions& opts = {});
TransportPlan solvePlan(const Matrix& costs, const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                        const SimplexOptions& opts = {});

/// Entropic approximation by log-domain Sinkhorn iterations. `cost` is
/// the transport cost of the regularised plan (entropy term excluded),
/// biased upward relative to the exact optimum.
TransportPlan sinkhorn(const Matrix& costs, const std::vector<double>& mu,
                       const std::vector<double>& nu, const SinkhornOptions& opts = {});

}  // namespace lcot
