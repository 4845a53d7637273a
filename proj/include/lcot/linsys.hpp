#pragma once

#include <limits>
#include <vector>

#include <Eigen/Dense>

namespace lcot {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Operator (spectral) norm of a matrix.
double opNorm(const Matrix& a);

/// A time-dependent real matrix on [0, T].
///
/// Three representations are supported:
///  * constant: the same matrix on the whole horizon;
///  * polynomial: sum_k C_k t^k, with exact derivatives of every order;
///  * sampled: values on a uniform grid, interpolated by cubic Hermite
///    segments whose knot slopes are centred differences of the samples.
///    Only the value and the first derivative are exposed for this form.
///
/// Curves are immutable once built.
class MatrixCurve {
 public:
  enum class Form { kConstant, kPolynomial, kSampled };

  static constexpr int kUnlimitedOrder = std::numeric_limits<int>::max();

  static MatrixCurve constant(Matrix value, double horizon);
  /// `coefficients[k]` multiplies t^k.
  static MatrixCurve polynomial(std::vector<Matrix> coefficients,
                                double horizon);
  /// Horizon is dt * (values.size() - 1).
  static MatrixCurve sampled(double dt, std::vector<Matrix> values);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  double horizon() const { return horizon_; }
  Form form() const { return form_; }

  /// Highest derivative order `eval` accepts.
  int maxDerivativeOrder() const {
    return form_ == Form::kSampled ? 1 : kUnlimitedOrder;
  }

  /// Returns the `order`-th derivative at t (order 0 is the value).
  /// Throws DomainError for t outside [0, T] and CapabilityError when
  /// the order exceeds `maxDerivativeOrder()`.
  Matrix eval(double t, int order = 0) const;

  /// True when the curve value does not depend on t.
  bool isConstant() const;

  /// Polynomial coefficients (constant curves report one coefficient).
  /// Empty for sampled curves.
  const std::vector<Matrix>& coefficients() const { return coeffs_; }
  const std::vector<Matrix>& samples() const { return samples_; }
  double sampleStep() const { return dt_; }

  /// Empty 0 x 0 curve; only useful as a placeholder.
  MatrixCurve() = default;

 private:
  double clampTime(double t) const;
  Matrix evalSampled(double t, int order) const;

  Form form_ = Form::kConstant;
  int rows_ = 0;
  int cols_ = 0;
  double horizon_ = 0.0;
  std::vector<Matrix> coeffs_;
  std::vector<Matrix> samples_;
  std::vector<Matrix> slopes_;
  double dt_ = 0.0;
};

Matrix evalCurve(const MatrixCurve& curve, double t, int derivOrder = 0);

struct FlowOptions {
  int gridSteps = 1000;
  double flowTol = 1e-8;
};

/// Tabulated state-transition family of x' = M(t) x on a uniform grid
/// 0 = t_0 < ... < t_K = T, K even.
///
/// Holds Phi(0, t_k), Phi(t_k, T) and their inverses. Grid queries are
/// table lookups; off-grid queries use entrywise four-point Lagrange
/// interpolation of the tables, accurate to O(h^4).
class FlowMap {
 public:
  int dim() const { return dim_; }
  int steps() const { return static_cast<int>(grid_.size()) - 1; }
  double horizon() const { return grid_.back(); }
  double step() const { return step_; }
  const std::vector<double>& grid() const { return grid_; }
  double flowTol() const { return flowTol_; }
  /// sup_t ||M(t)|| over the grid and the Runge-Kutta midpoints.
  double opNormBoundM1() const { return m1_; }

  /// Phi(0, t_k).
  const Matrix& forward(int k) const { return forward_[k]; }
  /// Phi(t_k, T).
  const Matrix& backward(int k) const { return backward_[k]; }
  /// Phi(T, t_k) = Phi(t_k, T)^{-1}.
  const Matrix& backwardInverse(int k) const { return backwardInv_[k]; }
  /// Phi(t_k, 0) = Phi(0, t_k)^{-1}.
  const Matrix& forwardInverse(int k) const { return forwardInv_[k]; }
  /// Phi(0, T).
  const Matrix& end() const { return forward_.back(); }

  /// Phi(s, t) for arbitrary s, t in [0, T].
  Matrix at(double s, double t) const;
  /// Phi(0, t), Phi(t, T) and Phi(T, t) at arbitrary t.
  Matrix forwardAt(double t) const;
  Matrix backwardAt(double t) const;
  Matrix backwardInverseAt(double t) const;

  /// Grid index of t when t is a grid point (within round-off), else -1.
  int gridIndex(double t) const;

  /// Largest consistency defect ||Phi(t_k,T) Phi(0,t_k) - Phi(0,T)||_F
  /// found while building.
  double consistencyDefect() const { return defect_; }

  /// The curve M the table was built from.
  const MatrixCurve& drift() const { return drift_; }

 private:
  friend FlowMap buildFlow(const MatrixCurve&, const FlowOptions&);
  Matrix interpolate(const std::vector<Matrix>& table, double t) const;
  void checkTime(double t) const;

  MatrixCurve drift_;
  int dim_ = 0;
  double step_ = 0.0;
  double flowTol_ = 1e-8;
  double m1_ = 0.0;
  double defect_ = 0.0;
  std::vector<double> grid_;
  std::vector<Matrix> forward_;
  std::vector<Matrix> backward_;
  std::vector<Matrix> forwardInv_;
  std::vector<Matrix> backwardInv_;
};

/// Integrates dPhi/dt = M(t) Phi forward from the identity and
/// dPsi/ds = -Psi M(s) backward from the identity with classical RK4.
/// An odd step count is rounded up to the next even number so that
/// composite Simpson rules apply on the grid.
FlowMap buildFlow(const MatrixCurve& m, const FlowOptions& options = {});
FlowMap buildFlow(const MatrixCurve& m, int gridSteps);

Matrix flowAt(const FlowMap& flow, double s, double t);

}  // namespace lcot
