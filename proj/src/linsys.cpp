#include "lcot/linsys.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "lcot/errors.hpp"

namespace lcot {

double opNorm(const Matrix& a) {
  if (a.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(a);
  return svd.singularValues()(0);
}

namespace {

constexpr double kTimeSlack = 1e-12;

double fallingFactorial(int j, int k) {
  double f = 1.0;
  for (int i = 0; i < k; ++i) f *= static_cast<double>(j - i);
  return f;
}

bool allFinite(const Matrix& a) { return a.allFinite(); }

}  // namespace

MatrixCurve MatrixCurve::constant(Matrix value, double horizon) {
  if (value.size() == 0) throw ShapeError("constant curve with empty matrix");
  if (!(horizon >= 0.0) || !std::isfinite(horizon))
    throw DomainError("curve horizon must be a finite nonnegative number");
  if (!allFinite(value)) throw DomainError("constant curve has non-finite entries");
  MatrixCurve c;
  c.form_ = Form::kConstant;
  c.rows_ = static_cast<int>(value.rows());
  c.cols_ = static_cast<int>(value.cols());
  c.horizon_ = horizon;
  c.coeffs_.push_back(std::move(value));
  return c;
}

MatrixCurve MatrixCurve::polynomial(std::vector<Matrix> coefficients,
                                    double horizon) {
  if (coefficients.empty()) throw ShapeError("polynomial curve without coefficients");
  if (!(horizon >= 0.0) || !std::isfinite(horizon))
    throw DomainError("curve horizon must be a finite nonnegative number");
  const auto r = coefficients.front().rows();
  const auto c = coefficients.front().cols();
  if (r == 0 || c == 0) throw ShapeError("polynomial curve with empty matrix");
  for (const auto& m : coefficients) {
    if (m.rows() != r || m.cols() != c)
      throw ShapeError("polynomial coefficients have inconsistent shapes");
    if (!allFinite(m)) throw DomainError("polynomial curve has non-finite coefficients");
  }
  MatrixCurve curve;
  curve.form_ = Form::kPolynomial;
  curve.rows_ = static_cast<int>(r);
  curve.cols_ = static_cast<int>(c);
  curve.horizon_ = horizon;
  curve.coeffs_ = std::move(coefficients);
  return curve;
}

MatrixCurve MatrixCurve::sampled(double dt, std::vector<Matrix> values) {
  if (values.size() < 2) throw ShapeError("sampled curve needs at least two samples");
  if (!(dt > 0.0) || !std::isfinite(dt)) throw DomainError("sample step must be positive");
  const auto r = values.front().rows();
  const auto c = values.front().cols();
  if (r == 0 || c == 0) throw ShapeError("sampled curve with empty matrix");
  for (const auto& m : values) {
    if (m.rows() != r || m.cols() != c)
      throw ShapeError("samples have inconsistent shapes");
    if (!allFinite(m)) throw DomainError("sampled curve has non-finite entries");
  }
  MatrixCurve curve;
  curve.form_ = Form::kSampled;
  curve.rows_ = static_cast<int>(r);
  curve.cols_ = static_cast<int>(c);
  curve.dt_ = dt;
  curve.horizon_ = dt * static_cast<double>(values.size() - 1);
  const std::size_t n = values.size();
  curve.slopes_.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    if (k == 0) {
      curve.slopes_[k] = (values[1] - values[0]) / dt;
    } else if (k + 1 == n) {
      curve.slopes_[k] = (values[n - 1] - values[n - 2]) / dt;
    } else {
      curve.slopes_[k] = (values[k + 1] - values[k - 1]) / (2.0 * dt);
    }
  }
  curve.samples_ = std::move(values);
  return curve;
}

bool MatrixCurve::isConstant() const {
  if (form_ == Form::kConstant) return true;
  if (form_ == Form::kPolynomial) {
    for (std::size_t k = 1; k < coeffs_.size(); ++k)
      if (!coeffs_[k].isZero(0.0)) return false;
    return true;
  }
  for (const auto& s : samples_)
    if (s != samples_.front()) return false;
  return true;
}

double MatrixCurve::clampTime(double t) const {
  const double slack = kTimeSlack * std::max(1.0, horizon_);
  if (!(t >= -slack && t <= horizon_ + slack)) {
    std::ostringstream os;
    os << "time " << t << " outside [0, " << horizon_ << "]";
    throw DomainError(os.str());
  }
  return std::clamp(t, 0.0, horizon_);
}

Matrix MatrixCurve::eval(double t, int order) const {
  if (order < 0) throw DomainError("negative derivative order");
  t = clampTime(t);
  switch (form_) {
    case Form::kConstant:
      if (order == 0) return coeffs_.front();
      return Matrix::Zero(rows_, cols_);
    case Form::kPolynomial: {
      Matrix out = Matrix::Zero(rows_, cols_);
      const int degree = static_cast<int>(coeffs_.size()) - 1;
      // Horner on the differentiated coefficients.
      for (int j = degree; j >= order; --j) {
        out = out * t + fallingFactorial(j, order) * coeffs_[j];
      }
      return out;
    }
    case Form::kSampled:
      if (order > 1) {
        throw CapabilityError(
            "sampled curves expose derivatives up to order 1 only (requested " +
            std::to_string(order) + ")");
      }
      return evalSampled(t, order);
  }
  return {};
}

Matrix MatrixCurve::evalSampled(double t, int order) const {
  const int last = static_cast<int>(samples_.size()) - 1;
  int k = static_cast<int>(std::floor(t / dt_));
  k = std::clamp(k, 0, last - 1);
  const double s = (t - k * dt_) / dt_;
  const Matrix& p0 = samples_[k];
  const Matrix& p1 = samples_[k + 1];
  const Matrix m0 = slopes_[k] * dt_;
  const Matrix m1 = slopes_[k + 1] * dt_;
  if (order == 0) {
    const double s2 = s * s, s3 = s2 * s;
    return (2 * s3 - 3 * s2 + 1) * p0 + (s3 - 2 * s2 + s) * m0 +
           (-2 * s3 + 3 * s2) * p1 + (s3 - s2) * m1;
  }
  const double s2 = s * s;
  return ((6 * s2 - 6 * s) * p0 + (3 * s2 - 4 * s + 1) * m0 +
          (-6 * s2 + 6 * s) * p1 + (3 * s2 - 2 * s) * m1) /
         dt_;
}

Matrix evalCurve(const MatrixCurve& curve, double t, int derivOrder) {
  return curve.eval(t, derivOrder);
}

// ---------------------------------------------------------------------------

namespace {

template <class F>
Matrix rk4Step(const F& f, double t, const Matrix& y, double h) {
  const Matrix k1 = f(t, y);
  const Matrix k2 = f(t + 0.5 * h, y + 0.5 * h * k1);
  const Matrix k3 = f(t + 0.5 * h, y + 0.5 * h * k2);
  const Matrix k4 = f(t + h, y + h * k3);
  return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

Matrix invertFlow(const Matrix& a, double t) {
  Eigen::FullPivLU<Matrix> lu(a);
  if (!lu.isInvertible()) {
    std::ostringstream os;
    os << "state-transition matrix is singular at t = " << t
       << " (integration blow-up)";
    throw NumericalError(os.str());
  }
  Matrix inv = lu.inverse();
  if (!inv.allFinite()) throw NumericalError("non-finite flow inverse");
  return inv;
}

}  // namespace

FlowMap buildFlow(const MatrixCurve& m, int gridSteps) {
  FlowOptions opts;
  opts.gridSteps = gridSteps;
  return buildFlow(m, opts);
}

FlowMap buildFlow(const MatrixCurve& m, const FlowOptions& options) {
  if (m.rows() != m.cols()) {
    throw ShapeError("state matrix must be square, got " + std::to_string(m.rows()) +
                     "x" + std::to_string(m.cols()));
  }
  if (options.gridSteps < 2) throw ConfigError("gridSteps must be at least 2");
  if (!(options.flowTol > 0.0)) throw ConfigError("flowTol must be positive");
  const double horizon = m.horizon();
  if (!(horizon > 0.0)) throw DomainError("flow horizon must be positive");

  const int steps = options.gridSteps + (options.gridSteps % 2);
  const int d = m.rows();
  const double h = horizon / steps;

  FlowMap flow;
  flow.drift_ = m;
  flow.dim_ = d;
  flow.step_ = h;
  flow.flowTol_ = options.flowTol;
  flow.grid_.resize(steps + 1);
  for (int k = 0; k <= steps; ++k) flow.grid_[k] = horizon * k / steps;
  flow.grid_.back() = horizon;

  // Cache M on the grid and at midpoints; RK4 only queries these.
  std::vector<Matrix> mGrid(steps + 1), mMid(steps);
  const bool constant = m.isConstant();
  const Matrix m0 = m.eval(0.0);
  for (int k = 0; k <= steps; ++k) mGrid[k] = constant ? m0 : m.eval(flow.grid_[k]);
  for (int k = 0; k < steps; ++k)
    mMid[k] = constant ? m0 : m.eval(std::min(horizon, (k + 0.5) * h));

  double m1 = 0.0;
  if (constant) {
    m1 = opNorm(m0);
  } else {
    for (const auto& a : mGrid) m1 = std::max(m1, opNorm(a));
    for (const auto& a : mMid) m1 = std::max(m1, opNorm(a));
  }
  flow.m1_ = m1;

  auto mAt = [&](double t) -> const Matrix& {
    const double rel = t / h;
    const int k = static_cast<int>(std::lround(2.0 * rel));
    if (k % 2 == 0) return mGrid[std::clamp(k / 2, 0, steps)];
    return mMid[std::clamp((k - 1) / 2, 0, steps - 1)];
  };

  const Matrix eye = Matrix::Identity(d, d);
  flow.forward_.resize(steps + 1);
  flow.forward_[0] = eye;
  auto fwd = [&](double t, const Matrix& y) -> Matrix { return mAt(t) * y; };
  for (int k = 0; k < steps; ++k)
    flow.forward_[k + 1] = rk4Step(fwd, flow.grid_[k], flow.forward_[k], h);

  // The backward flow takes two half steps per interval. With matching
  // steps its RK4 step matrices would equal the forward ones exactly and
  // the consistency check below would only see roundoff.
  std::vector<Matrix> mQuarter(2 * steps);
  for (int k = 0; k < 2 * steps; ++k)
    mQuarter[k] = constant ? m0 : m.eval(std::min(horizon, (k + 0.5) * h / 2));
  auto mFine = [&](double t) -> const Matrix& {
    const int k = static_cast<int>(std::lround(4.0 * t / h));
    if (k % 2 == 0) return mAt(t);
    return mQuarter[std::clamp((k - 1) / 2, 0, 2 * steps - 1)];
  };
  flow.backward_.resize(steps + 1);
  flow.backward_[steps] = eye;
  auto bwd = [&](double s, const Matrix& y) -> Matrix { return -(y * mFine(s)); };
  for (int k = steps; k > 0; --k) {
    const Matrix half = rk4Step(bwd, flow.grid_[k], flow.backward_[k], -h / 2);
    flow.backward_[k - 1] = rk4Step(bwd, flow.grid_[k] - h / 2, half, -h / 2);
  }

  for (int k = 0; k <= steps; ++k) {
    if (!flow.forward_[k].allFinite() || !flow.backward_[k].allFinite())
      throw NumericalError("flow integration produced non-finite values");
  }

  const Matrix& end = flow.forward_.back();
  const double scale = std::max(1.0, end.norm());
  double worst = 0.0;
  int worstK = 0;
  for (int k = 0; k <= steps; ++k) {
    const double defect = (flow.backward_[k] * flow.forward_[k] - end).norm();
    if (defect > worst) {
      worst = defect;
      worstK = k;
    }
  }
  flow.defect_ = worst;
  if (worst > options.flowTol * scale) {
    std::ostringstream os;
    os << "flow consistency check failed: ||Phi(t_k,T)Phi(0,t_k) - Phi(0,T)||_F = "
       << worst << " at t_k = " << flow.grid_[worstK] << " exceeds " << options.flowTol * scale
       << "; refine gridSteps (currently " << steps << ")";
    throw IntegrationError(os.str());
  }

  flow.forwardInv_.resize(steps + 1);
  flow.backwardInv_.resize(steps + 1);
  for (int k = 0; k <= steps; ++k) {
    flow.forwardInv_[k] = invertFlow(flow.forward_[k], flow.grid_[k]);
    flow.backwardInv_[k] = invertFlow(flow.backward_[k], flow.grid_[k]);
  }
  return flow;
}

void FlowMap::checkTime(double t) const {
  const double slack = kTimeSlack * std::max(1.0, horizon());
  if (!(t >= -slack && t <= horizon() + slack)) {
    std::ostringstream os;
    os << "time " << t << " outside [0, " << horizon() << "]";
    throw DomainError(os.str());
  }
}

int FlowMap::gridIndex(double t) const {
  const double rel = t / step_;
  const long k = std::lround(rel);
  if (k < 0 || k > steps()) return -1;
  if (std::abs(grid_[k] - t) <= kTimeSlack * std::max(1.0, horizon())) return static_cast<int>(k);
  return -1;
}

Matrix FlowMap::interpolate(const std::vector<Matrix>& table, double t) const {
  checkTime(t);
  const int idx = gridIndex(t);
  if (idx >= 0) return table[idx];
  const int last = steps();
  int k = static_cast<int>(std::floor(t / step_));
  k = std::clamp(k, 0, last - 1);
  // Four-point window around [t_k, t_{k+1}], shifted inside the grid.
  int lo = std::clamp(k - 1, 0, std::max(0, last - 3));
  const int count = std::min(4, last + 1);
  Matrix out = Matrix::Zero(table[0].rows(), table[0].cols());
  for (int i = 0; i < count; ++i) {
    double w = 1.0;
    const double ti = grid_[lo + i];
    for (int j = 0; j < count; ++j) {
      if (j == i) continue;
      const double tj = grid_[lo + j];
      w *= (t - tj) / (ti - tj);
    }
    out += w * table[lo + i];
  }
  return out;
}

Matrix FlowMap::forwardAt(double t) const { return interpolate(forward_, t); }
Matrix FlowMap::backwardAt(double t) const { return interpolate(backward_, t); }
Matrix FlowMap::backwardInverseAt(double t) const { return interpolate(backwardInv_, t); }

Matrix FlowMap::at(double s, double t) const {
  checkTime(s);
  checkTime(t);
  const int is = gridIndex(s);
  const int it = gridIndex(t);
  if (is >= 0 && it >= 0) {
    if (is == it) return Matrix::Identity(dim_, dim_);
    if (it == steps()) return backward_[is];
    return forward_[it] * forwardInv_[is];
  }
  const Matrix fs_inv = interpolate(forwardInv_, s);
  const Matrix ft = interpolate(forward_, t);
  return ft * fs_inv;
}

Matrix flowAt(const FlowMap& flow, double s, double t) { return flow.at(s, t); }

}  // namespace lcot
