#include "lcot/control.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "lcot/errors.hpp"
#include "lcot/quadrature.hpp"

namespace lcot {

namespace {

double binomial(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

void checkPair(const MatrixCurve& m, const MatrixCurve& n) {
  if (m.rows() != m.cols()) throw ShapeError("M must be square");
  if (n.rows() != m.rows())
    throw ShapeError("N must have as many rows as M (" + std::to_string(m.rows()) + ")");
}

}  // namespace

int rankConditionDepth(int d, int n) {
  if (d <= 0 || n <= 0) throw ShapeError("dimensions must be positive");
  return d / n;
}

std::vector<Matrix> matrixPolynomials(const MatrixCurve& m, const MatrixCurve& n,
                                      double t, int kMax) {
  checkPair(m, n);
  if (kMax < 0) throw DomainError("kMax must be nonnegative");
  const int available = std::min(m.maxDerivativeOrder(), n.maxDerivativeOrder());
  if (kMax >= 2 && available < kMax) {
    throw CapabilityError("matrix polynomials up to order " + std::to_string(kMax) +
                          " need exact derivatives; sampled curves provide order 1 only");
  }
  // table[k][j] = j-th derivative of P_k at t, for j <= kMax - k.
  std::vector<Matrix> mDeriv(kMax), nDeriv(kMax + 1);
  for (int j = 0; j < kMax; ++j) mDeriv[j] = m.eval(t, j);
  for (int j = 0; j <= kMax; ++j) nDeriv[j] = n.eval(t, j);

  std::vector<std::vector<Matrix>> table(kMax + 1);
  table[0] = nDeriv;
  for (int k = 1; k <= kMax; ++k) {
    const int depth = kMax - k;
    table[k].resize(depth + 1);
    for (int j = 0; j <= depth; ++j) {
      Matrix acc = table[k - 1][j + 1];
      for (int i = 0; i <= j; ++i) acc -= binomial(j, i) * mDeriv[i] * table[k - 1][j - i];
      table[k][j] = std::move(acc);
    }
  }
  std::vector<Matrix> out(kMax + 1);
  for (int k = 0; k <= kMax; ++k) out[k] = table[k][0];
  return out;
}

int numericalRank(const Matrix& a, double relTol, Vector* singularValues) {
  if (a.size() == 0) {
    if (singularValues) singularValues->resize(0);
    return 0;
  }
  Eigen::JacobiSVD<Matrix> svd(a);
  const Vector& s = svd.singularValues();
  if (singularValues) *singularValues = s;
  const double top = s(0);
  if (!(top > 0.0)) return 0;
  int rank = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s(i) > relTol * top) ++rank;
  return rank;
}

ControllabilityReport rankCondition(const MatrixCurve& m, const MatrixCurve& n,
                                    const ControlOptions& options) {
  checkPair(m, n);
  ControllabilityReport report;
  const int d = m.rows();
  const int inputs = n.cols();
  report.beta = rankConditionDepth(d, inputs);
  report.blocks = matrixPolynomials(m, n, m.horizon(), report.beta);
  report.rankMatrix.resize(d, (report.beta + 1) * inputs);
  for (int k = 0; k <= report.beta; ++k)
    report.rankMatrix.middleCols(k * inputs, inputs) = report.blocks[k];
  report.numericalRank = numericalRank(report.rankMatrix, options.rankTol, &report.singularValues);
  report.rankControllable = report.numericalRank == d;
  report.method = ControllabilityReport::Method::kRank;
  report.controllable = report.rankControllable;
  return report;
}

std::vector<Matrix> completeBell(const std::vector<Matrix>& args, int kMax) {
  if (kMax < 0) throw DomainError("kMax must be nonnegative");
  if (static_cast<int>(args.size()) < kMax)
    throw DomainError("complete Bell polynomial needs kMax arguments");
  const Eigen::Index d = kMax > 0 ? args.front().rows() : 0;
  std::vector<Matrix> bell;
  bell.reserve(kMax + 1);
  bell.push_back(kMax > 0 ? Matrix::Identity(d, d) : Matrix::Identity(1, 1));
  for (int k = 0; k < kMax; ++k) {
    Matrix next = Matrix::Zero(d, d);
    for (int i = 0; i <= k; ++i) next += binomial(k, i) * bell[k - i] * args[i];
    bell.push_back(std::move(next));
  }
  return bell;
}

std::vector<Matrix> bellRankBlocks(const MatrixCurve& m, const MatrixCurve& n) {
  return bellRankBlocks(m, n, rankConditionDepth(m.rows(), n.cols()));
}

std::vector<Matrix> bellRankBlocks(const MatrixCurve& m, const MatrixCurve& n, int kMax) {
  checkPair(m, n);
  const double horizon = m.horizon();
  // Commutation on a sample of time pairs.
  constexpr int kProbe = 7;
  std::vector<Matrix> probes;
  for (int i = 0; i < kProbe; ++i) probes.push_back(m.eval(horizon * i / (kProbe - 1)));
  double worst = 0.0;
  for (int i = 0; i < kProbe; ++i) {
    for (int j = i + 1; j < kProbe; ++j) {
      const double scale = std::max(1.0, probes[i].norm() * probes[j].norm());
      worst = std::max(worst, (probes[i] * probes[j] - probes[j] * probes[i]).norm() / scale);
    }
  }
  if (worst > 1e-10) {
    std::ostringstream os;
    os << "M(t) does not commute with itself (residual " << worst
       << "); Bell-polynomial blocks do not apply";
    throw PreconditionError(os.str());
  }
  std::vector<Matrix> args;
  for (int i = 0; i < kMax; ++i) args.push_back(-m.eval(horizon, i));
  const int d = m.rows();
  std::vector<Matrix> bell;
  if (kMax == 0) {
    bell.push_back(Matrix::Identity(d, d));
  } else {
    bell = completeBell(args, kMax);
  }
  std::vector<Matrix> nDeriv(kMax + 1);
  for (int j = 0; j <= kMax; ++j) nDeriv[j] = n.eval(horizon, j);
  std::vector<Matrix> blocks(kMax + 1);
  for (int k = 0; k <= kMax; ++k) {
    Matrix acc = Matrix::Zero(d, n.cols());
    for (int j = 0; j <= k; ++j) acc += binomial(k, j) * bell[j] * nDeriv[k - j];
    blocks[k] = std::move(acc);
  }
  return blocks;
}

Matrix gramian(const FlowMap& flow, const MatrixCurve& n) {
  if (n.rows() != flow.dim()) throw ShapeError("N rows do not match the flow dimension");
  if (std::abs(n.horizon() - flow.horizon()) > 1e-12 * std::max(1.0, flow.horizon()))
    throw ConfigError("N and the flow are defined on different horizons");
  const int steps = flow.steps();
  const auto w = simpsonWeights(steps, flow.step());
  const bool constant = n.isConstant();
  const Matrix n0 = n.eval(0.0);
  Matrix g = Matrix::Zero(flow.dim(), flow.dim());
  for (int k = 0; k <= steps; ++k) {
    const Matrix b = flow.backward(k) * (constant ? n0 : n.eval(flow.grid()[k]));
    g += w[k] * (b * b.transpose());
  }
  return 0.5 * (g + g.transpose());
}

ControllabilityReport analyzeControllability(const MatrixCurve& m, const MatrixCurve& n,
                                             const FlowMap& flow,
                                             ControllabilityReport::Method method,
                                             const ControlOptions& options) {
  using Method = ControllabilityReport::Method;
  ControllabilityReport report;
  checkPair(m, n);
  if (method == Method::kRank || method == Method::kBoth) {
    report = rankCondition(m, n, options);
  } else {
    report.beta = rankConditionDepth(m.rows(), n.cols());
  }
  if (method == Method::kGramian || method == Method::kBoth) {
    report.gramian = gramian(flow, n);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(report.gramian, Eigen::EigenvaluesOnly);
    report.gramianEigenvalues = eig.eigenvalues();
    report.gramianMinEig = report.gramianEigenvalues(0);
    report.gramTol = options.gramTolFactor * report.gramian.trace() / flow.dim();
    report.gramianControllable = report.gramianMinEig > report.gramTol;
  }
  report.method = method;
  switch (method) {
    case Method::kRank:
      report.controllable = report.rankControllable;
      break;
    case Method::kGramian:
      report.controllable = report.gramianControllable;
      break;
    case Method::kBoth:
      // The rank test is sufficient, the Gramian test necessary and sufficient.
      report.controllable = report.rankControllable || report.gramianControllable;
      break;
  }
  return report;
}

}  // namespace lcot
