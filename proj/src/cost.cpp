#include "lcot/cost.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include <boost/math/tools/roots.hpp>

#include "lcot/control.hpp"
#include "lcot/errors.hpp"

namespace lcot {

DualityExponents DualityExponents::fromP(double p) {
  if (!(p > 1.0) || !std::isfinite(p)) throw DomainError("exponent p must be a finite number > 1");
  return {p, p / (p - 1.0)};
}

Vector jDual(const Vector& v, double r) {
  const double norm = v.norm();
  if (norm == 0.0) return Vector::Zero(v.size());
  if (r == 2.0) return v;
  return std::pow(norm, r - 2.0) * v;
}

// ---------------------------------------------------------------------------
// ControlSystem

ControlSystem::ControlSystem(FlowMap flow, MatrixCurve n)
    : flow_(std::move(flow)), n_(std::move(n)) {
  if (n_.rows() != flow_.dim())
    throw ShapeError("N has " + std::to_string(n_.rows()) + " rows, flow dimension is " +
                     std::to_string(flow_.dim()));
  if (n_.cols() > n_.rows()) throw ShapeError("N must satisfy 1 <= n <= d");
  if (std::abs(n_.horizon() - flow_.horizon()) > 1e-12 * std::max(1.0, flow_.horizon()))
    throw ConfigError("N and the flow are defined on different horizons");

  const int steps = flow_.steps();
  const bool constant = n_.isConstant();
  const Matrix n0 = n_.eval(0.0);
  b_.resize(steps + 1);
  supN_ = constant ? opNorm(n0) : 0.0;
  for (int k = 0; k <= steps; ++k) {
    const Matrix nk = constant ? n0 : n_.eval(flow_.grid()[k]);
    if (!constant) supN_ = std::max(supN_, opNorm(nk));
    b_[k] = flow_.backward(k) * nk;
  }
  weights_ = simpsonWeights(steps, flow_.step());
  gramian_ = lcot::gramian(flow_, n_);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(gramian_, Eigen::EigenvaluesOnly);
  gramMinEig_ = eig.eigenvalues()(0);
  gramTol_ = 1e-12 * gramian_.trace() / flow_.dim();
  if (gramMinEig_ > gramTol_) gramianInv_ = gramian_.ldlt().solve(Matrix::Identity(dim(), dim()));

  // sup ||Phi(s,t)|| over a strided set of grid pairs (always including 0 and T).
  const int stride = std::max(1, steps / 100);
  std::vector<int> idx;
  for (int k = 0; k < steps; k += stride) idx.push_back(k);
  idx.push_back(steps);
  supPhi_ = 1.0;
  for (int i : idx) {
    for (int j : idx) {
      if (i == j) continue;
      supPhi_ = std::max(supPhi_, opNorm(flow_.forward(j) * flow_.forwardInverse(i)));
    }
  }
}

Matrix ControlSystem::steeringAt(double t) const {
  const int k = flow_.gridIndex(t);
  if (k >= 0) return b_[k];
  return flow_.backwardAt(t) * n_.eval(t);
}

const Matrix& ControlSystem::gramianInverse() const {
  if (!controllable()) {
    std::ostringstream os;
    os << "controllability Gramian is singular (min eigenvalue " << gramMinEig_ << ")";
    throw NotControllableError(os.str());
  }
  return gramianInv_;
}

double ControlSystem::analyticUpperConstant(double p) const {
  const double ginv = opNorm(gramianInverse());
  return horizon() * std::pow(supPhi_ * supN_ * ginv, p);
}

// ---------------------------------------------------------------------------
// ControlLaw

namespace {

double scalarPowNorm(const Vector& v, double r) {
  const double n = v.norm();
  return n == 0.0 ? 0.0 : std::pow(n, r);
}

}  // namespace

ControlLaw::ControlLaw(const ControlSystem& system, Vector xi, DualityExponents exps,
                       bool adaptive)
    : system_(&system), xi_(std::move(xi)), exps_(exps) {
  if (xi_.size() != system.dim()) throw ShapeError("multiplier has the wrong dimension");
  const FlowMap& flow = system.flow();
  const int steps = flow.steps();
  const double h = flow.step();
  const double scale = 1.0 / std::pow(exps_.p, exps_.q - 1.0);

  std::vector<double> wGrid(steps + 1);
  gridAlpha_.resize(steps + 1);
  for (int k = 0; k <= steps; ++k) {
    const Vector w = system.steering(k).transpose() * xi_;
    gridAlpha_[k] = scale * jDual(w, exps_.q);
    wGrid[k] = w.size() == 1 ? w(0) : w.norm();
  }

  const int panels = steps / 2;
  pieces_.assign(panels, {});
  const bool split = adaptive && system.inputs() == 1 && exps_.p != 2.0 && xi_.norm() > 0.0;
  std::vector<double> gridWeight(steps + 1, 0.0);
  std::vector<QuadNode> offGrid;

  auto wAt = [&](double t) { return (system.steeringAt(t).transpose() * xi_)(0); };

  std::vector<std::vector<double>> panelRoots(panels);
  std::vector<double> allRoots;
  if (split) {
    for (int m = 0; m < panels; ++m) {
      auto& roots = panelRoots[m];
      for (int k = 2 * m; k < 2 * m + 2; ++k) {
        const double wl = wGrid[k], wr = wGrid[k + 1];
        const double tl = flow.grid()[k], tr = flow.grid()[k + 1];
        if (wl == 0.0) roots.push_back(tl);
        if (wr == 0.0) roots.push_back(tr);
        if (wl * wr < 0.0) {
          boost::math::tools::eps_tolerance<double> tol(52);
          std::uintmax_t iters = 100;
          const auto bracket =
              boost::math::tools::toms748_solve(wAt, tl, tr, wl, wr, tol, iters);
          roots.push_back(0.5 * (bracket.first + bracket.second));
        }
      }
      std::sort(roots.begin(), roots.end());
      roots.erase(std::unique(roots.begin(), roots.end()), roots.end());
      allRoots.insert(allRoots.end(), roots.begin(), roots.end());
    }
    std::sort(allRoots.begin(), allRoots.end());
  }
  // Near a root the control behaves like |t - r|^{q-1}; unless q - 1 is an
  // integer, Simpson panels within kAnchorReach * T of the root lose order
  // and are integrated in the variable u = sqrt|t - r| instead.
  const double qm1 = exps_.q - 1.0;
  const bool anchorNeighbours = split && std::abs(qm1 - std::round(qm1)) > 1e-12;
  const double reach = kAnchorReach * flow.horizon();
  auto nearestRoot = [&](double a, double b, double& root) {
    auto it = std::lower_bound(allRoots.begin(), allRoots.end(), a);
    double best = INFINITY;
    if (it != allRoots.end() && *it - b < best) {
      best = *it - b;
      root = *it;
    }
    if (it != allRoots.begin() && a - *(it - 1) < best) {
      best = a - *(it - 1);
      root = *(it - 1);
    }
    return best;
  };

  using S = GradedPiece::Singular;
  rootPanels_ = 0;
  for (int m = 0; m < panels; ++m) {
    const int k0 = 2 * m;
    const auto& roots = panelRoots[m];
    const double a = flow.grid()[k0], mid = flow.grid()[k0 + 1], b = flow.grid()[k0 + 2];
    auto& pieces = pieces_[m];
    if (roots.empty()) {
      double root = 0.0;
      if (anchorNeighbours && nearestRoot(a, b, root) < reach) {
        pieces.push_back({a, mid, S::kAnchored, root});
        pieces.push_back({mid, b, S::kAnchored, root});
      } else {
        gridWeight[k0] += h / 3.0;
        gridWeight[k0 + 1] += 4.0 * h / 3.0;
        gridWeight[k0 + 2] += h / 3.0;
        continue;
      }
    } else {
      ++rootPanels_;
      std::vector<double> breaks{a};
      for (double r : roots) {
        if (r > breaks.back()) breaks.push_back(r);
      }
      if (b > breaks.back()) breaks.push_back(b);
      auto isRoot = [&](double t) {
        return std::find(roots.begin(), roots.end(), t) != roots.end();
      };
      for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
        const double lo = breaks[i], hi = breaks[i + 1];
        const bool sl = isRoot(lo), sh = isRoot(hi);
        if (sl && sh) {
          const double half = 0.5 * (lo + hi);
          pieces.push_back({lo, half, S::kLow});
          pieces.push_back({half, hi, S::kHigh});
        } else {
          pieces.push_back({lo, hi, sl ? S::kLow : (sh ? S::kHigh : S::kNone)});
        }
      }
    }
    for (const auto& piece : pieces) {
      auto nodes = piece.nodes();
      offGrid.insert(offGrid.end(), nodes.begin(), nodes.end());
    }
  }

  for (int k = 0; k <= steps; ++k) {
    if (gridWeight[k] > 0.0) nodes_.push_back({flow.grid()[k], gridWeight[k], k});
  }
  nodes_.insert(nodes_.end(), offGrid.begin(), offGrid.end());
  nodeB_.reserve(nodes_.size());
  nodeAlpha_.reserve(nodes_.size());
  for (const auto& node : nodes_) {
    if (node.gridIndex >= 0) {
      nodeB_.push_back(system.steering(node.gridIndex));
      nodeAlpha_.push_back(gridAlpha_[node.gridIndex]);
    } else {
      Matrix b = system.steeringAt(node.t);
      nodeAlpha_.push_back(scale * jDual(b.transpose() * xi_, exps_.q));
      nodeB_.push_back(std::move(b));
    }
  }
}

Vector ControlLaw::alphaAt(double t) const {
  const int k = system_->flow().gridIndex(t);
  if (k >= 0) return gridAlpha_[k];
  const double scale = 1.0 / std::pow(exps_.p, exps_.q - 1.0);
  return scale * jDual(system_->steeringAt(t).transpose() * xi_, exps_.q);
}

Vector ControlLaw::integrandAt(double t) const {
  const int k = system_->flow().gridIndex(t);
  if (k >= 0) return system_->steering(k) * gridAlpha_[k];
  const Matrix b = system_->steeringAt(t);
  const double scale = 1.0 / std::pow(exps_.p, exps_.q - 1.0);
  return b * (scale * jDual(b.transpose() * xi_, exps_.q));
}

Vector ControlLaw::steeringIntegral() const {
  Vector acc = Vector::Zero(system_->dim());
  for (std::size_t i = 0; i < nodes_.size(); ++i) acc += nodes_[i].weight * (nodeB_[i] * nodeAlpha_[i]);
  return acc;
}

double ControlLaw::action() const {
  double acc = 0.0;
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    acc += nodes_[i].weight * scalarPowNorm(nodeAlpha_[i], exps_.p);
  return acc;
}

double ControlLaw::dualValue(const Vector& r) const {
  const double scale = 1.0 / (exps_.q * std::pow(exps_.p, exps_.q - 1.0));
  double acc = 0.0;
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    acc += nodes_[i].weight * scalarPowNorm(nodeB_[i].transpose() * xi_, exps_.q);
  return scale * acc - r.dot(xi_);
}

Matrix ControlLaw::steeringJacobian(double regularization) const {
  const int d = system_->dim();
  const double q = exps_.q;
  const double scale = 1.0 / std::pow(exps_.p, q - 1.0);
  Matrix jac = Matrix::Zero(d, d);
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Matrix& b = nodeB_[i];
    const Vector w = b.transpose() * xi_;
    const double norm = w.norm();
    Matrix dj;
    if (q == 2.0) {
      dj = Matrix::Identity(w.size(), w.size());
    } else if (norm == 0.0) {
      // |w|^{q-2} vanishes for q > 2 and is unbounded for q < 2; the
      // regularisation below covers the latter.
      continue;
    } else {
      const Vector hat = w / norm;
      dj = std::pow(norm, q - 2.0) *
           (Matrix::Identity(w.size(), w.size()) + (q - 2.0) * hat * hat.transpose());
    }
    jac += nodes_[i].weight * (b * dj * b.transpose());
  }
  jac *= scale;
  if (regularization > 0.0) {
    const double tr = jac.trace();
    jac += regularization * (tr > 0.0 ? tr / d : 1.0) * Matrix::Identity(d, d);
  }
  return 0.5 * (jac + jac.transpose());
}

const std::vector<GradedPiece>& ControlLaw::panelPieces(int panel) const {
  return pieces_.at(panel);
}

int ControlLaw::anchoredPanelCount() const {
  return static_cast<int>(std::count_if(pieces_.begin(), pieces_.end(), [](const auto& p) {
    return !p.empty() && p.front().singular == GradedPiece::Singular::kAnchored;
  }));
}

Vector ControlLaw::integrateSplit(int panel, double upTo) const {
  Vector acc = Vector::Zero(system_->dim());
  for (const auto& piece : pieces_[panel]) {
    if (piece.lo >= upTo) break;
    for (const auto& node : piece.nodesUpTo(std::min(upTo, piece.hi)))
      acc += node.weight * integrandAt(node.t);
  }
  return acc;
}

std::vector<Vector> ControlLaw::cumulativeSteering() const {
  const FlowMap& flow = system_->flow();
  const int steps = flow.steps();
  const double h = flow.step();
  std::vector<Vector> g(steps + 1);
  for (int k = 0; k <= steps; ++k) g[k] = system_->steering(k) * gridAlpha_[k];
  std::vector<Vector> s(steps + 1);
  s[0] = Vector::Zero(system_->dim());
  for (int m = 0; m < steps / 2; ++m) {
    const int k = 2 * m;
    if (pieces_[m].empty()) {
      s[k + 1] = s[k] + h * (5.0 * g[k] + 8.0 * g[k + 1] - g[k + 2]) / 12.0;
      s[k + 2] = s[k] + h * (g[k] + 4.0 * g[k + 1] + g[k + 2]) / 3.0;
    } else {
      s[k + 1] = s[k] + integrateSplit(m, flow.grid()[k + 1]);
      s[k + 2] = s[k] + integrateSplit(m, flow.grid()[k + 2]);
    }
  }
  return s;
}

Vector ControlLaw::steeringUpTo(double t, const std::vector<Vector>& cumulative) const {
  const FlowMap& flow = system_->flow();
  const int k = flow.gridIndex(t);
  if (k >= 0) return cumulative[k];
  const int steps = flow.steps();
  const double h = flow.step();
  int m = static_cast<int>(std::floor(t / (2.0 * h)));
  m = std::clamp(m, 0, steps / 2 - 1);
  const int k0 = 2 * m;
  if (!pieces_[m].empty()) return cumulative[k0] + integrateSplit(m, t);
  // Integral of the quadratic through the panel's three samples.
  const double s = (t - flow.grid()[k0]) / h;
  const double s2 = s * s, s3 = s2 * s;
  const double c0 = (s3 / 3.0 - 1.5 * s2 + 2.0 * s) / 2.0;
  const double c1 = -(s3 / 3.0 - s2);
  const double c2 = (s3 / 3.0 - 0.5 * s2) / 2.0;
  const Vector g0 = system_->steering(k0) * gridAlpha_[k0];
  const Vector g1 = system_->steering(k0 + 1) * gridAlpha_[k0 + 1];
  const Vector g2 = system_->steering(k0 + 2) * gridAlpha_[k0 + 2];
  return cumulative[k0] + h * (c0 * g0 + c1 * g1 + c2 * g2);
}

// ---------------------------------------------------------------------------
// Point-to-point problems

Vector endpoint(const ControlSystem& system, const Vector& x,
                const std::vector<Vector>& alphaSamples) {
  const int steps = system.flow().steps();
  if (static_cast<int>(alphaSamples.size()) != steps + 1)
    throw ConfigError("control samples are not aligned with the flow grid (" +
                      std::to_string(alphaSamples.size()) + " samples, " +
                      std::to_string(steps + 1) + " grid points)");
  if (x.size() != system.dim()) throw ShapeError("initial state has the wrong dimension");
  Vector acc = system.flow().end() * x;
  const auto& w = system.simpson();
  for (int k = 0; k <= steps; ++k) {
    if (alphaSamples[k].size() != system.inputs())
      throw ShapeError("control sample has the wrong dimension");
    acc += w[k] * (system.steering(k) * alphaSamples[k]);
  }
  return acc;
}

namespace {

void checkEndpoints(const ControlSystem& system, const Vector& x, const Vector& y) {
  if (x.size() != system.dim() || y.size() != system.dim())
    throw ShapeError("endpoints must have dimension " + std::to_string(system.dim()));
  if (!x.allFinite() || !y.allFinite()) throw DomainError("endpoints must be finite");
}

OptimalControl zeroSolution(const ControlSystem& system, const Vector& x, const Vector& y,
                            double p, double residual) {
  OptimalControl out;
  out.x = x;
  out.y = y;
  out.p = p;
  out.cost = 0.0;
  out.xi = Vector::Zero(system.dim());
  out.law = ControlLaw(system, out.xi, DualityExponents::fromP(p), false);
  out.alphaSamples = out.law.gridAlpha();
  out.endpointResidual = residual;
  return out;
}

void finalize(OptimalControl& out, const ControlSystem& system) {
  out.xi = out.law.xi();
  out.alphaSamples = out.law.gridAlpha();
  out.cost = out.law.action();
  out.endpointResidual =
      (system.flow().end() * out.x + out.law.steeringIntegral() - out.y).norm();
}

}  // namespace

OptimalControl solveP2(const ControlSystem& system, const Vector& x, const Vector& y) {
  checkEndpoints(system, x, y);
  const Vector r = y - system.flow().end() * x;
  const Matrix& ginv = system.gramianInverse();
  const Vector lambda = ginv * r;
  OptimalControl out;
  out.x = x;
  out.y = y;
  out.p = 2.0;
  out.law = ControlLaw(system, 2.0 * lambda, DualityExponents::fromP(2.0), false);
  finalize(out, system);
  // Closed form r^T G^{-1} r; agrees with the quadrature of |alpha|^2.
  out.cost = r.dot(lambda);
  return out;
}

OptimalControl solveGeneralP(const ControlSystem& system, const Vector& x, const Vector& y,
                             const DualityExponents& exps, const SolverOptions& opts) {
  checkEndpoints(system, x, y);
  if (!(exps.p > 1.0)) throw DomainError("exponent p must exceed 1");
  const Vector r = y - system.flow().end() * x;
  const double target = opts.solveTol * (1.0 + y.norm());
  if (r.norm() <= opts.solveTol) return zeroSolution(system, x, y, exps.p, r.norm());

  const int d = system.dim();
  const Matrix& ginv = system.gramianInverse();
  const bool adaptive = opts.adaptiveQuadrature;
  const double reg = exps.q < 2.0 ? 1e-12 : 0.0;

  Vector xi;
  if (opts.initialXi) {
    if (opts.initialXi->size() != d) throw ShapeError("initial multiplier has the wrong dimension");
    xi = *opts.initialXi;
  } else {
    xi = exps.p * (ginv * r);
    if (exps.p != 2.0) {
      // E^0(alpha_{s xi}) = s^{q-1} E^0(alpha_xi): rescale to match |r|.
      const ControlLaw probe(system, xi, exps, adaptive);
      const Vector e = probe.steeringIntegral();
      const double num = r.dot(e), den = e.squaredNorm();
      if (num > 0.0 && den > 0.0) xi *= std::pow(num / den, 1.0 / (exps.q - 1.0));
    }
  }
  if (xi.norm() == 0.0) xi = exps.p * (ginv * r);

  ControlLaw law(system, xi, exps, adaptive);
  Vector grad = law.steeringIntegral() - r;
  double gradNorm = grad.norm();
  double value = law.dualValue(r);
  double bbStep = 0.0;
  Vector prevXi, prevGrad;

  int iter = 0;
  for (; iter < opts.maxIter && gradNorm > target; ++iter) {
    Vector dir;
    const Matrix jac = law.steeringJacobian(reg);
    Eigen::LDLT<Matrix> ldlt(jac);
    if (ldlt.info() == Eigen::Success) {
      dir = -ldlt.solve(grad);
      if (!dir.allFinite() || grad.dot(dir) >= 0.0) dir.resize(0);
    }
    bool newton = dir.size() == d;
    if (!newton) {
      if (!(bbStep > 0.0)) bbStep = 1.0 / std::max(1e-300, jac.diagonal().cwiseAbs().maxCoeff());
      dir = -bbStep * grad;
    }

    // Armijo backtracking on the dual functional; near the optimum the
    // decrease is at round-off level, so a step that shrinks the
    // residual is accepted as well.
    double step = 1.0;
    bool accepted = false;
    ControlLaw trial;
    double trialValue = 0.0;
    Vector trialGrad;
    for (int ls = 0; ls < 60; ++ls) {
      const Vector candidate = xi + step * dir;
      trial = ControlLaw(system, candidate, exps, adaptive);
      trialValue = trial.dualValue(r);
      trialGrad = trial.steeringIntegral() - r;
      if (trialValue <= value + 1e-4 * step * grad.dot(dir) || trialGrad.norm() < gradNorm) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      if (newton) {
        // Fall back to a gradient step on the next iteration.
        bbStep = 0.0;
        dir.resize(0);
        Vector g = -grad;
        double s = 1.0 / std::max(1e-300, jac.diagonal().cwiseAbs().maxCoeff());
        for (int ls = 0; ls < 60 && !accepted; ++ls) {
          trial = ControlLaw(system, xi + s * g, exps, adaptive);
          trialValue = trial.dualValue(r);
          trialGrad = trial.steeringIntegral() - r;
          if (trialValue < value) accepted = true;
          else s *= 0.5;
        }
      }
      if (!accepted) break;
    }
    prevXi = xi;
    prevGrad = grad;
    xi = trial.xi();
    law = std::move(trial);
    value = trialValue;
    grad = trialGrad;
    gradNorm = grad.norm();
    const Vector sDelta = xi - prevXi, yDelta = grad - prevGrad;
    const double sy = sDelta.dot(yDelta);
    bbStep = sy > 0.0 ? sDelta.squaredNorm() / sy : 0.0;
  }

  if (!(gradNorm <= target)) {
    std::ostringstream os;
    os << "dual Newton solver did not converge after " << iter
       << " iterations (best endpoint residual " << gradNorm << ", target " << target << ")";
    throw SolverError(os.str());
  }
  OptimalControl out;
  out.x = x;
  out.y = y;
  out.p = exps.p;
  out.law = std::move(law);
  out.solverIterations = iter;
  finalize(out, system);
  return out;
}

OptimalControl solvePoint(const ControlSystem& system, const Vector& x, const Vector& y,
                          const DualityExponents& exps, const SolverOptions& opts) {
  if (exps.p != 2.0) return solveGeneralP(system, x, y, exps, opts);
  checkEndpoints(system, x, y);
  const double r = (y - system.flow().end() * x).norm();
  if (r <= opts.solveTol) return zeroSolution(system, x, y, 2.0, r);
  return solveP2(system, x, y);
}

double costMetric(const ControlSystem& system, const Vector& x, const Vector& z,
                  const DualityExponents& exps, const SolverOptions& opts) {
  const Vector target = system.flow().end() * z;
  const OptimalControl oc = solveGeneralP(system, x, target, exps, opts);
  return std::pow(oc.cost, 1.0 / exps.p);
}

ComparisonBounds comparisonBounds(const ControlSystem& system, const DualityExponents& exps,
                                  int sampleCount, std::uint64_t seed,
                                  const SolverOptions& opts) {
  if (sampleCount <= 0) throw DomainError("sampleCount must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> radius(0.25, 2.0);
  const int d = system.dim();
  ComparisonBounds out;
  out.lower = std::numeric_limits<double>::infinity();
  out.upper = 0.0;
  for (int s = 0; s < sampleCount; ++s) {
    Vector x(d), u(d);
    for (int i = 0; i < d; ++i) x(i) = gauss(rng);
    for (int i = 0; i < d; ++i) u(i) = gauss(rng);
    const double un = u.norm();
    const double rho = radius(rng);
    if (un == 0.0) {
      ++out.skipped;
      continue;
    }
    u /= un;
    const Vector y = system.flow().end() * x + rho * u;
    const double gap = (y - system.flow().end() * x).norm();
    if (gap <= opts.solveTol) {
      ++out.skipped;
      continue;
    }
    const OptimalControl oc = solveGeneralP(system, x, y, exps, opts);
    const double ratio = oc.cost / std::pow(gap, exps.p);
    out.ratios.push_back(ratio);
    if (ratio < out.lower) {
      out.lower = ratio;
      out.lowerDirection = u;
    }
    if (ratio > out.upper) {
      out.upper = ratio;
      out.upperDirection = u;
    }
  }
  out.analyticUpper = system.analyticUpperConstant(exps.p);
  out.upperWithinAnalytic = out.upper <= out.analyticUpper;
  return out;
}

}  // namespace lcot
