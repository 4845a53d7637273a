#include "lcot/transport.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "lcot/errors.hpp"

namespace lcot {

void DiscreteMeasure::validate() const {
  if (points.empty()) throw InputError("measure has no atoms");
  if (points.size() != weights.size())
    throw InputError("measure has " + std::to_string(points.size()) + " points but " +
                     std::to_string(weights.size()) + " weights");
  const auto d = points.front().size();
  double total = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (points[i].size() != d) throw InputError("atom " + std::to_string(i) + " has the wrong dimension");
    if (!points[i].allFinite()) throw InputError("atom " + std::to_string(i) + " is not finite");
    if (!(weights[i] > 0.0) || !std::isfinite(weights[i]))
      throw InputError("atom " + std::to_string(i) + " has a nonpositive weight");
    total += weights[i];
  }
  if (std::abs(total - 1.0) > 1e-12) {
    std::ostringstream os;
    os.precision(17);
    os << "measure weights sum to " << total << ", not 1";
    throw InputError(os.str());
  }
}

double DiscreteMeasure::moment(double p) const {
  double acc = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) acc += weights[i] * std::pow(points[i].norm(), p);
  return acc;
}

DiscreteMeasure DiscreteMeasure::uniform(std::vector<Vector> points) {
  DiscreteMeasure out;
  const double w = 1.0 / static_cast<double>(points.size());
  out.weights.assign(points.size(), w);
  out.points = std::move(points);
  return out;
}

Matrix TransportPlan::dense() const {
  Matrix out = Matrix::Zero(sources, targets);
  for (const auto& e : entries) out(e.i, e.j) += e.mass;
  return out;
}

Vector TransportPlan::rowSums() const { return dense().rowwise().sum(); }
Vector TransportPlan::colSums() const { return dense().colwise().sum().transpose(); }

Matrix costMatrix(const ControlSystem& system, const DiscreteMeasure& mu,
                  const DiscreteMeasure& nu, const DualityExponents& exps,
                  const SolverOptions& opts, int threads) {
  mu.validate();
  nu.validate();
  if (mu.dim() != system.dim() || nu.dim() != system.dim())
    throw ShapeError("measure atoms must have dimension " + std::to_string(system.dim()));
  system.gramianInverse();  // NotControllableError up front

  const int m = mu.size(), n = nu.size();
  Matrix costs(m, n);
  const int total = m * n;
  std::atomic<int> next{0};
  std::mutex failureMutex;
  int failedAt = total;
  std::string failure;

  auto work = [&] {
    for (int idx = next++; idx < total; idx = next++) {
      const int i = idx / n, j = idx % n;
      try {
        costs(i, j) = solvePoint(system, mu.points[i], nu.points[j], exps, opts).cost;
      } catch (const Error& e) {
        std::lock_guard<std::mutex> lock(failureMutex);
        if (idx < failedAt) {
          failedAt = idx;
          failure = "cost entry (" + std::to_string(i) + ", " + std::to_string(j) + "): " + e.what();
        }
      }
    }
  };
  const int workers = std::clamp(threads, 1, std::max(1, total));
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (failedAt < total) throw SolverError(failure);
  return costs;
}

namespace {

void checkCosts(const Matrix& costs, std::size_t m, std::size_t n) {
  if (m == 0 || n == 0) throw InputError("marginals must be nonempty");
  if (static_cast<std::size_t>(costs.rows()) != m || static_cast<std::size_t>(costs.cols()) != n)
    throw ShapeError("cost matrix is " + std::to_string(costs.rows()) + "x" +
                     std::to_string(costs.cols()) + ", marginals are " + std::to_string(m) + "x" +
                     std::to_string(n));
  if (!costs.allFinite()) throw InputError("cost matrix has non-finite entries");
}

void checkMarginals(const std::vector<double>& mu, const std::vector<double>& nu) {
  for (double w : mu)
    if (!(w >= 0.0) || !std::isfinite(w)) throw InputError("source weights must be nonnegative");
  for (double w : nu)
    if (!(w >= 0.0) || !std::isfinite(w)) throw InputError("target weights must be nonnegative");
  const double a = std::accumulate(mu.begin(), mu.end(), 0.0);
  const double b = std::accumulate(nu.begin(), nu.end(), 0.0);
  if (std::abs(a - b) > 1e-12 * std::max(1.0, a)) {
    std::ostringstream os;
    os.precision(17);
    os << "unbalanced marginals: source mass " << a << ", target mass " << b;
    throw InputError(os.str());
  }
}

// Transportation simplex on an m x n tableau. Rows are tree nodes
// 0..m-1, columns are nodes m..m+n-1; basic cells are the tree edges.
class Tableau {
 public:
  Tableau(const Matrix& c, const std::vector<double>& a, const std::vector<double>& b)
      : c_(c), m_(static_cast<int>(a.size())), n_(static_cast<int>(b.size())),
        flow_(Matrix::Zero(m_, n_)), basic_(m_ * n_, false) {
    northwestCorner(a, b);
  }

  int solve(const SimplexOptions& opts) {
    const double scale = 1.0 + c_.cwiseAbs().maxCoeff();
    const double tol = opts.optimalityTol * scale;
    const int cap = opts.maxPivots > 0 ? opts.maxPivots : 50 * m_ * n_ + 1000;
    int pivots = 0;
    for (;;) {
      potentials();
      int enter = -1;
      for (int idx = 0; idx < m_ * n_ && enter < 0; ++idx) {
        if (basic_[idx]) continue;
        const int i = idx / n_, j = idx % n_;
        if (c_(i, j) - u_(i) - v_(j) < -tol) enter = idx;
      }
      if (enter < 0) return pivots;
      if (pivots >= cap)
        throw SolverError("transportation simplex exceeded " + std::to_string(cap) +
                          " pivots (cycling guard)");
      pivot(enter);
      ++pivots;
    }
  }

  const Matrix& flow() const { return flow_; }
  const Vector& u() const { return u_; }
  const Vector& v() const { return v_; }
  bool basic(int i, int j) const { return basic_[i * n_ + j]; }

 private:
  void northwestCorner(std::vector<double> a, std::vector<double> b) {
    int i = 0, j = 0;
    const double eps = 1e-15 * std::max(1.0, std::accumulate(a.begin(), a.end(), 0.0));
    for (;;) {
      const double q = std::min(a[i], b[j]);
      flow_(i, j) = q;
      basic_[i * n_ + j] = true;
      a[i] -= q;
      b[j] -= q;
      if (i == m_ - 1 && j == n_ - 1) break;
      if (i == m_ - 1) {
        ++j;
      } else if (j == n_ - 1) {
        ++i;
      } else if (a[i] <= eps) {
        // On a tie only the row advances; the next cell carries a basic zero.
        a[i] = 0.0;
        if (b[j] <= eps) b[j] = 0.0;
        ++i;
      } else {
        b[j] = 0.0;
        ++j;
      }
    }
  }

  std::vector<std::vector<int>> adjacency() const {
    std::vector<std::vector<int>> adj(m_ + n_);
    for (int idx = 0; idx < m_ * n_; ++idx) {
      if (!basic_[idx]) continue;
      const int i = idx / n_, j = idx % n_;
      adj[i].push_back(m_ + j);
      adj[m_ + j].push_back(i);
    }
    return adj;
  }

  void potentials() {
    u_ = Vector::Zero(m_);
    v_ = Vector::Zero(n_);
    const auto adj = adjacency();
    std::vector<bool> seen(m_ + n_, false);
    std::vector<int> stack{0};
    seen[0] = true;
    while (!stack.empty()) {
      const int node = stack.back();
      stack.pop_back();
      for (int other : adj[node]) {
        if (seen[other]) continue;
        seen[other] = true;
        if (node < m_) {
          v_(other - m_) = c_(node, other - m_) - u_(node);
        } else {
          u_(other) = c_(other, node - m_) - v_(node - m_);
        }
        stack.push_back(other);
      }
    }
    if (std::find(seen.begin(), seen.end(), false) != seen.end())
      throw SolverError("simplex basis is not a spanning tree");
  }

  void pivot(int enter) {
    const int ei = enter / n_, ej = enter % n_;
    // Tree path from column node ej back to row node ei.
    const auto adj = adjacency();
    std::vector<int> parent(m_ + n_, -2);
    std::vector<int> queue{ei};
    parent[ei] = -1;
    for (std::size_t h = 0; h < queue.size(); ++h) {
      const int node = queue[h];
      for (int other : adj[node]) {
        if (parent[other] != -2) continue;
        parent[other] = node;
        queue.push_back(other);
      }
    }
    std::vector<int> cycle{enter};
    for (int node = m_ + ej; parent[node] != -1; node = parent[node]) {
      const int up = parent[node];
      const int i = node < m_ ? node : up;
      const int j = node < m_ ? up - m_ : node - m_;
      cycle.push_back(i * n_ + j);
    }
    // cycle[0] gains, then signs alternate.
    int leave = -1;
    double theta = std::numeric_limits<double>::infinity();
    for (std::size_t k = 1; k < cycle.size(); k += 2) {
      const int idx = cycle[k];
      const double f = flow_(idx / n_, idx % n_);
      if (f < theta || (f == theta && idx < leave)) {
        theta = f;
        leave = idx;
      }
    }
    for (std::size_t k = 0; k < cycle.size(); ++k) {
      const int idx = cycle[k];
      double& f = flow_(idx / n_, idx % n_);
      f += (k % 2 == 0 ? theta : -theta);
    }
    flow_(leave / n_, leave % n_) = 0.0;
    basic_[leave] = false;
    basic_[enter] = true;
  }

  const Matrix& c_;
  int m_, n_;
  Matrix flow_;
  std::vector<bool> basic_;
  Vector u_, v_;
};

}  // namespace

TransportPlan solvePlan(const Matrix& costs, const std::vector<double>& mu,
                        const std::vector<double>& nu, const SimplexOptions& opts) {
  checkCosts(costs, mu.size(), nu.size());
  checkMarginals(mu, nu);
  Tableau tableau(costs, mu, nu);
  TransportPlan plan;
  plan.sources = static_cast<int>(mu.size());
  plan.targets = static_cast<int>(nu.size());
  plan.iterations = tableau.solve(opts);
  plan.u = tableau.u();
  plan.v = tableau.v();
  for (int i = 0; i < plan.sources; ++i) {
    for (int j = 0; j < plan.targets; ++j) {
      if (tableau.basic(i, j)) plan.basis.emplace_back(i, j);
      const double mass = tableau.flow()(i, j);
      if (mass > 0.0) {
        plan.entries.push_back({i, j, mass});
        plan.cost += mass * costs(i, j);
      }
    }
  }
  return plan;
}

TransportPlan solvePlan(const Matrix& costs, const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                        const SimplexOptions& opts) {
  mu.validate();
  nu.validate();
  return solvePlan(costs, mu.weights, nu.weights, opts);
}

TransportPlan sinkhorn(const Matrix& costs, const std::vector<double>& mu,
                       const std::vector<double>& nu, const SinkhornOptions& opts) {
  checkCosts(costs, mu.size(), nu.size());
  checkMarginals(mu, nu);
  if (!(opts.epsilon > 0.0)) throw DomainError("Sinkhorn epsilon must be positive");
  const int m = static_cast<int>(mu.size()), n = static_cast<int>(nu.size());
  const double eps = opts.epsilon;
  Vector f = Vector::Zero(m), g = Vector::Zero(n);
  Vector logA(m), logB(n);
  for (int i = 0; i < m; ++i) logA(i) = mu[i] > 0.0 ? std::log(mu[i]) : -INFINITY;
  for (int j = 0; j < n; ++j) logB(j) = nu[j] > 0.0 ? std::log(nu[j]) : -INFINITY;

  auto logSumExp = [](const Vector& z) {
    const double top = z.maxCoeff();
    if (!std::isfinite(top)) return top;
    return top + std::log((z.array() - top).exp().sum());
  };
  auto planAt = [&](int i, int j) {
    return std::exp((f(i) + g(j) - costs(i, j)) / eps + logA(i) + logB(j));
  };

  TransportPlan plan;
  plan.sources = m;
  plan.targets = n;
  int iter = 0;
  double err = INFINITY;
  Vector z;
  for (; iter < opts.maxIter; ++iter) {
    z.resize(n);
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < n; ++j) z(j) = (g(j) - costs(i, j)) / eps + logB(j);
      f(i) = -eps * logSumExp(z);
    }
    z.resize(m);
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < m; ++i) z(i) = (f(i) - costs(i, j)) / eps + logA(i);
      g(j) = -eps * logSumExp(z);
    }
    // Columns are exact after the g update; measure the row defect.
    err = 0.0;
    for (int i = 0; i < m; ++i) {
      double row = 0.0;
      for (int j = 0; j < n; ++j) row += planAt(i, j);
      err += std::abs(row - mu[i]);
    }
    if (err <= opts.tolerance) {
      ++iter;
      break;
    }
  }
  if (!(err <= opts.tolerance)) {
    std::ostringstream os;
    os << "Sinkhorn did not reach marginal accuracy " << opts.tolerance << " in " << opts.maxIter
       << " iterations (defect " << err << ")";
    throw SolverError(os.str());
  }
  plan.iterations = iter;
  plan.u = f;
  plan.v = g;
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      const double mass = planAt(i, j);
      if (mass > 0.0) {
        plan.entries.push_back({i, j, mass});
        plan.cost += mass * costs(i, j);
      }
    }
  }
  return plan;
}

}  // namespace lcot
