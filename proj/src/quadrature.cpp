#include "lcot/quadrature.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include <boost/math/quadrature/gauss.hpp>

#include "lcot/errors.hpp"

namespace lcot {

std::vector<double> simpsonWeights(int steps, double h) {
  if (steps < 2 || steps % 2 != 0)
    throw ConfigError("Simpson quadrature needs an even, positive number of steps");
  std::vector<double> w(steps + 1);
  for (int k = 0; k <= steps; ++k) {
    if (k == 0 || k == steps) {
      w[k] = h / 3.0;
    } else {
      w[k] = (k % 2 == 1 ? 4.0 : 2.0) * h / 3.0;
    }
  }
  return w;
}

double simpson(std::span<const double> values, double h) {
  const int steps = static_cast<int>(values.size()) - 1;
  const auto w = simpsonWeights(steps, h);
  double acc = 0.0;
  for (int k = 0; k <= steps; ++k) acc += w[k] * values[k];
  return acc;
}

double leftHalfSimpson(double f0, double f1, double f2, double h) {
  return h * (5.0 * f0 + 8.0 * f1 - f2) / 12.0;
}

double rightHalfSimpson(double f0, double f1, double f2, double h) {
  return h * (-f0 + 8.0 * f1 + 5.0 * f2) / 12.0;
}

namespace {

using Rule = boost::math::quadrature::gauss<double, kGaussPointsPerPiece>;

// Full set of nodes/weights on [-1, 1].
const std::vector<std::pair<double, double>>& legendre() {
  static const std::vector<std::pair<double, double>> table = [] {
    std::vector<std::pair<double, double>> out;
    const auto& x = Rule::abscissa();
    const auto& w = Rule::weights();
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x[i] == 0.0) {
        out.emplace_back(0.0, w[i]);
      } else {
        out.emplace_back(-x[i], w[i]);
        out.emplace_back(x[i], w[i]);
      }
    }
    std::sort(out.begin(), out.end());
    return out;
  }();
  return table;
}

// Gauss-Legendre nodes for the integral of g(v) over [a, b].
template <class Emit>
void gaussOn(double a, double b, const Emit& emit) {
  const double mid = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  for (const auto& [x, w] : legendre()) emit(mid + half * x, half * w);
}

}  // namespace

std::vector<QuadNode> GradedPiece::nodesUpTo(double t) const {
  std::vector<QuadNode> out;
  const double length = hi - lo;
  t = std::clamp(t, lo, hi);
  if (length <= 0.0 || t <= lo) return out;
  out.reserve(kGaussPointsPerPiece);
  switch (singular) {
    case Singular::kNone:
      gaussOn(lo, t, [&](double s, double w) { out.push_back({s, w, -1}); });
      break;
    case Singular::kLow: {
      // t(v) = lo + L v^2, dt = 2 L v dv.
      const double vEnd = std::sqrt((t - lo) / length);
      gaussOn(0.0, vEnd, [&](double v, double w) {
        out.push_back({lo + length * v * v, w * 2.0 * length * v, -1});
      });
      break;
    }
    case Singular::kHigh: {
      // t(v) = hi - L v^2; [lo, t] maps to v in [v(t), 1].
      const double vStart = std::sqrt((hi - t) / length);
      gaussOn(vStart, 1.0, [&](double v, double w) {
        out.push_back({hi - length * v * v, w * 2.0 * length * v, -1});
      });
      break;
    }
    case Singular::kAnchored: {
      if (lo >= anchor) {
        // t(u) = anchor + u^2 on the right of the singular point.
        gaussOn(std::sqrt(lo - anchor), std::sqrt(t - anchor), [&](double u, double w) {
          out.push_back({anchor + u * u, w * 2.0 * u, -1});
        });
      } else {
        // t(u) = anchor - u^2 on the left; [lo, t] maps to u in [sqrt(anchor - t), sqrt(anchor - lo)].
        gaussOn(std::sqrt(anchor - t), std::sqrt(anchor - lo), [&](double u, double w) {
          out.push_back({anchor - u * u, w * 2.0 * u, -1});
        });
      }
      break;
    }
  }
  return out;
}

std::vector<QuadNode> GradedPiece::nodes() const { return nodesUpTo(hi); }

}  // namespace lcot
