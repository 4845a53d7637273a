#pragma once

#include <span>
#include <vector>

namespace lcot {

/// Composite Simpson weights on a uniform grid of `steps` intervals
/// (steps must be even).
std::vector<double> simpsonWeights(int steps, double h);

/// Composite Simpson integral of equally spaced samples.
double simpson(std::span<const double> values, double h);

/// Integral over [t_k, t_{k+1}] of the quadratic through three equally
/// spaced samples f0, f1, f2 at t_k, t_k+h, t_k+2h (left half) or over
/// [t_k+h, t_k+2h] (right half). The two halves add up to Simpson.
double leftHalfSimpson(double f0, double f1, double f2, double h);
double rightHalfSimpson(double f0, double f1, double f2, double h);

/// One quadrature node.
struct QuadNode {
  double t = 0.0;
  double weight = 0.0;
  /// Index of the grid point the node coincides with, -1 when off-grid.
  int gridIndex = -1;
};

/// An interval with an optional weak singularity of power type at one end
/// or at a nearby point outside it.
///
/// Nodes are Gauss-Legendre in the variable u with t = t0 -/+ u^2 for the
/// singular point t0, which turns |t - t0|^a behaviour into |u|^{2a} and
/// absorbs |t - t0|^{-1/2} integrable spikes exactly.
struct GradedPiece {
  enum class Singular { kNone, kLow, kHigh, kAnchored };
  double lo = 0.0;
  double hi = 0.0;
  Singular singular = Singular::kNone;
  /// Singular point outside [lo, hi], used by kAnchored.
  double anchor = 0.0;

  /// Nodes integrating over [lo, hi].
  std::vector<QuadNode> nodes() const;
  /// Nodes integrating over [lo, t] for lo <= t <= hi.
  std::vector<QuadNode> nodesUpTo(double t) const;
};

/// Number of Gauss-Legendre points used per graded piece.
inline constexpr int kGaussPointsPerPiece = 16;

}  // namespace lcot
