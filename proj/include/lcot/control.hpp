#pragma once

#include <vector>

#include "lcot/linsys.hpp"

namespace lcot {

struct ControlOptions {
  /// Singular values below rankTol * sigma_max count as zero.
  double rankTol = 1e-10;
  /// Gramian positivity floor is gramTolFactor * trace(G) / d.
  double gramTolFactor = 1e-12;
};

struct ControllabilityReport {
  enum class Method { kRank, kGramian, kBoth };

  int beta = 0;
  /// r_0 .. r_beta, each d x n.
  std::vector<Matrix> blocks;
  /// Horizontal concatenation of the blocks.
  Matrix rankMatrix;
  Vector singularValues;
  int numericalRank = 0;
  bool rankControllable = false;

  Matrix gramian;
  Vector gramianEigenvalues;
  double gramianMinEig = 0.0;
  double gramTol = 0.0;
  bool gramianControllable = false;

  Method method = Method::kRank;
  bool controllable = false;
};

/// floor(d / n): the number of derivative levels the rank test uses.
int rankConditionDepth(int d, int n);

/// P_0(t) .. P_kMax(t) with P_0 = N and P_k = -M P_{k-1} + P_{k-1}'.
/// Derivatives of P_{k-1} are expanded by the product rule into
/// derivative evaluations of M and N, which are exact for polynomial
/// curves.
std::vector<Matrix> matrixPolynomials(const MatrixCurve& m, const MatrixCurve& n,
                                      double t, int kMax);

/// Numerical rank via SVD with a threshold relative to sigma_max.
int numericalRank(const Matrix& a, double relTol, Vector* singularValues = nullptr);

/// Generalised Kalman test: blocks r_k = P_k(T), k = 0..beta.
ControllabilityReport rankCondition(const MatrixCurve& m, const MatrixCurve& n,
                                    const ControlOptions& options = {});

/// Blocks r_0..r_beta via complete Bell polynomials in -M, -M', ...,
/// valid when the family M(t) commutes with itself. Throws
/// PreconditionError when the sampled commutation residual exceeds 1e-10.
std::vector<Matrix> bellRankBlocks(const MatrixCurve& m, const MatrixCurve& n);
std::vector<Matrix> bellRankBlocks(const MatrixCurve& m, const MatrixCurve& n, int kMax);

/// Complete Bell polynomials B_0..B_kMax of commuting matrix arguments
/// args[0] = x_1, args[1] = x_2, ... (args.size() >= kMax).
std::vector<Matrix> completeBell(const std::vector<Matrix>& args, int kMax);

/// G = int_0^T Phi(s,T) N(s) N(s)^T Phi(s,T)^T ds by composite Simpson on
/// the flow grid, symmetrised.
Matrix gramian(const FlowMap& flow, const MatrixCurve& n);

/// Rank and/or Gramian verdicts in one report.
ControllabilityReport analyzeControllability(const MatrixCurve& m, const MatrixCurve& n,
                                             const FlowMap& flow,
                                             ControllabilityReport::Method method,
                                             const ControlOptions& options = {});

}  // namespace lcot
