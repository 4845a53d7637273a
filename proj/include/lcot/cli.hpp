#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace lcot {

struct Tolerances {
  double flowTol = 1e-8;
  double solveTol = 1e-8;
  double residTol = 1e-6;
  double rankTol = 1e-10;
};

struct RunConfig {
  std::string command;
  std::string systemPath;
  double p = 2.0;
  int gridSteps = 1000;
  Tolerances tolerances;
  std::uint64_t seed = 1;
  /// Directory for auxiliary artifacts (CSV tables, JSON summary); empty for none.
  std::string outputDir;
  /// Format of the primary output: "json" or "csv".
  std::string format = "json";
  /// Primary output file; empty writes to the output stream.
  std::string outPath;
  std::string x;
  std::string y;
  std::string muPath;
  std::string nuPath;
  std::string method = "simplex";
  double eps = 1e-2;
  int threads = 1;
  /// Optional Phi(s, t) query for the flow command.
  std::string flowQuery;
  int perturbations = 10;

  /// Throws UsageError unless p > 1, gridSteps is even and >= 2, the
  /// tolerances are positive and the format and method are known.
  void validate() const;
};

/// Runs one command. Returns 0 on success, 1 on computation failure
/// (including a failed equivalence check) and 2 on usage errors; in the
/// failure cases a JSON error object is written to `err`.
int dispatch(const RunConfig& config, std::ostream& out, std::ostream& err);

/// Parses argv (flags, optional YAML --config whose keys are flag names,
/// LCOT_THREADS for the default thread count) and dispatches.
int runCli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace lcot
