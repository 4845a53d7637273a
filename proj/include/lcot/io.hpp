#pragma once

#include <string>
#include <vector>

#include "lcot/dynamic.hpp"
#include "lcot/linsys.hpp"
#include "lcot/transport.hpp"

namespace lcot {

/// Contents of a system description file.
struct SystemDescription {
  int d = 0;
  int n = 0;
  double horizon = 0.0;
  MatrixCurve m;
  MatrixCurve nInput;
};

/// Parses a YAML system file with fields d, n, T, M, N. Each matrix is
/// `constant: [[...]]`, `poly: [[[c0, c1, ...], ...], ...]` (ascending
/// powers of t) or `samples: {dt, values: [[[...]], ...]}`.
/// Malformed input raises ParseError naming the field and line;
/// inconsistent dimensions or n > d raise ValidationError.
SystemDescription parseSystem(const std::string& path);
SystemDescription parseSystemText(const std::string& text, const std::string& source = "<string>");

/// Measure CSV: one atom per row, `weight,x1,...,xd`. Blank lines and
/// lines starting with '#' are skipped.
DiscreteMeasure readMeasure(const std::string& path);
DiscreteMeasure parseMeasureCsv(const std::string& text, const std::string& source = "<string>");
std::string measureCsv(const DiscreteMeasure& measure);

/// Plan CSV `i,j,mass`.
std::string planCsv(const TransportPlan& plan);
/// Trajectory CSV `path_id,weight,t,x1..xd,a1..an`.
std::string trajectoryCsv(const PathEnsemble& ensemble);

/// Comma-separated numbers, e.g. "1,0.5,-2".
Vector parseVector(const std::string& text, const std::string& what);

/// %.17g.
std::string formatDouble(double value);

std::string readFile(const std::string& path);
/// Writes to a temporary file in the same directory, then renames it.
void writeFileAtomic(const std::string& path, const std::string& contents);

}  // namespace lcot
