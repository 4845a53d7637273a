#include "lcot/io.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>
#include <yaml-cpp/yaml.h>

#include "lcot/errors.hpp"

namespace lcot {

namespace {

std::string where(const std::string& source, const YAML::Node& node, const std::string& field) {
  std::ostringstream os;
  os << source;
  const auto mark = node.Mark();
  if (mark.line >= 0) os << ":" << mark.line + 1 << ":" << mark.column + 1;
  os << ": field '" << field << "'";
  return os.str();
}

double asDouble(const YAML::Node& node, const std::string& source, const std::string& field) {
  if (!node || !node.IsScalar()) throw ParseError(where(source, node, field) + " must be a number");
  try {
    const double v = node.as<double>();
    if (!std::isfinite(v)) throw ParseError(where(source, node, field) + " must be finite");
    return v;
  } catch (const YAML::Exception&) {
    throw ParseError(where(source, node, field) + " is not a number: '" + node.Scalar() + "'");
  }
}

int asInt(const YAML::Node& node, const std::string& source, const std::string& field) {
  if (!node || !node.IsScalar()) throw ParseError(where(source, node, field) + " must be an integer");
  try {
    return node.as<int>();
  } catch (const YAML::Exception&) {
    throw ParseError(where(source, node, field) + " is not an integer: '" + node.Scalar() + "'");
  }
}

YAML::Node require(const YAML::Node& parent, const std::string& key, const std::string& source) {
  const YAML::Node node = parent[key];
  if (!node) throw ParseError(where(source, parent, key) + " is missing");
  return node;
}

Matrix parseMatrix(const YAML::Node& node, int rows, int cols, const std::string& source,
                   const std::string& field) {
  if (!node.IsSequence() || static_cast<int>(node.size()) != rows)
    throw ParseError(where(source, node, field) + " must be a list of " + std::to_string(rows) +
                     " rows");
  Matrix out(rows, cols);
  for (int i = 0; i < rows; ++i) {
    const YAML::Node row = node[i];
    if (!row.IsSequence() || static_cast<int>(row.size()) != cols)
      throw ParseError(where(source, row, field) + " row " + std::to_string(i + 1) + " must have " +
                       std::to_string(cols) + " entries");
    for (int j = 0; j < cols; ++j) out(i, j) = asDouble(row[j], source, field);
  }
  return out;
}

MatrixCurve parseCurve(const YAML::Node& node, int rows, int cols, double horizon,
                       const std::string& source, const std::string& field) {
  if (!node.IsMap() || node.size() != 1)
    throw ParseError(where(source, node, field) +
                     " must have exactly one of 'constant', 'poly', 'samples'");
  if (const YAML::Node c = node["constant"]) {
    return MatrixCurve::constant(parseMatrix(c, rows, cols, source, field + ".constant"), horizon);
  }
  if (const YAML::Node poly = node["poly"]) {
    const std::string f = field + ".poly";
    if (!poly.IsSequence() || static_cast<int>(poly.size()) != rows)
      throw ParseError(where(source, poly, f) + " must be a list of " + std::to_string(rows) + " rows");
    std::vector<std::vector<std::vector<double>>> entries(rows, std::vector<std::vector<double>>(cols));
    std::size_t degree = 1;
    for (int i = 0; i < rows; ++i) {
      const YAML::Node row = poly[i];
      if (!row.IsSequence() || static_cast<int>(row.size()) != cols)
        throw ParseError(where(source, row, f) + " row " + std::to_string(i + 1) + " must have " +
                         std::to_string(cols) + " entries");
      for (int j = 0; j < cols; ++j) {
        const YAML::Node coeffs = row[j];
        if (coeffs.IsScalar()) {
          entries[i][j].push_back(asDouble(coeffs, source, f));
        } else if (coeffs.IsSequence() && coeffs.size() > 0) {
          for (std::size_t k = 0; k < coeffs.size(); ++k)
            entries[i][j].push_back(asDouble(coeffs[k], source, f));
        } else {
          throw ParseError(where(source, coeffs, f) + " entries must be coefficient lists");
        }
        degree = std::max(degree, entries[i][j].size());
      }
    }
    std::vector<Matrix> coefficients(degree, Matrix::Zero(rows, cols));
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j)
        for (std::size_t k = 0; k < entries[i][j].size(); ++k) coefficients[k](i, j) = entries[i][j][k];
    return MatrixCurve::polynomial(std::move(coefficients), horizon);
  }
  if (const YAML::Node samples = node["samples"]) {
    const std::string f = field + ".samples";
    if (!samples.IsMap()) throw ParseError(where(source, samples, f) + " must be a map {dt, values}");
    const double dt = asDouble(require(samples, "dt", source), source, f + ".dt");
    const YAML::Node values = require(samples, "values", source);
    if (!values.IsSequence() || values.size() < 2)
      throw ParseError(where(source, values, f + ".values") + " needs at least two matrices");
    std::vector<Matrix> mats;
    for (std::size_t k = 0; k < values.size(); ++k)
      mats.push_back(parseMatrix(values[k], rows, cols, source, f + ".values"));
    if (!(dt > 0.0)) throw ValidationError(where(source, samples, f + ".dt") + " must be positive");
    const double span = dt * static_cast<double>(mats.size() - 1);
    if (std::abs(span - horizon) > 1e-9 * std::max(1.0, horizon))
      throw ValidationError(where(source, samples, f) + " covers [0, " + formatDouble(span) +
                            "], expected T = " + formatDouble(horizon));
    return MatrixCurve::sampled(dt, std::move(mats));
  }
  throw ParseError(where(source, node, field) + " must be 'constant', 'poly' or 'samples'");
}

}  // namespace

SystemDescription parseSystemText(const std::string& text, const std::string& source) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    std::ostringstream os;
    os << source << ":" << e.mark.line + 1 << ":" << e.mark.column + 1 << ": " << e.msg;
    throw ParseError(os.str());
  }
  if (!root.IsMap()) throw ParseError(source + ": system file must be a key-value map");
  SystemDescription desc;
  desc.d = asInt(require(root, "d", source), source, "d");
  desc.n = asInt(require(root, "n", source), source, "n");
  desc.horizon = asDouble(require(root, "T", source), source, "T");
  if (desc.d < 1) throw ValidationError(source + ": d must be at least 1");
  if (desc.n < 1 || desc.n > desc.d)
    throw ValidationError(source + ": need 1 <= n <= d, got n = " + std::to_string(desc.n) +
                          ", d = " + std::to_string(desc.d));
  if (!(desc.horizon > 0.0)) throw ValidationError(source + ": T must be positive");
  desc.m = parseCurve(require(root, "M", source), desc.d, desc.d, desc.horizon, source, "M");
  desc.nInput = parseCurve(require(root, "N", source), desc.d, desc.n, desc.horizon, source, "N");
  return desc;
}

SystemDescription parseSystem(const std::string& path) { return parseSystemText(readFile(path), path); }

DiscreteMeasure parseMeasureCsv(const std::string& text, const std::string& source) {
  DiscreteMeasure out;
  std::istringstream in(text);
  std::string line;
  int lineNo = 0;
  while (std::getline(in, line)) {
    ++lineNo;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    std::vector<double> values;
    std::istringstream cells(line);
    std::string cell;
    while (std::getline(cells, cell, ',')) {
      const char* begin = cell.c_str();
      char* end = nullptr;
      errno = 0;
      const double v = std::strtod(begin, &end);
      while (end && (*end == ' ' || *end == '\t')) ++end;
      if (end == begin || *end != '\0' || errno == ERANGE || !std::isfinite(v))
        throw ParseError(source + ":" + std::to_string(lineNo) + ": not a number: '" + cell + "'");
      values.push_back(v);
    }
    if (values.size() < 2)
      throw ParseError(source + ":" + std::to_string(lineNo) + ": expected weight,x1,...,xd");
    if (!out.points.empty() && static_cast<int>(values.size()) - 1 != out.dim())
      throw ParseError(source + ":" + std::to_string(lineNo) + ": atom has dimension " +
                       std::to_string(values.size() - 1) + ", expected " + std::to_string(out.dim()));
    out.weights.push_back(values.front());
    out.points.push_back(Eigen::Map<const Vector>(values.data() + 1, values.size() - 1));
  }
  out.validate();
  return out;
}

DiscreteMeasure readMeasure(const std::string& path) { return parseMeasureCsv(readFile(path), path); }

std::string formatDouble(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

std::string measureCsv(const DiscreteMeasure& measure) {
  std::string out = "# weight";
  for (int i = 0; i < measure.dim(); ++i) out += ",x" + std::to_string(i + 1);
  out += "\n";
  for (int a = 0; a < measure.size(); ++a) {
    out += formatDouble(measure.weights[a]);
    for (Eigen::Index i = 0; i < measure.points[a].size(); ++i)
      out += "," + formatDouble(measure.points[a](i));
    out += "\n";
  }
  return out;
}

std::string planCsv(const TransportPlan& plan) {
  std::string out = "i,j,mass\n";
  for (const auto& e : plan.entries)
    out += std::to_string(e.i) + "," + std::to_string(e.j) + "," + formatDouble(e.mass) + "\n";
  return out;
}

std::string trajectoryCsv(const PathEnsemble& ensemble) {
  std::string out = "path_id,weight,t";
  const int d = ensemble.system->dim(), n = ensemble.system->inputs();
  for (int i = 0; i < d; ++i) out += ",x" + std::to_string(i + 1);
  for (int i = 0; i < n; ++i) out += ",a" + std::to_string(i + 1);
  out += "\n";
  const auto& grid = ensemble.grid();
  for (std::size_t p = 0; p < ensemble.paths.size(); ++p) {
    const auto& path = ensemble.paths[p];
    const std::string prefix = std::to_string(p) + "," + formatDouble(path.weight) + ",";
    for (std::size_t k = 0; k < grid.size(); ++k) {
      out += prefix + formatDouble(grid[k]);
      for (int i = 0; i < d; ++i) out += "," + formatDouble(path.states[k](i));
      for (int i = 0; i < n; ++i) out += "," + formatDouble(path.controls[k](i));
      out += "\n";
    }
  }
  return out;
}

Vector parseVector(const std::string& text, const std::string& what) {
  std::vector<double> values;
  std::istringstream cells(text);
  std::string cell;
  while (std::getline(cells, cell, ',')) {
    const char* begin = cell.c_str();
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    while (end && (*end == ' ' || *end == '\t')) ++end;
    if (end == begin || *end != '\0' || !std::isfinite(v))
      throw UsageError(what + ": not a number: '" + cell + "'");
    values.push_back(v);
  }
  if (values.empty()) throw UsageError(what + " is empty");
  return Eigen::Map<const Vector>(values.data(), values.size());
}

std::string readFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void writeFileAtomic(const std::string& path, const std::string& contents) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  const fs::path dir = target.has_parent_path() ? target.parent_path() : fs::path(".");
  const fs::path tmp = dir / ("." + target.filename().string() + ".tmp." + std::to_string(::getpid()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write '" + tmp.string() + "'");
    out << contents;
    out.flush();
    if (!out) throw InputError("write to '" + tmp.string() + "' failed");
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp);
    throw InputError("cannot rename onto '" + path + "': " + ec.message());
  }
}

}  // namespace lcot
