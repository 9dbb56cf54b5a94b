// Quantile regression instance, matrix norms, standardization and CSV input.
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace zeroqr {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ValidationError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// A sparse quantile regression instance: rows of `design` are samples.
/// When `intercept_column` is set, column 0 is the all-ones column and is
/// never penalized by the solvers.
struct QuantileProblem {
  Matrix design;
  Vector response;
  double tau = 0.5;
  bool intercept_column = false;

  Index samples() const { return design.rows(); }
  Index features() const { return design.cols(); }

  void validate() const {
    if (design.rows() < 1 || design.cols() < 1)
      throw ValidationError("design must have at least one row and one column");
    if (response.size() != design.rows())
      throw ValidationError("response length does not match design rows");
    if (!(tau > 0.0 && tau < 1.0)) throw ValidationError("tau must be in (0,1)");
    if (!design.allFinite()) throw ValidationError("design contains non-finite entries");
    if (!response.allFinite()) throw ValidationError("response contains non-finite entries");
    if (intercept_column && !(design.col(0).array() == 1.0).all())
      throw ValidationError("intercept column must be all ones");
  }
};

inline QuantileProblem make_problem(Matrix design, Vector response, double tau,
                                    bool intercept_column = false) {
  QuantileProblem problem{std::move(design), std::move(response), tau, intercept_column};
  problem.validate();
  return problem;
}

struct MatrixNorms {
  double spectral = 0.0;  // largest singular value
  double max_abs = 0.0;   // element-wise maximum
  double col_sum = 0.0;   // maximum column sum of |A_ij|
};

/// Largest singular value by power iteration on AᵀA.
/// Xv, skipping the zero entries of v. Penalized coefficients are mostly
/// zero, and this product sits in every line-search trial.
inline Vector design_times(const Matrix& x, const Vector& v) {
  std::vector<Index> nz;
  for (Index j = 0; j < v.size(); ++j)
    if (v(j) != 0.0) nz.push_back(j);
  if (4 * static_cast<Index>(nz.size()) > v.size()) return x * v;
  Vector out = Vector::Zero(x.rows());
  for (Index j : nz) out.noalias() += v(j) * x.col(j);
  return out;
}

inline double spectral_norm(const Matrix& a, double rel_tol = 1e-8, int max_iters = 500) {
  if (a.size() == 0) return 0.0;
  if (!a.allFinite()) throw ValidationError("matrix contains non-finite entries");
  const Index p = a.cols();
  // Deterministic start with all components nonzero.
  Vector v(p);
  for (Index j = 0; j < p; ++j) v(j) = 1.0 + 0.01 * static_cast<double>(j % 7);
  v.normalize();
  double eig = 0.0;
  for (int it = 0; it < max_iters; ++it) {
    Vector w = a.transpose() * (a * v);
    const double next = w.norm();
    if (next == 0.0) return 0.0;
    v = w / next;
    if (std::abs(next - eig) <= rel_tol * next) {
      eig = next;
      break;
    }
    eig = next;
  }
  return std::sqrt(eig);
}

inline MatrixNorms matrix_norms(const Matrix& a) {
  if (!a.allFinite()) throw ValidationError("matrix contains non-finite entries");
  MatrixNorms norms;
  if (a.size() == 0) return norms;
  norms.max_abs = a.cwiseAbs().maxCoeff();
  norms.col_sum = a.cwiseAbs().colwise().sum().maxCoeff();
  norms.spectral = spectral_norm(a);
  return norms;
}

/// Check loss f_τ(z) = (1/n) Σ θ_τ(z_i), θ_τ(u) = (τ − 1{u ≤ 0}) u.
inline double check_loss(const Vector& z, double tau) {
  const Index n = z.size();
  if (n == 0) return 0.0;
  double sum = 0.0;
  for (Index i = 0; i < n; ++i) sum += z(i) > 0.0 ? tau * z(i) : (tau - 1.0) * z(i);
  return sum / static_cast<double>(n);
}

/// Centers and scales every non-intercept column to mean 0 and sample
/// standard deviation 1 (divisor n − 1).
inline QuantileProblem standardize(const QuantileProblem& problem) {
  problem.validate();
  QuantileProblem out = problem;
  const Index n = problem.samples();
  if (n < 2) throw ValidationError("standardize requires at least two samples");
  const Index first = problem.intercept_column ? 1 : 0;
  for (Index j = first; j < problem.features(); ++j) {
    auto col = out.design.col(j);
    const double mean = col.mean();
    col.array() -= mean;
    const double sd = std::sqrt(col.squaredNorm() / static_cast<double>(n - 1));
    if (!(sd > 0.0) || sd <= 1e-14 * std::max(1.0, std::abs(mean)))
      throw ValidationError("column " + std::to_string(j) + " has zero variance");
    col /= sd;
  }
  return out;
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline double parse_number(const std::string& token, std::size_t row) {
  std::size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(token, &used);
  } catch (const std::exception&) {
    throw ParseError("row " + std::to_string(row) + ": cannot parse '" + token + "'");
  }
  if (used != token.size())
    throw ParseError("row " + std::to_string(row) + ": cannot parse '" + token + "'");
  if (!std::isfinite(value))
    throw ValidationError("row " + std::to_string(row) + ": non-finite value '" + token + "'");
  return value;
}

}  // namespace detail

/// Reads "features..., response" rows. Row indices in error messages count
/// data rows from 1, header excluded.
inline QuantileProblem parse_csv(std::istream& in, bool has_header, bool add_intercept,
                                 double tau = 0.5) {
  std::string line;
  if (has_header) std::getline(in, line);
  std::vector<std::vector<double>> rows;
  std::size_t width = 0;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    ++row;
    const auto fields = detail::split_csv(line);
    if (fields.size() < 2)
      throw ParseError("row " + std::to_string(row) + ": need at least one feature and a response");
    if (width == 0) width = fields.size();
    if (fields.size() != width)
      throw ParseError("row " + std::to_string(row) + ": expected " + std::to_string(width) +
                       " fields, got " + std::to_string(fields.size()));
    std::vector<double> values;
    values.reserve(width);
    for (const auto& f : fields) values.push_back(detail::parse_number(f, row));
    rows.push_back(std::move(values));
  }
  if (rows.empty()) throw ParseError("no rows");

  const Index n = static_cast<Index>(rows.size());
  const Index p = static_cast<Index>(width) - 1;
  const Index offset = add_intercept ? 1 : 0;
  Matrix design(n, p + offset);
  Vector response(n);
  for (Index i = 0; i < n; ++i) {
    if (add_intercept) design(i, 0) = 1.0;
    for (Index j = 0; j < p; ++j) design(i, j + offset) = rows[i][j];
    response(i) = rows[i][p];
  }
  return make_problem(std::move(design), std::move(response), tau, add_intercept);
}

inline QuantileProblem load_csv(const std::string& path, bool has_header, bool add_intercept,
                                double tau = 0.5) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  return parse_csv(in, has_header, add_intercept, tau);
}

}  // namespace zeroqr
