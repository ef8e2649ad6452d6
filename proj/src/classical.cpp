// Copyright 2026 The acadj Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "acadj/classical.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "acadj/error.hpp"
#include "acadj/series.hpp"
#include "acadj/stats.hpp"

namespace acadj::classical {
namespace {

// Keeps quasi-differencing well defined when the ratio estimate overshoots.
constexpr double kRhoLimit = 1.0 - 1e-6;

double clamp_rho(double r) { return std::clamp(r, -kRhoLimit, kRhoLimit); }

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace

Matrix with_intercept(const Matrix& x) {
  Matrix out(x.rows, x.cols + 1);
  for (std::size_t r = 0; r < x.rows; ++r) {
    out(r, 0) = 1.0;
    for (std::size_t c = 0; c < x.cols; ++c) out(r, c + 1) = x(r, c);
  }
  return out;
}

std::vector<double> residuals(const Matrix& x, std::span<const double> y,
                              std::span<const double> beta) {
  std::vector<double> e(x.rows);
  for (std::size_t r = 0; r < x.rows; ++r) {
    double fit = 0.0;
    for (std::size_t c = 0; c < x.cols; ++c) fit += x(r, c) * beta[c];
    e[r] = y[r] - fit;
  }
  return e;
}

LinearFit ols_fit(const Matrix& x, std::span<const double> y) {
  if (x.rows != y.size()) throw ShapeError("design rows and targets differ in length");
  if (x.cols == 0) throw InputError("design matrix has no columns");
  if (x.rows < x.cols) throw InputError("fewer rows than coefficients");
  const Eigen::Map<const RowMatrix> a(x.data.data(), static_cast<Eigen::Index>(x.rows),
                                      static_cast<Eigen::Index>(x.cols));
  const Eigen::Map<const Eigen::VectorXd> b(y.data(), static_cast<Eigen::Index>(y.size()));
  Eigen::ColPivHouseholderQR<RowMatrix> qr(a);
  qr.setThreshold(1e-10);
  if (static_cast<std::size_t>(qr.rank()) < x.cols)
    throw InputError("design matrix is rank deficient (rank " + std::to_string(qr.rank()) +
                     " < " + std::to_string(x.cols) + ")");
  const Eigen::VectorXd beta = qr.solve(b);

  LinearFit fit;
  fit.method = "ols";
  fit.beta.assign(beta.data(), beta.data() + beta.size());
  fit.sample_size = x.rows;
  const auto e = residuals(x, y, fit.beta);
  double ssr = 0.0;
  for (double v : e) ssr += v * v;
  const std::size_t dof = x.rows > x.cols ? x.rows - x.cols : x.rows;
  fit.residual_variance = ssr / static_cast<double>(dof);
  return fit;
}

void quasi_difference(const Matrix& x, std::span<const double> y, double rho, bool keep_first,
                      Matrix& x_out, std::vector<double>& y_out) {
  const std::size_t t_len = x.rows;
  const std::size_t first = keep_first ? 0 : 1;
  x_out = Matrix(t_len - first, x.cols);
  y_out.assign(t_len - first, 0.0);
  if (keep_first) {
    const double s = std::sqrt(1.0 - rho * rho);
    for (std::size_t c = 0; c < x.cols; ++c) x_out(0, c) = s * x(0, c);
    y_out[0] = s * y[0];
  }
  for (std::size_t t = 1; t < t_len; ++t) {
    const std::size_t r = t - first;
    for (std::size_t c = 0; c < x.cols; ++c) x_out(r, c) = x(t, c) - rho * x(t - 1, c);
    y_out[r] = y[t] - rho * y[t - 1];
  }
}

namespace {

LinearFit feasible_gls(const Matrix& x, std::span<const double> y, bool keep_first, bool iterate,
                       const IterationOptions& opts, const char* method) {
  if (x.rows < 3) throw InputError(std::string(method) + " needs at least three rows");
  if (x.rows != y.size()) throw ShapeError("design rows and targets differ in length");
  LinearFit fit = ols_fit(x, y);
  double rho = clamp_rho(stats::residual_autocorrelation(residuals(x, y, fit.beta)));
  Matrix xt;
  std::vector<double> yt;
  std::size_t iters = 0;
  bool converged = !iterate;
  while (true) {
    quasi_difference(x, y, rho, keep_first, xt, yt);
    fit = ols_fit(xt, yt);
    ++iters;
    if (!iterate) break;
    const double next = clamp_rho(stats::residual_autocorrelation(residuals(x, y, fit.beta)));
    if (std::abs(next - rho) < opts.tol) {
      converged = true;
      break;
    }
    if (iters >= opts.max_iters) break;
    rho = next;
  }
  fit.rho = rho;
  fit.iterations = iters;
  fit.converged = converged;
  fit.method = method;
  return fit;
}

}  // namespace

LinearFit cochrane_orcutt(const Matrix& x, std::span<const double> y, bool iterate,
                          IterationOptions opts) {
  return feasible_gls(x, y, false, iterate, opts,
                      iterate ? "cochrane_orcutt_iterated" : "cochrane_orcutt");
}

LinearFit prais_winsten(const Matrix& x, std::span<const double> y, IterationOptions opts) {
  return feasible_gls(x, y, true, true, opts, "prais_winsten");
}

nlohmann::json LinearFit::to_json() const {
  return {{"schema", "acadj.linear_fit/1"},
          {"method", method},
          {"beta", beta},
          {"rho", rho},
          {"iterations", iterations},
          {"sample_size", sample_size},
          {"residual_variance", residual_variance},
          {"converged", converged}};
}

std::string LinearFit::to_text(std::span<const std::string> column_names) const {
  std::ostringstream out;
  out << "method             " << method << '\n';
  for (std::size_t i = 0; i < beta.size(); ++i) {
    std::string label = i < column_names.size() ? column_names[i] : "beta[" + std::to_string(i) + "]";
    label.resize(std::max<std::size_t>(label.size(), 18), ' ');
    out << label << ' ' << format_double(beta[i]) << '\n';
  }
  out << "rho                " << format_double(rho) << '\n'
      << "iterations         " << iterations << '\n'
      << "sample_size        " << sample_size << '\n'
      << "residual_variance  " << format_double(residual_variance) << '\n'
      << "converged          " << (converged ? "yes" : "no") << '\n';
  return out.str();
}

}  // namespace acadj::classical
