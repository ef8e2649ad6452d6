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

#pragma once

// Linear baselines for first-order autocorrelated errors: OLS,
// Cochrane-Orcutt (single pass or iterated) and Prais-Winsten.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "acadj/matrix.hpp"

namespace acadj::classical {

struct LinearFit {
  std::vector<double> beta;      // one coefficient per design column
  double rho = 0.0;              // autocorrelation used for the final transform
  std::size_t iterations = 0;    // OLS solves after the initial fit
  std::size_t sample_size = 0;   // rows of the final regression
  double residual_variance = 0.0;
  bool converged = true;
  std::string method;

  nlohmann::json to_json() const;
  std::string to_text(std::span<const std::string> column_names = {}) const;
};

// Prepends a column of ones.
Matrix with_intercept(const Matrix& x);

// Least squares via column-pivoting QR. Throws InputError when rows < cols
// or the design is rank deficient.
LinearFit ols_fit(const Matrix& x, std::span<const double> y);

// Rows t >= 1 become (x_t - rho x_{t-1}, y_t - rho y_{t-1}). With keep_first
// the first row is kept and scaled by sqrt(1 - rho^2).
void quasi_difference(const Matrix& x, std::span<const double> y, double rho, bool keep_first,
                      Matrix& x_out, std::vector<double>& y_out);

struct IterationOptions {
  double tol = 1e-6;
  std::size_t max_iters = 50;
};

// Fit OLS, estimate rho from its residuals, quasi-difference dropping the
// first row, refit. Iterates until |delta rho| < tol when `iterate`.
LinearFit cochrane_orcutt(const Matrix& x, std::span<const double> y, bool iterate,
                          IterationOptions opts = {});

// Iterated Cochrane-Orcutt that keeps the first row, scaled by
// sqrt(1 - rho^2) in both x and y.
LinearFit prais_winsten(const Matrix& x, std::span<const double> y, IterationOptions opts = {});

// Residuals y - x beta.
std::vector<double> residuals(const Matrix& x, std::span<const double> y,
                              std::span<const double> beta);

}  // namespace acadj::classical
