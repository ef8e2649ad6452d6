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

// Residual diagnostics, AR(1) theory and simulation, forecast metrics,
// empirical critical values and the paired t-test.

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "acadj/matrix.hpp"
#include "acadj/rng.hpp"

namespace acadj::stats {

// Lag-1 regression coefficient of e_t on e_{t-1}:
//   sum_{t=2..T} e_t e_{t-1} / sum_{t=1..T-1} e_t^2
// The denominator stops at T-1. Throws UndefinedStatistic when T < 2 or the
// denominator is zero.
double residual_autocorrelation(std::span<const double> e);

// Per-column residual_autocorrelation averaged over the columns where it is
// defined. Throws UndefinedStatistic if no column is defined.
double mean_residual_autocorrelation(const Matrix& residuals);

// Per-column values; undefined columns are NaN.
std::vector<double> residual_autocorrelations(const Matrix& residuals);

// sum (e_t - e_{t-1})^2 / sum e_t^2, in [0, 4].
double durbin_watson(std::span<const double> e);

// Cov(e_t, e_{t-delta}) = rho^delta sigma^2 / (1 - rho^2) for a stationary
// AR(1) error with innovation std sigma.
double ar1_covariance(double rho, double sigma, unsigned delta);

// e_t = rho e_{t-1} + eps_t, eps_t ~ N(0, sigma^2), with e_0 drawn from the
// stationary N(0, sigma^2 / (1 - rho^2)).
std::vector<double> simulate_ar1(double rho, double sigma, std::size_t length, Rng& rng);

// Empirical lag-delta autocovariance around the sample mean, normalized by T.
double sample_autocovariance(std::span<const double> x, std::size_t delta);

// sqrt(sum ||X_t - Xhat_t||^2) / sqrt(sum ||X_t - mean(X)||^2), with the
// per-column mean taken over `actual`.
double rrmse(const Matrix& actual, const Matrix& forecast);

// Mean over entries of (wo - w) / wo, in percent.
double avg_relative_improvement(std::span<const double> rrmse_without,
                                std::span<const double> rrmse_with);

// Linear interpolation between order statistics (Hyndman-Fan type 7):
// h = (n - 1) p, x[floor h] + (h - floor h)(x[floor h + 1] - x[floor h]).
double quantile_type7(std::vector<double> samples, double p);

struct CriticalValueTable {
  std::vector<std::pair<double, double>> entries;  // (right-tail probability, threshold)
  std::size_t samples = 0;
  std::string source;  // "paper_default" or "recomputed"

  // Threshold for a tail probability; throws if absent.
  double threshold(double tail) const;
  nlohmann::json to_json() const;
  static CriticalValueTable from_json(const nlohmann::json& j);
};

// Right-tail 10/5/1 % thresholds of remaining autocorrelation without
// adjustment, from the large forecasting study: 0.857 / 0.928 / 0.984.
CriticalValueTable default_critical_values();

inline constexpr std::size_t kMinCriticalSamples = 20;

CriticalValueTable empirical_critical_values(std::span<const double> samples,
                                             std::span<const double> tails = std::span<const double>());

struct PairedTTest {
  double t = 0.0;
  double p_value = 1.0;
  double df = 0.0;
  bool significant = false;  // two-sided p < 0.05
  bool all_equal = false;    // every difference is zero; t reported as 0
};

// Two-sided paired t-test on a - b. Identical inputs give t = 0, p = 1 with
// all_equal set; constant nonzero differences throw UndefinedStatistic.
PairedTTest paired_t_test(std::span<const double> a, std::span<const double> b);

// Regularized incomplete beta I_x(a, b), continued fraction.
double incomplete_beta(double a, double b, double x);
double student_t_cdf(double t, double df);

struct Histogram {
  double lo = -1.0;
  double hi = 1.0;
  std::vector<std::size_t> counts;  // equal-width bins; hi is included in the last bin
  std::size_t below = 0;
  std::size_t above = 0;
};

Histogram histogram(std::span<const double> values, std::size_t bins, double lo, double hi);

}  // namespace acadj::stats
