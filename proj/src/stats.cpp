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

#include "acadj/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "acadj/error.hpp"
#include "acadj/kernels.hpp"

namespace acadj::stats {

double residual_autocorrelation(std::span<const double> e) {
  if (e.size() < 2) throw UndefinedStatistic("autocorrelation needs at least two residuals");
  const kernels::LagSums s = kernels::lag_sums(e);
  if (s.head_sq == 0.0)
    throw UndefinedStatistic("autocorrelation undefined: residuals e_1..e_{T-1} are all zero");
  return s.cross / s.head_sq;
}

std::vector<double> residual_autocorrelations(const Matrix& residuals) {
  std::vector<double> out(residuals.cols, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t j = 0; j < residuals.cols; ++j) {
    const std::vector<double> col = residuals.column(j);
    try {
      out[j] = residual_autocorrelation(col);
    } catch (const UndefinedStatistic&) {
    }
  }
  return out;
}

double mean_residual_autocorrelation(const Matrix& residuals) {
  double sum = 0.0;
  std::size_t defined = 0;
  for (double r : residual_autocorrelations(residuals)) {
    if (std::isnan(r)) continue;
    sum += r;
    ++defined;
  }
  if (defined == 0) throw UndefinedStatistic("autocorrelation undefined for every series");
  return sum / static_cast<double>(defined);
}

double durbin_watson(std::span<const double> e) {
  if (e.size() < 2) throw UndefinedStatistic("Durbin-Watson needs at least two residuals");
  const kernels::LagSums s = kernels::lag_sums(e);
  if (s.total_sq == 0.0) throw UndefinedStatistic("Durbin-Watson undefined for zero residuals");
  return s.diff_sq / s.total_sq;
}

double ar1_covariance(double rho, double sigma, unsigned delta) {
  if (!(std::abs(rho) < 1.0)) throw InputError("AR(1) coefficient must satisfy |rho| < 1");
  return std::pow(rho, static_cast<double>(delta)) * sigma * sigma / (1.0 - rho * rho);
}

std::vector<double> simulate_ar1(double rho, double sigma, std::size_t length, Rng& rng) {
  if (!(std::abs(rho) < 1.0)) throw InputError("AR(1) coefficient must satisfy |rho| < 1");
  if (sigma < 0.0) throw InputError("innovation std must be non-negative");
  std::vector<double> e(length, 0.0);
  if (length == 0 || sigma == 0.0) return e;
  std::normal_distribution<double> innov(0.0, sigma);
  std::normal_distribution<double> start(0.0, sigma / std::sqrt(1.0 - rho * rho));
  e[0] = start(rng);
  for (std::size_t t = 1; t < length; ++t) e[t] = rho * e[t - 1] + innov(rng);
  return e;
}

double sample_autocovariance(std::span<const double> x, std::size_t delta) {
  const std::size_t n = x.size();
  if (n <= delta) throw InputError("series shorter than the requested lag");
  double m = 0.0;
  for (double v : x) m += v;
  m /= static_cast<double>(n);
  double s = 0.0;
  for (std::size_t t = delta; t < n; ++t) s += (x[t] - m) * (x[t - delta] - m);
  return s / static_cast<double>(n);
}

double rrmse(const Matrix& actual, const Matrix& forecast) {
  if (actual.rows != forecast.rows || actual.cols != forecast.cols)
    throw ShapeError("rrmse: actual and forecast shapes differ");
  if (actual.rows == 0) throw UndefinedStatistic("rrmse of an empty set");
  std::vector<double> mean(actual.cols, 0.0);
  for (std::size_t t = 0; t < actual.rows; ++t)
    for (std::size_t j = 0; j < actual.cols; ++j) mean[j] += actual(t, j);
  for (double& m : mean) m /= static_cast<double>(actual.rows);
  double num = 0.0, den = 0.0;
  for (std::size_t t = 0; t < actual.rows; ++t) {
    for (std::size_t j = 0; j < actual.cols; ++j) {
      const double e = actual(t, j) - forecast(t, j);
      const double d = actual(t, j) - mean[j];
      num += e * e;
      den += d * d;
    }
  }
  if (den == 0.0) throw UndefinedStatistic("rrmse undefined: actual values are constant");
  return std::sqrt(num) / std::sqrt(den);
}

double avg_relative_improvement(std::span<const double> rrmse_without,
                                std::span<const double> rrmse_with) {
  if (rrmse_without.size() != rrmse_with.size())
    throw InputError("relative improvement: list lengths differ");
  if (rrmse_without.empty()) throw InputError("relative improvement of empty lists");
  double sum = 0.0;
  for (std::size_t d = 0; d < rrmse_without.size(); ++d) {
    if (!(rrmse_without[d] > 0.0))
      throw InputError("relative improvement needs positive baseline errors");
    sum += (rrmse_without[d] - rrmse_with[d]) / rrmse_without[d];
  }
  return 100.0 * sum / static_cast<double>(rrmse_without.size());
}

double quantile_type7(std::vector<double> samples, double p) {
  if (samples.empty()) throw InputError("quantile of no samples");
  if (!(p >= 0.0 && p <= 1.0)) throw InputError("quantile probability outside [0, 1]");
  std::sort(samples.begin(), samples.end());
  const double h = static_cast<double>(samples.size() - 1) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, samples.size() - 1);
  return samples[lo] + (h - static_cast<double>(lo)) * (samples[hi] - samples[lo]);
}

double CriticalValueTable::threshold(double tail) const {
  for (const auto& [p, v] : entries)
    if (std::abs(p - tail) < 1e-12) return v;
  throw InputError("no critical value for tail probability " + std::to_string(tail));
}

nlohmann::json CriticalValueTable::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& [p, v] : entries) rows.push_back({{"tail", p}, {"threshold", v}});
  return {{"schema", "acadj.critical_values/1"},
          {"source", source},
          {"samples", samples},
          {"quantile_convention", "type7"},
          {"entries", std::move(rows)}};
}

CriticalValueTable CriticalValueTable::from_json(const nlohmann::json& j) {
  CriticalValueTable t;
  t.source = j.at("source").get<std::string>();
  t.samples = j.at("samples").get<std::size_t>();
  for (const auto& e : j.at("entries"))
    t.entries.emplace_back(e.at("tail").get<double>(), e.at("threshold").get<double>());
  return t;
}

CriticalValueTable default_critical_values() {
  return CriticalValueTable{{{0.10, 0.857}, {0.05, 0.928}, {0.01, 0.984}}, 0, "paper_default"};
}

CriticalValueTable empirical_critical_values(std::span<const double> samples,
                                             std::span<const double> tails) {
  static constexpr double kDefaultTails[] = {0.10, 0.05, 0.01};
  if (tails.empty()) tails = kDefaultTails;
  if (samples.size() < kMinCriticalSamples)
    throw InputError("critical values need at least " + std::to_string(kMinCriticalSamples) +
                     " samples, got " + std::to_string(samples.size()));
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  CriticalValueTable table;
  table.samples = samples.size();
  table.source = "recomputed";
  for (double tail : tails) {
    if (!(tail > 0.0 && tail < 1.0)) throw InputError("tail probability outside (0, 1)");
    table.entries.emplace_back(tail, quantile_type7(sorted, 1.0 - tail));
  }
  return table;
}

double incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  // Use the symmetry relation where the continued fraction converges fastest.
  if (x > (a + 1.0) / (a + b + 2.0)) return 1.0 - incomplete_beta(b, a, 1.0 - x);
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  constexpr double kTiny = 1e-300;
  constexpr double kEps = 1e-16;
  // Modified Lentz evaluation of the continued fraction.
  double c = 1.0;
  double d = 1.0 - (a + b) * x / (a + 1.0);
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double f = d;
  for (int m = 1; m <= 10000; ++m) {
    const double md = m;
    double num = md * (b - md) * x / ((a + 2.0 * md - 1.0) * (a + 2.0 * md));
    d = 1.0 + num * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + num / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    f *= d * c;
    num = -(a + md) * (a + b + md) * x / ((a + 2.0 * md) * (a + 2.0 * md + 1.0));
    d = 1.0 + num * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + num / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double delta = d * c;
    f *= delta;
    if (std::abs(delta - 1.0) < kEps) break;
  }
  return std::exp(log_front) * f / a;
}

double student_t_cdf(double t, double df) {
  if (!(df > 0.0)) throw InputError("degrees of freedom must be positive");
  const double x = df / (df + t * t);
  const double tail = 0.5 * incomplete_beta(0.5 * df, 0.5, x);
  return t >= 0.0 ? 1.0 - tail : tail;
}

PairedTTest paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InputError("paired t-test: samples differ in length");
  if (a.size() < 2) throw InputError("paired t-test needs at least two pairs");
  const std::size_t n = a.size();
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
  PairedTTest r;
  r.df = static_cast<double>(n - 1);
  if (std::all_of(d.begin(), d.end(), [](double v) { return v == 0.0; })) {
    r.all_equal = true;
    return r;
  }
  double mean = 0.0;
  for (double v : d) mean += v;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : d) ss += (v - mean) * (v - mean);
  const double var = ss / r.df;
  if (!(var > 0.0)) throw UndefinedStatistic("paired t-test: differences have zero variance");
  r.t = mean / std::sqrt(var / static_cast<double>(n));
  r.p_value = 2.0 * (1.0 - student_t_cdf(std::abs(r.t), r.df));
  r.p_value = std::clamp(r.p_value, 0.0, 1.0);
  r.significant = r.p_value < 0.05;
  return r;
}

Histogram histogram(std::span<const double> values, std::size_t bins, double lo, double hi) {
  if (bins == 0 || !(hi > lo)) throw InputError("histogram needs bins > 0 and hi > lo");
  Histogram h;
  h.lo = lo;
  h.hi = hi;
  h.counts.assign(bins, 0);
  std::vector<double> edges(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i)
    edges[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bins);
  edges[bins] = hi;
  for (double v : values) {
    if (v < lo) {
      ++h.below;
    } else if (v > hi) {
      ++h.above;
    } else if (v == hi) {
      ++h.counts[bins - 1];
    } else {
      const auto it = std::upper_bound(edges.begin(), edges.end(), v);
      ++h.counts[static_cast<std::size_t>(it - edges.begin()) - 1];
    }
  }
  return h;
}

}  // namespace acadj::stats
