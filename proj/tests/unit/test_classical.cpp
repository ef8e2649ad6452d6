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

#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "acadj/classical.hpp"
#include "acadj/error.hpp"
#include "acadj/stats.hpp"
#include "oracles.hpp"

using namespace acadj;
namespace cl = acadj::classical;

namespace {

struct Dataset {
  Matrix x;  // with intercept column
  std::vector<double> y;
};

// y = 1 + 2 x + e with AR(1) e.
Dataset ar1_regression(std::size_t t, double rho, double sigma, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix raw(t, 1);
  for (double& v : raw.data) v = g(rng);
  const auto e = stats::simulate_ar1(rho, sigma, t, rng);
  Dataset d{cl::with_intercept(raw), std::vector<double>(t)};
  for (std::size_t i = 0; i < t; ++i) d.y[i] = 1.0 + 2.0 * raw(i, 0) + e[i];
  return d;
}

}  // namespace

TEST_SUITE("classical") {
  TEST_CASE("exactly linear data has zero residuals") {
    Matrix x(5, 2, std::vector<double>{1, 0, 1, 1, 1, 2, 1, 3, 1, 4});
    const std::vector<double> y{3, 5, 7, 9, 11};
    const auto fit = cl::ols_fit(x, y);
    CHECK(fit.beta[0] == doctest::Approx(3.0).epsilon(1e-14));
    CHECK(fit.beta[1] == doctest::Approx(2.0).epsilon(1e-14));
    for (double e : cl::residuals(x, y, fit.beta)) CHECK(std::abs(e) < 1e-13);
  }

  TEST_CASE("column of ones gives the mean") {
    const std::vector<double> y{1, 4, 2, 9};
    const auto fit = cl::ols_fit(Matrix(4, 1, 1.0), y);
    CHECK(fit.beta[0] == doctest::Approx(4.0).epsilon(1e-15));
  }

  TEST_CASE("rank deficiency and shape errors") {
    Matrix x(4, 2, std::vector<double>{1, 2, 2, 4, 3, 6, 4, 8});
    CHECK_THROWS_AS(cl::ols_fit(x, std::vector<double>{1, 2, 3, 4}), InputError);
    CHECK_THROWS_AS(cl::ols_fit(Matrix(3, 1, 1.0), std::vector<double>{1, 2}), ShapeError);
    CHECK_THROWS_AS(cl::cochrane_orcutt(Matrix(2, 1, 1.0), std::vector<double>{1, 2}, false), InputError);
  }

  TEST_CASE("ols matches a long double normal-equation oracle") {
    std::mt19937_64 rng(21);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int rep = 0; rep < 30; ++rep) {
      const std::size_t rows = 20 + rng() % 80, cols = 1 + rng() % 6;
      Matrix x(rows, cols);
      for (double& v : x.data) v = g(rng);
      std::vector<double> y(rows);
      for (double& v : y) v = g(rng);
      const auto fit = cl::ols_fit(x, y);
      const auto ref = oracle::normal_equations(x.data, y, rows, cols);
      for (std::size_t c = 0; c < cols; ++c)
        CHECK(std::abs(fit.beta[c] - static_cast<double>(ref[c])) < 1e-10);
    }
  }

  TEST_CASE("quasi differencing rows") {
    Matrix x(3, 1, std::vector<double>{1, 2, 4});
    const std::vector<double> y{10, 20, 40};
    Matrix xo;
    std::vector<double> yo;
    cl::quasi_difference(x, y, 0.5, false, xo, yo);
    CHECK(xo.data == std::vector<double>{1.5, 3.0});
    CHECK(yo == std::vector<double>{15, 30});
    cl::quasi_difference(x, y, 0.6, true, xo, yo);
    CHECK(xo(0, 0) == doctest::Approx(0.8));
    CHECK(yo[0] == doctest::Approx(8.0));
    CHECK(yo.size() == 3);
  }

  TEST_CASE("cochrane orcutt recovers the generator") {
    const Dataset d = ar1_regression(10000, 0.8, 0.1, 1);
    for (bool iterate : {false, true}) {
      const auto fit = cl::cochrane_orcutt(d.x, d.y, iterate);
      CHECK(std::abs(fit.beta[0] - 1.0) < 0.02);
      CHECK(std::abs(fit.beta[1] - 2.0) < 0.02);
      CHECK(std::abs(fit.rho - 0.8) < 0.03);
      CHECK(fit.sample_size == 9999);
    }
    const auto pw = cl::prais_winsten(d.x, d.y);
    CHECK(std::abs(pw.beta[1] - 2.0) < 0.02);
    CHECK(std::abs(pw.rho - 0.8) < 0.03);
    CHECK(pw.sample_size == 10000);
    CHECK(pw.converged);
  }

  TEST_CASE("on uncorrelated errors every estimator is close to ols") {
    const Dataset d = ar1_regression(10000, 0.0, 0.1, 2);
    const auto ols = cl::ols_fit(d.x, d.y);
    const auto co = cl::cochrane_orcutt(d.x, d.y, false);
    CHECK(std::abs(co.rho) < 0.05);
    for (const auto& f : {co, cl::cochrane_orcutt(d.x, d.y, true), cl::prais_winsten(d.x, d.y)})
      for (std::size_t c = 0; c < 2; ++c) CHECK(std::abs(f.beta[c] - ols.beta[c]) < 0.01);
  }

  TEST_CASE("iterated cochrane orcutt is at a fixed point") {
    const Dataset d = ar1_regression(2000, 0.6, 0.5, 3);
    const cl::IterationOptions opts{1e-8, 100};
    const auto fit = cl::cochrane_orcutt(d.x, d.y, true, opts);
    REQUIRE(fit.converged);
    const double again = stats::residual_autocorrelation(cl::residuals(d.x, d.y, fit.beta));
    CHECK(std::abs(again - fit.rho) < 1e-8);
  }

  TEST_CASE("iteration cap reports non-convergence") {
    const Dataset d = ar1_regression(500, 0.9, 1.0, 4);
    const auto fit = cl::cochrane_orcutt(d.x, d.y, true, cl::IterationOptions{1e-300, 2});
    CHECK_FALSE(fit.converged);
    CHECK(fit.iterations == 2);
  }

  TEST_CASE("prais winsten at rho zero is plain ols") {
    Matrix x(6, 2, std::vector<double>{1, 0, 1, 1, 1, 2, 1, 3, 1, 4, 1, 5});
    const std::vector<double> y{1, 3, 5, 7, 9, 11};  // exact fit, residuals vanish
    Matrix xo;
    std::vector<double> yo;
    cl::quasi_difference(x, y, 0.0, true, xo, yo);
    CHECK(xo == x);
    CHECK(yo == y);
  }

  TEST_CASE("prais winsten is at least as accurate as cochrane orcutt in small samples") {
    double err_co = 0.0, err_pw = 0.0;
    for (std::uint64_t s = 0; s < 100; ++s) {
      const Dataset d = ar1_regression(25, 0.8, 0.1, 100 + s);
      const auto co = cl::cochrane_orcutt(d.x, d.y, true);
      const auto pw = cl::prais_winsten(d.x, d.y);
      err_co += std::abs(co.beta[1] - 2.0) + std::abs(co.beta[0] - 1.0);
      err_pw += std::abs(pw.beta[1] - 2.0) + std::abs(pw.beta[0] - 1.0);
    }
    CHECK(err_pw <= err_co);
  }

  TEST_CASE("rho-zero estimators agree within three standard errors over seeds") {
    std::vector<std::vector<double>> slope(4);
    for (std::uint64_t s = 0; s < 100; ++s) {
      const Dataset d = ar1_regression(200, 0.0, 1.0, 500 + s);
      slope[0].push_back(cl::ols_fit(d.x, d.y).beta[1]);
      slope[1].push_back(cl::cochrane_orcutt(d.x, d.y, false).beta[1]);
      slope[2].push_back(cl::cochrane_orcutt(d.x, d.y, true).beta[1]);
      slope[3].push_back(cl::prais_winsten(d.x, d.y).beta[1]);
    }
    for (std::size_t a = 0; a < 4; ++a)
      for (std::size_t b = a + 1; b < 4; ++b) {
        double m = 0.0, v = 0.0;
        for (std::size_t i = 0; i < 100; ++i) m += slope[a][i] - slope[b][i];
        m /= 100.0;
        for (std::size_t i = 0; i < 100; ++i) {
          const double dlt = slope[a][i] - slope[b][i] - m;
          v += dlt * dlt;
        }
        const double se = std::sqrt(v / 99.0 / 100.0);
        CHECK(std::abs(m) < 3.0 * se + 1e-12);
      }
  }

  TEST_CASE("text and json output") {
    const Dataset d = ar1_regression(100, 0.5, 1.0, 9);
    const auto fit = cl::cochrane_orcutt(d.x, d.y, false);
    const std::vector<std::string> names{"intercept", "x"};
    const std::string text = fit.to_text(names);
    CHECK(text.find("intercept") != std::string::npos);
    CHECK(text.find("rho") != std::string::npos);
    const auto j = fit.to_json();
    CHECK(j.at("beta").size() == 2);
    CHECK(j.at("sample_size") == 99);
  }
}
