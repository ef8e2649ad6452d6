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

#include "acadj/kernels.hpp"

namespace k = acadj::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = g(rng);
  return v;
}

// FMA contraction changes rounding, so the variants agree to a few ulps of
// the accumulated magnitude rather than bitwise.
void check_close(const std::vector<double>& a, const std::vector<double>& b, double scale) {
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= 1e-12 * scale);
}

}  // namespace

TEST_SUITE("kernels") {
  TEST_CASE("scalar reference dot and axpy") {
    const std::vector<double> a{1, 2, 3}, b{4, 5, 6};
    CHECK(k::scalar_table().dot(a.data(), b.data(), 3) == 32.0);
    std::vector<double> y{1, 1, 1};
    k::scalar_table().axpy(2.0, a.data(), y.data(), 3);
    CHECK(y == std::vector<double>{3, 5, 7});
  }

  TEST_CASE("scalar gemm variants against loops") {
    // A = [[1,2],[3,4]], B = [[5,6],[7,8]]
    const std::vector<double> a{1, 2, 3, 4}, b{5, 6, 7, 8};
    std::vector<double> c(4, 0.0);
    k::scalar_table().gemm_nn(a.data(), b.data(), c.data(), 2, 2, 2, false);
    CHECK(c == std::vector<double>{19, 22, 43, 50});
    k::scalar_table().gemm_nt(a.data(), b.data(), c.data(), 2, 2, 2, false);
    CHECK(c == std::vector<double>{17, 23, 39, 53});
    k::scalar_table().gemm_tn(a.data(), b.data(), c.data(), 2, 2, 2, false);
    CHECK(c == std::vector<double>{26, 30, 38, 44});
    k::scalar_table().gemm_tn(a.data(), b.data(), c.data(), 2, 2, 2, true);
    CHECK(c == std::vector<double>{52, 60, 76, 88});
  }

  TEST_CASE("lag sums of a short series") {
    const std::vector<double> e{1, -1, 2};
    const k::LagSums s = k::scalar_table().lag_sums(e.data(), e.size());
    CHECK(s.cross == -3.0);
    CHECK(s.head_sq == 2.0);
    CHECK(s.total_sq == 6.0);
    CHECK(s.diff_sq == 13.0);
  }

  TEST_CASE("avx2 variants match the scalar reference") {
    const k::KernelTable* fast = k::avx2_table();
    if (!fast) {
      MESSAGE("AVX2 kernels unavailable on this build or CPU; equivalence not exercised");
      return;
    }
    const k::KernelTable& ref = k::scalar_table();
    std::mt19937_64 rng(2024);
    for (std::size_t n : {0, 1, 3, 4, 5, 7, 8, 15, 16, 17, 63, 64, 65, 1000}) {
      const auto a = random_vec(n, rng), b = random_vec(n, rng);
      CHECK(std::abs(fast->dot(a.data(), b.data(), n) - ref.dot(a.data(), b.data(), n)) <=
            1e-12 * (1.0 + static_cast<double>(n)));
      auto y1 = random_vec(n, rng);
      auto y2 = y1;
      fast->axpy(0.37, a.data(), y1.data(), n);
      ref.axpy(0.37, a.data(), y2.data(), n);
      check_close(y1, y2, 4.0);
      const k::LagSums s1 = fast->lag_sums(a.data(), n), s2 = ref.lag_sums(a.data(), n);
      const double scale = 1.0 + static_cast<double>(n);
      CHECK(std::abs(s1.cross - s2.cross) <= 1e-12 * scale);
      CHECK(std::abs(s1.head_sq - s2.head_sq) <= 1e-12 * scale);
      CHECK(std::abs(s1.total_sq - s2.total_sq) <= 1e-12 * scale);
      CHECK(std::abs(s1.diff_sq - s2.diff_sq) <= 1e-12 * scale);
    }
    const std::size_t dims[][3] = {{1, 1, 1}, {2, 3, 1}, {5, 7, 9}, {64, 6, 64}, {13, 64, 17},
                                   {3, 1, 33}, {8, 8, 8}, {65, 31, 4}};
    for (const auto& d : dims) {
      const std::size_t m = d[0], kk = d[1], n = d[2];
      const auto a = random_vec(m * kk, rng), b = random_vec(kk * n, rng);
      const auto bt = random_vec(n * kk, rng), at = random_vec(kk * m, rng);
      for (bool acc : {false, true}) {
        const auto init = random_vec(m * n, rng);
        auto c1 = init, c2 = init;
        fast->gemm_nn(a.data(), b.data(), c1.data(), m, kk, n, acc);
        ref.gemm_nn(a.data(), b.data(), c2.data(), m, kk, n, acc);
        check_close(c1, c2, 4.0 * static_cast<double>(kk + 1));
        c1 = init;
        c2 = init;
        fast->gemm_nt(a.data(), bt.data(), c1.data(), m, kk, n, acc);
        ref.gemm_nt(a.data(), bt.data(), c2.data(), m, kk, n, acc);
        check_close(c1, c2, 4.0 * static_cast<double>(kk + 1));
        c1 = init;
        c2 = init;
        fast->gemm_tn(at.data(), b.data(), c1.data(), m, kk, n, acc);
        ref.gemm_tn(at.data(), b.data(), c2.data(), m, kk, n, acc);
        check_close(c1, c2, 4.0 * static_cast<double>(kk + 1));
      }
    }
    for (std::size_t n : {1, 3, 4, 9, 64, 130}) {
      auto p1 = random_vec(n, rng), g = random_vec(n, rng), m1 = random_vec(n, rng);
      std::vector<double> v1(n);
      for (double& x : v1) x = std::abs(random_vec(1, rng)[0]);
      auto p2 = p1, m2 = m1, v2 = v1;
      const k::AdamParams prm{3e-3, 0.9, 0.999, 1e-8, 1 - 0.9 * 0.9, 1 - 0.999 * 0.999};
      fast->adam_update(p1.data(), g.data(), m1.data(), v1.data(), n, prm);
      ref.adam_update(p2.data(), g.data(), m2.data(), v2.data(), n, prm);
      check_close(p1, p2, 1.0);
      check_close(m1, m2, 1.0);
      check_close(v1, v2, 1.0);
    }
  }

  TEST_CASE("active table is one of the known variants") {
    const auto name = k::active().name;
    CHECK((name == k::scalar_table().name || (k::avx2_table() && name == k::avx2_table()->name)));
  }
}
