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

// Dense double-precision inner loops used by autodiff, the optimizer and the
// residual statistics. Each kernel has a portable scalar reference and an
// AVX2+FMA variant; the table is picked once at startup from CPUID.
//
// All matrices are row-major and densely packed.

#include <cstddef>
#include <span>
#include <string_view>

namespace acadj::kernels {

// Sums needed by the lag-1 autocorrelation and Durbin-Watson statistics of a
// series e_0..e_{T-1}.
struct LagSums {
  double cross = 0.0;      // sum_{t>=1} e_t * e_{t-1}
  double head_sq = 0.0;    // sum_{t<=T-2} e_t^2
  double total_sq = 0.0;   // sum_t e_t^2
  double diff_sq = 0.0;    // sum_{t>=1} (e_t - e_{t-1})^2
};

struct AdamParams {
  double lr;
  double beta1;
  double beta2;
  double eps;
  double bias1;  // 1 - beta1^step
  double bias2;  // 1 - beta2^step
};

struct KernelTable {
  std::string_view name;

  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // C (m x n) = A (m x k) * B (k x n), or C += ... when accumulate.
  void (*gemm_nn)(const double* a, const double* b, double* c, std::size_t m,
                  std::size_t k, std::size_t n, bool accumulate);
  // C (m x n) [+]= A (m x k) * B^T, with B stored n x k.
  void (*gemm_nt)(const double* a, const double* b, double* c, std::size_t m,
                  std::size_t k, std::size_t n, bool accumulate);
  // C (m x n) [+]= A^T * B, with A stored k x m and B stored k x n.
  void (*gemm_tn)(const double* a, const double* b, double* c, std::size_t m,
                  std::size_t k, std::size_t n, bool accumulate);
  LagSums (*lag_sums)(const double* e, std::size_t n);
  // In-place bias-corrected Adam update over n contiguous elements.
  void (*adam_update)(double* param, const double* grad, double* m, double* v,
                      std::size_t n, const AdamParams& p);
};

const KernelTable& scalar_table() noexcept;

// Null when the binary was built without AVX2 support or the CPU lacks
// AVX2/FMA.
const KernelTable* avx2_table() noexcept;

// The table used by the library. Honors ACADJ_KERNELS=scalar to force the
// reference path.
const KernelTable& active() noexcept;

// Convenience wrappers over active().
inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size());
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active().axpy(alpha, x.data(), y.data(), x.size());
}

inline LagSums lag_sums(std::span<const double> e) {
  return active().lag_sums(e.data(), e.size());
}

}  // namespace acadj::kernels
