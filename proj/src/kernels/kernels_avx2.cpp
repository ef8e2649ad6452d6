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

// Compiled with -mavx2 -mfma. Nothing in this file may run before
// dispatch.cpp has confirmed CPU support.

#include "acadj/kernels.hpp"

#include <immintrin.h>

#include <cmath>
#include <cstring>

namespace acadj::kernels {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d s0 = _mm256_setzero_pd();
  __m256d s1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), s0);
    s1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), s1);
  }
  for (; i + 4 <= n; i += 4)
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), s0);
  double s = hsum(_mm256_add_pd(s0, s1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

// C[i0..i0+R) x [0, n) += sum_p A(i, p) * B[p, :], where A(i, p) lives at
// a[i * a_row + p * a_col]. Covers both A*B and A^T*B.
template <int R>
void row_block(const double* a, std::size_t a_row, std::size_t a_col,
               const double* b, double* c, std::size_t i0, std::size_t k,
               std::size_t n) {
  std::size_t j = 0;
  for (; j + 8 <= n; j += 8) {
    __m256d acc0[R], acc1[R];
    for (int r = 0; r < R; ++r) {
      acc0[r] = _mm256_loadu_pd(c + (i0 + r) * n + j);
      acc1[r] = _mm256_loadu_pd(c + (i0 + r) * n + j + 4);
    }
    for (std::size_t p = 0; p < k; ++p) {
      const __m256d b0 = _mm256_loadu_pd(b + p * n + j);
      const __m256d b1 = _mm256_loadu_pd(b + p * n + j + 4);
      for (int r = 0; r < R; ++r) {
        const __m256d av = _mm256_broadcast_sd(a + (i0 + r) * a_row + p * a_col);
        acc0[r] = _mm256_fmadd_pd(av, b0, acc0[r]);
        acc1[r] = _mm256_fmadd_pd(av, b1, acc1[r]);
      }
    }
    for (int r = 0; r < R; ++r) {
      _mm256_storeu_pd(c + (i0 + r) * n + j, acc0[r]);
      _mm256_storeu_pd(c + (i0 + r) * n + j + 4, acc1[r]);
    }
  }
  for (; j + 4 <= n; j += 4) {
    __m256d acc[R];
    for (int r = 0; r < R; ++r) acc[r] = _mm256_loadu_pd(c + (i0 + r) * n + j);
    for (std::size_t p = 0; p < k; ++p) {
      const __m256d b0 = _mm256_loadu_pd(b + p * n + j);
      for (int r = 0; r < R; ++r) {
        const __m256d av = _mm256_broadcast_sd(a + (i0 + r) * a_row + p * a_col);
        acc[r] = _mm256_fmadd_pd(av, b0, acc[r]);
      }
    }
    for (int r = 0; r < R; ++r) _mm256_storeu_pd(c + (i0 + r) * n + j, acc[r]);
  }
  for (; j < n; ++j) {
    for (int r = 0; r < R; ++r) {
      double s = c[(i0 + r) * n + j];
      for (std::size_t p = 0; p < k; ++p)
        s = std::fma(a[(i0 + r) * a_row + p * a_col], b[p * n + j], s);
      c[(i0 + r) * n + j] = s;
    }
  }
}

void strided_gemm(const double* a, std::size_t a_row, std::size_t a_col,
                  const double* b, double* c, std::size_t m, std::size_t k,
                  std::size_t n, bool accumulate) {
  if (!accumulate) std::memset(c, 0, sizeof(double) * m * n);
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) row_block<4>(a, a_row, a_col, b, c, i, k, n);
  for (; i < m; ++i) row_block<1>(a, a_row, a_col, b, c, i, k, n);
}

void gemm_nn_avx2(const double* a, const double* b, double* c, std::size_t m,
                  std::size_t k, std::size_t n, bool accumulate) {
  strided_gemm(a, k, 1, b, c, m, k, n, accumulate);
}

void gemm_tn_avx2(const double* a, const double* b, double* c, std::size_t m,
                  std::size_t k, std::size_t n, bool accumulate) {
  strided_gemm(a, 1, m, b, c, m, k, n, accumulate);
}

void gemm_nt_avx2(const double* a, const double* b, double* c, std::size_t m,
                  std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
      __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
      __m256d s2 = _mm256_setzero_pd(), s3 = _mm256_setzero_pd();
      const double* b0 = b + j * k;
      const double* b1 = b0 + k;
      const double* b2 = b1 + k;
      const double* b3 = b2 + k;
      std::size_t p = 0;
      for (; p + 4 <= k; p += 4) {
        const __m256d av = _mm256_loadu_pd(ai + p);
        s0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b0 + p), s0);
        s1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b1 + p), s1);
        s2 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b2 + p), s2);
        s3 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b3 + p), s3);
      }
      double r0 = hsum(s0), r1 = hsum(s1), r2 = hsum(s2), r3 = hsum(s3);
      for (; p < k; ++p) {
        r0 += ai[p] * b0[p];
        r1 += ai[p] * b1[p];
        r2 += ai[p] * b2[p];
        r3 += ai[p] * b3[p];
      }
      double* ci = c + i * n + j;
      if (accumulate) {
        ci[0] += r0; ci[1] += r1; ci[2] += r2; ci[3] += r3;
      } else {
        ci[0] = r0; ci[1] = r1; ci[2] = r2; ci[3] = r3;
      }
    }
    for (; j < n; ++j) {
      const double s = dot_avx2(ai, b + j * k, k);
      c[i * n + j] = accumulate ? c[i * n + j] + s : s;
    }
  }
}

LagSums lag_sums_avx2(const double* e, std::size_t n) {
  LagSums s;
  if (n == 0) return s;
  __m256d cross = _mm256_setzero_pd();
  __m256d head = _mm256_setzero_pd();
  __m256d diff = _mm256_setzero_pd();
  std::size_t t = 1;
  for (; t + 4 <= n; t += 4) {
    const __m256d cur = _mm256_loadu_pd(e + t);
    const __m256d prev = _mm256_loadu_pd(e + t - 1);
    cross = _mm256_fmadd_pd(cur, prev, cross);
    head = _mm256_fmadd_pd(prev, prev, head);
    const __m256d d = _mm256_sub_pd(cur, prev);
    diff = _mm256_fmadd_pd(d, d, diff);
  }
  s.cross = hsum(cross);
  s.head_sq = hsum(head);
  s.diff_sq = hsum(diff);
  for (; t < n; ++t) {
    s.cross += e[t] * e[t - 1];
    s.head_sq += e[t - 1] * e[t - 1];
    const double d = e[t] - e[t - 1];
    s.diff_sq += d * d;
  }
  s.total_sq = s.head_sq + e[n - 1] * e[n - 1];
  return s;
}

void adam_update_avx2(double* param, const double* grad, double* m, double* v,
                      std::size_t n, const AdamParams& p) {
  const __m256d b1 = _mm256_set1_pd(p.beta1);
  const __m256d b2 = _mm256_set1_pd(p.beta2);
  const __m256d c1 = _mm256_set1_pd(1.0 - p.beta1);
  const __m256d c2 = _mm256_set1_pd(1.0 - p.beta2);
  const __m256d inv_bias1 = _mm256_set1_pd(1.0 / p.bias1);
  const __m256d inv_bias2 = _mm256_set1_pd(1.0 / p.bias2);
  const __m256d lr = _mm256_set1_pd(p.lr);
  const __m256d eps = _mm256_set1_pd(p.eps);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d g = _mm256_loadu_pd(grad + i);
    __m256d mi = _mm256_loadu_pd(m + i);
    __m256d vi = _mm256_loadu_pd(v + i);
    mi = _mm256_fmadd_pd(b1, mi, _mm256_mul_pd(c1, g));
    vi = _mm256_fmadd_pd(b2, vi, _mm256_mul_pd(c2, _mm256_mul_pd(g, g)));
    _mm256_storeu_pd(m + i, mi);
    _mm256_storeu_pd(v + i, vi);
    const __m256d mhat = _mm256_mul_pd(mi, inv_bias1);
    const __m256d vhat = _mm256_mul_pd(vi, inv_bias2);
    const __m256d step =
        _mm256_div_pd(_mm256_mul_pd(lr, mhat), _mm256_add_pd(_mm256_sqrt_pd(vhat), eps));
    _mm256_storeu_pd(param + i, _mm256_sub_pd(_mm256_loadu_pd(param + i), step));
  }
  for (; i < n; ++i) {
    m[i] = p.beta1 * m[i] + (1.0 - p.beta1) * grad[i];
    v[i] = p.beta2 * v[i] + (1.0 - p.beta2) * grad[i] * grad[i];
    const double mhat = m[i] * (1.0 / p.bias1);
    const double vhat = v[i] * (1.0 / p.bias2);
    param[i] -= p.lr * mhat / (std::sqrt(vhat) + p.eps);
  }
}

}  // namespace

const KernelTable& avx2_table_unchecked() noexcept {
  static const KernelTable table{
      "avx2",       dot_avx2,      axpy_avx2,        gemm_nn_avx2,
      gemm_nt_avx2, gemm_tn_avx2,  lag_sums_avx2,    adam_update_avx2,
  };
  return table;
}

}  // namespace acadj::kernels
