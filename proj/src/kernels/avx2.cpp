// Copyright 2026 The TSA Authors.
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

// AVX2 + FMA kernels. This translation unit is compiled with -mavx2 -mfma
// and must only be entered after a runtime CPU check (see dispatch.cpp).

#include "tsa/kernels.hpp"

#if defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>

namespace tsa::kernels {
namespace {

struct F32 {
  using Scalar = float;
  using Reg = __m256;
  static constexpr std::size_t kWidth = 8;
  static Reg zero() { return _mm256_setzero_ps(); }
  static Reg set1(float v) { return _mm256_set1_ps(v); }
  static Reg load(const float* p) { return _mm256_loadu_ps(p); }
  static void store(float* p, Reg v) { _mm256_storeu_ps(p, v); }
  static Reg fmadd(Reg a, Reg b, Reg c) { return _mm256_fmadd_ps(a, b, c); }
  static Reg add(Reg a, Reg b) { return _mm256_add_ps(a, b); }
  static float hsum(Reg v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    lo = _mm_add_ps(lo, _mm_movehl_ps(lo, lo));
    lo = _mm_add_ss(lo, _mm_movehdup_ps(lo));
    return _mm_cvtss_f32(lo);
  }
};

struct F64 {
  using Scalar = double;
  using Reg = __m256d;
  static constexpr std::size_t kWidth = 4;
  static Reg zero() { return _mm256_setzero_pd(); }
  static Reg set1(double v) { return _mm256_set1_pd(v); }
  static Reg load(const double* p) { return _mm256_loadu_pd(p); }
  static void store(double* p, Reg v) { _mm256_storeu_pd(p, v); }
  static Reg fmadd(Reg a, Reg b, Reg c) { return _mm256_fmadd_pd(a, b, c); }
  static Reg add(Reg a, Reg b) { return _mm256_add_pd(a, b); }
  static double hsum(Reg v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_add_sd(lo, _mm_unpackhi_pd(lo, lo)));
  }
};

template <class V>
typename V::Scalar dot(const typename V::Scalar* x,
                       const typename V::Scalar* y, std::size_t n) {
  constexpr std::size_t w = V::kWidth;
  auto a0 = V::zero(), a1 = V::zero(), a2 = V::zero(), a3 = V::zero();
  std::size_t i = 0;
  for (; i + 4 * w <= n; i += 4 * w) {
    a0 = V::fmadd(V::load(x + i), V::load(y + i), a0);
    a1 = V::fmadd(V::load(x + i + w), V::load(y + i + w), a1);
    a2 = V::fmadd(V::load(x + i + 2 * w), V::load(y + i + 2 * w), a2);
    a3 = V::fmadd(V::load(x + i + 3 * w), V::load(y + i + 3 * w), a3);
  }
  for (; i + w <= n; i += w) a0 = V::fmadd(V::load(x + i), V::load(y + i), a0);
  auto acc = V::hsum(V::add(V::add(a0, a1), V::add(a2, a3)));
  for (; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

template <class V>
void axpy(typename V::Scalar alpha, const typename V::Scalar* x,
          typename V::Scalar* y, std::size_t n) {
  constexpr std::size_t w = V::kWidth;
  const auto s = V::set1(alpha);
  std::size_t i = 0;
  for (; i + 2 * w <= n; i += 2 * w) {
    V::store(y + i, V::fmadd(s, V::load(x + i), V::load(y + i)));
    V::store(y + i + w, V::fmadd(s, V::load(x + i + w), V::load(y + i + w)));
  }
  for (; i + w <= n; i += w) V::store(y + i, V::fmadd(s, V::load(x + i), V::load(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

// Row i of C accumulates over p in register blocks of 4 vectors, so each C
// tile is loaded and stored once per row instead of once per p.
template <class V>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k,
             const typename V::Scalar* a, std::size_t lda,
             const typename V::Scalar* b, std::size_t ldb,
             typename V::Scalar* c, std::size_t ldc) {
  using S = typename V::Scalar;
  constexpr std::size_t w = V::kWidth;
  constexpr std::size_t tile = 4 * w;
  for (std::size_t i = 0; i < m; ++i) {
    const S* ai = a + i * lda;
    S* ci = c + i * ldc;
    std::size_t j = 0;
    for (; j + tile <= n; j += tile) {
      auto c0 = V::load(ci + j), c1 = V::load(ci + j + w);
      auto c2 = V::load(ci + j + 2 * w), c3 = V::load(ci + j + 3 * w);
      for (std::size_t p = 0; p < k; ++p) {
        if (ai[p] == S(0)) continue;
        const auto s = V::set1(ai[p]);
        const S* bp = b + p * ldb + j;
        c0 = V::fmadd(s, V::load(bp), c0);
        c1 = V::fmadd(s, V::load(bp + w), c1);
        c2 = V::fmadd(s, V::load(bp + 2 * w), c2);
        c3 = V::fmadd(s, V::load(bp + 3 * w), c3);
      }
      V::store(ci + j, c0);
      V::store(ci + j + w, c1);
      V::store(ci + j + 2 * w, c2);
      V::store(ci + j + 3 * w, c3);
    }
    for (; j + w <= n; j += w) {
      auto c0 = V::load(ci + j);
      for (std::size_t p = 0; p < k; ++p) {
        if (ai[p] == S(0)) continue;
        c0 = V::fmadd(V::set1(ai[p]), V::load(b + p * ldb + j), c0);
      }
      V::store(ci + j, c0);
    }
    for (; j < n; ++j) {
      S acc = ci[j];
      for (std::size_t p = 0; p < k; ++p) acc += ai[p] * b[p * ldb + j];
      ci[j] = acc;
    }
  }
}

template <class V>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k,
             const typename V::Scalar* a, std::size_t lda,
             const typename V::Scalar* b, std::size_t ldb,
             typename V::Scalar* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      c[i * ldc + j] += dot<V>(a + i * lda, b + j * ldb, k);
    }
  }
}

template <class V>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k,
             const typename V::Scalar* a, std::size_t lda,
             const typename V::Scalar* b, std::size_t ldb,
             typename V::Scalar* c, std::size_t ldc) {
  using S = typename V::Scalar;
  for (std::size_t p = 0; p < k; ++p) {
    const S* ap = a + p * lda;
    const S* bp = b + p * ldb;
    for (std::size_t i = 0; i < m; ++i) {
      if (ap[i] == S(0)) continue;
      axpy<V>(ap[i], bp, c + i * ldc, n);
    }
  }
}

template <class V>
constexpr KernelTable<typename V::Scalar> make_table() {
  return {Isa::kAvx2, &dot<V>, &axpy<V>, &gemm_nn<V>, &gemm_nt<V>, &gemm_tn<V>};
}

const KernelTable<float> kAvx2F32 = make_table<F32>();
const KernelTable<double> kAvx2F64 = make_table<F64>();

}  // namespace

namespace detail {
const KernelTable<float>* avx2_table_f32() { return &kAvx2F32; }
const KernelTable<double>* avx2_table_f64() { return &kAvx2F64; }
}  // namespace detail

}  // namespace tsa::kernels

#else

namespace tsa::kernels::detail {
const KernelTable<float>* avx2_table_f32() { return nullptr; }
const KernelTable<double>* avx2_table_f64() { return nullptr; }
}  // namespace tsa::kernels::detail

#endif
