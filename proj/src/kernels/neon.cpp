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

// NEON kernels for AArch64, where Advanced SIMD is architecturally
// guaranteed. dot/axpy are vectorized; the GEMM shapes are built on them.

#include "tsa/kernels.hpp"

#if defined(__aarch64__) && defined(__ARM_NEON)
#include <arm_neon.h>

namespace tsa::kernels {
namespace {

float dot_f32(const float* x, const float* y, std::size_t n) {
  float32x4_t a0 = vdupq_n_f32(0.f), a1 = vdupq_n_f32(0.f);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    a0 = vfmaq_f32(a0, vld1q_f32(x + i), vld1q_f32(y + i));
    a1 = vfmaq_f32(a1, vld1q_f32(x + i + 4), vld1q_f32(y + i + 4));
  }
  for (; i + 4 <= n; i += 4) a0 = vfmaq_f32(a0, vld1q_f32(x + i), vld1q_f32(y + i));
  float acc = vaddvq_f32(vaddq_f32(a0, a1));
  for (; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

double dot_f64(const double* x, const double* y, std::size_t n) {
  float64x2_t a0 = vdupq_n_f64(0.0), a1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    a0 = vfmaq_f64(a0, vld1q_f64(x + i), vld1q_f64(y + i));
    a1 = vfmaq_f64(a1, vld1q_f64(x + i + 2), vld1q_f64(y + i + 2));
  }
  double acc = vaddvq_f64(vaddq_f64(a0, a1));
  for (; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

void axpy_f32(float alpha, const float* x, float* y, std::size_t n) {
  const float32x4_t s = vdupq_n_f32(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) vst1q_f32(y + i, vfmaq_f32(vld1q_f32(y + i), s, vld1q_f32(x + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void axpy_f64(double alpha, const double* x, double* y, std::size_t n) {
  const float64x2_t s = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), s, vld1q_f64(x + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

template <class T, T (*Dot)(const T*, const T*, std::size_t),
          void (*Axpy)(T, const T*, T*, std::size_t)>
struct Composite {
  static void nn(std::size_t m, std::size_t n, std::size_t k, const T* a,
                 std::size_t lda, const T* b, std::size_t ldb, T* c,
                 std::size_t ldc) {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t p = 0; p < k; ++p)
        if (a[i * lda + p] != T(0)) Axpy(a[i * lda + p], b + p * ldb, c + i * ldc, n);
  }
  static void nt(std::size_t m, std::size_t n, std::size_t k, const T* a,
                 std::size_t lda, const T* b, std::size_t ldb, T* c,
                 std::size_t ldc) {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) c[i * ldc + j] += Dot(a + i * lda, b + j * ldb, k);
  }
  static void tn(std::size_t m, std::size_t n, std::size_t k, const T* a,
                 std::size_t lda, const T* b, std::size_t ldb, T* c,
                 std::size_t ldc) {
    for (std::size_t p = 0; p < k; ++p)
      for (std::size_t i = 0; i < m; ++i)
        if (a[p * lda + i] != T(0)) Axpy(a[p * lda + i], b + p * ldb, c + i * ldc, n);
  }
};

using C32 = Composite<float, &dot_f32, &axpy_f32>;
using C64 = Composite<double, &dot_f64, &axpy_f64>;

const KernelTable<float> kNeonF32{Isa::kNeon, &dot_f32, &axpy_f32, &C32::nn, &C32::nt, &C32::tn};
const KernelTable<double> kNeonF64{Isa::kNeon, &dot_f64, &axpy_f64, &C64::nn, &C64::nt, &C64::tn};

}  // namespace

namespace detail {
const KernelTable<float>* neon_table_f32() { return &kNeonF32; }
const KernelTable<double>* neon_table_f64() { return &kNeonF64; }
}  // namespace detail

}  // namespace tsa::kernels

#else

namespace tsa::kernels::detail {
const KernelTable<float>* neon_table_f32() { return nullptr; }
const KernelTable<double>* neon_table_f64() { return nullptr; }
}  // namespace tsa::kernels::detail

#endif
