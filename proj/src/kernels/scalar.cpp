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

#include "tsa/kernels.hpp"

namespace tsa::kernels {
namespace {

template <class T>
T dot_ref(const T* x, const T* y, std::size_t n) {
  T acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

template <class T>
void axpy_ref(T alpha, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <class T>
void gemm_nn_ref(std::size_t m, std::size_t n, std::size_t k, const T* a,
                 std::size_t lda, const T* b, std::size_t ldb, T* c,
                 std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    T* ci = c + i * ldc;
    const T* ai = a + i * lda;
    for (std::size_t p = 0; p < k; ++p) {
      const T s = ai[p];
      if (s == T(0)) continue;
      axpy_ref(s, b + p * ldb, ci, n);
    }
  }
}

template <class T>
void gemm_nt_ref(std::size_t m, std::size_t n, std::size_t k, const T* a,
                 std::size_t lda, const T* b, std::size_t ldb, T* c,
                 std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      c[i * ldc + j] += dot_ref(a + i * lda, b + j * ldb, k);
    }
  }
}

template <class T>
void gemm_tn_ref(std::size_t m, std::size_t n, std::size_t k, const T* a,
                 std::size_t lda, const T* b, std::size_t ldb, T* c,
                 std::size_t ldc) {
  for (std::size_t p = 0; p < k; ++p) {
    const T* ap = a + p * lda;
    const T* bp = b + p * ldb;
    for (std::size_t i = 0; i < m; ++i) {
      const T s = ap[i];
      if (s == T(0)) continue;
      axpy_ref(s, bp, c + i * ldc, n);
    }
  }
}

template <class T>
constexpr KernelTable<T> make_scalar() {
  return {Isa::kScalar, &dot_ref<T>, &axpy_ref<T>, &gemm_nn_ref<T>,
          &gemm_nt_ref<T>, &gemm_tn_ref<T>};
}

constexpr KernelTable<float> kScalarF32 = make_scalar<float>();
constexpr KernelTable<double> kScalarF64 = make_scalar<double>();

}  // namespace

template <>
const KernelTable<float>& scalar_table<float>() {
  return kScalarF32;
}

template <>
const KernelTable<double>& scalar_table<double>() {
  return kScalarF64;
}

}  // namespace tsa::kernels
