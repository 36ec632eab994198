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

#pragma once

// Dense arithmetic kernels behind every matrix product in the library.
//
// Each kernel has a portable scalar reference implementation and, where the
// build target allows it, a vectorized variant (AVX2+FMA on x86-64, NEON on
// AArch64). The active table is chosen once at first use from the CPU's
// capabilities; setting TSA_ISA=scalar in the environment forces the
// reference path. All variants compute the same mathematical result and are
// equivalence-tested against the scalar table; they may differ in the last
// bits because summation order differs.
//
// Matrices are row-major with explicit leading dimensions (row strides), so
// column blocks such as individual attention heads can be passed without
// copying.

#include <cstddef>
#include <string_view>
#include <vector>

namespace tsa::kernels {

enum class Isa { kScalar, kAvx2, kNeon };

std::string_view isa_name(Isa isa);

template <class T>
struct KernelTable {
  Isa isa;
  // sum_i x[i] * y[i]
  T (*dot)(const T* x, const T* y, std::size_t n);
  // y += alpha * x
  void (*axpy)(T alpha, const T* x, T* y, std::size_t n);
  // C[m x n] += A[m x k] * B[k x n]
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const T* a,
                  std::size_t lda, const T* b, std::size_t ldb, T* c,
                  std::size_t ldc);
  // C[m x n] += A[m x k] * B[n x k]^T
  void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k, const T* a,
                  std::size_t lda, const T* b, std::size_t ldb, T* c,
                  std::size_t ldc);
  // C[m x n] += A[k x m]^T * B[k x n]
  void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k, const T* a,
                  std::size_t lda, const T* b, std::size_t ldb, T* c,
                  std::size_t ldc);
};

template <class T>
const KernelTable<T>& scalar_table();

// Tables compiled into this binary and runnable on this CPU, scalar first.
template <class T>
std::vector<const KernelTable<T>*> available_tables();

// The dispatched table. Resolved once; thread-safe.
template <class T>
const KernelTable<T>& active();

Isa active_isa();

// Convenience wrappers over active().
template <class T>
inline T dot(const T* x, const T* y, std::size_t n) {
  return active<T>().dot(x, y, n);
}

template <class T>
inline void axpy(T alpha, const T* x, T* y, std::size_t n) {
  active<T>().axpy(alpha, x, y, n);
}

namespace detail {
// Registered by the ISA-specific translation units; null when not built.
const KernelTable<float>* avx2_table_f32();
const KernelTable<double>* avx2_table_f64();
const KernelTable<float>* neon_table_f32();
const KernelTable<double>* neon_table_f64();
}  // namespace detail

}  // namespace tsa::kernels
