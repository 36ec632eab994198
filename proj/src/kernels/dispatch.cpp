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

#include <cstdlib>
#include <string>

#include "tsa/kernels.hpp"

namespace tsa::kernels {
namespace {

bool cpu_has_avx2_fma() {
#if defined(__x86_64__) || defined(__i386__)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

bool forced_scalar() {
  const char* env = std::getenv("TSA_ISA");
  return env != nullptr && std::string(env) == "scalar";
}

template <class T>
const KernelTable<T>* simd_table();

template <>
const KernelTable<float>* simd_table<float>() {
  if (cpu_has_avx2_fma()) {
    if (auto* t = detail::avx2_table_f32()) return t;
  }
  return detail::neon_table_f32();
}

template <>
const KernelTable<double>* simd_table<double>() {
  if (cpu_has_avx2_fma()) {
    if (auto* t = detail::avx2_table_f64()) return t;
  }
  return detail::neon_table_f64();
}

template <class T>
const KernelTable<T>* resolve() {
  if (!forced_scalar()) {
    if (auto* t = simd_table<T>()) return t;
  }
  return &scalar_table<T>();
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return "scalar";
    case Isa::kAvx2:
      return "avx2";
    case Isa::kNeon:
      return "neon";
  }
  return "unknown";
}

template <class T>
std::vector<const KernelTable<T>*> available_tables() {
  std::vector<const KernelTable<T>*> out{&scalar_table<T>()};
  if (auto* t = simd_table<T>()) out.push_back(t);
  return out;
}

template <class T>
const KernelTable<T>& active() {
  static const KernelTable<T>* table = resolve<T>();
  return *table;
}

Isa active_isa() { return active<float>().isa; }

template std::vector<const KernelTable<float>*> available_tables<float>();
template std::vector<const KernelTable<double>*> available_tables<double>();
template const KernelTable<float>& active<float>();
template const KernelTable<double>& active<double>();

}  // namespace tsa::kernels
