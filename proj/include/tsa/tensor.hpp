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

// Row-major dense matrices and CSR sparse matrices. These are plain value
// types; every product goes through the dispatched kernels in kernels.hpp.

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tsa/kernels.hpp"

namespace tsa {

template <class T>
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T(0))
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix from_rows(std::initializer_list<std::initializer_list<T>> rows) {
    Matrix m;
    m.rows_ = rows.size();
    m.cols_ = rows.size() ? rows.begin()->size() : 0;
    m.data_.reserve(m.rows_ * m.cols_);
    for (const auto& r : rows) {
      if (r.size() != m.cols_) throw std::invalid_argument("ragged matrix literal");
      m.data_.insert(m.data_.end(), r.begin(), r.end());
    }
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  T& operator()(std::size_t r, std::size_t c) {
    assert(r < rows_ && c < cols_);
    return data_[r * cols_ + c];
  }
  T operator()(std::size_t r, std::size_t c) const {
    assert(r < rows_ && c < cols_);
    return data_[r * cols_ + c];
  }

  std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
  bool same_shape(const Matrix& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

inline std::string shape_str(std::size_t r, std::size_t c) {
  return "[" + std::to_string(r) + "x" + std::to_string(c) + "]";
}

template <class T>
void require_shape(const Matrix<T>& m, std::size_t rows, std::size_t cols,
                   const char* what) {
  if (m.rows() != rows || m.cols() != cols) {
    throw std::invalid_argument(std::string(what) + ": expected shape " +
                                shape_str(rows, cols) + ", got " +
                                shape_str(m.rows(), m.cols()));
  }
}

// C = A * B
template <class T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("matmul: inner dimension mismatch " +
                                shape_str(a.rows(), a.cols()) + " * " +
                                shape_str(b.rows(), b.cols()));
  }
  Matrix<T> c(a.rows(), b.cols());
  kernels::active<T>().gemm_nn(a.rows(), b.cols(), a.cols(), a.data(), a.cols(),
                               b.data(), b.cols(), c.data(), c.cols());
  return c;
}

// C = A * B^T
template <class T>
Matrix<T> matmul_nt(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.cols() != b.cols()) {
    throw std::invalid_argument("matmul_nt: inner dimension mismatch");
  }
  Matrix<T> c(a.rows(), b.rows());
  kernels::active<T>().gemm_nt(a.rows(), b.rows(), a.cols(), a.data(), a.cols(),
                               b.data(), b.cols(), c.data(), c.cols());
  return c;
}

template <class T>
T row_norm(std::span<const T> v) {
  return std::sqrt(kernels::dot(v.data(), v.data(), v.size()));
}

template <class T, class U>
Matrix<U> cast(const Matrix<T>& m) {
  Matrix<U> out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.size(); ++i) out.data()[i] = static_cast<U>(m.data()[i]);
  return out;
}

// Compressed sparse rows. Column indices within a row are sorted.
template <class T>
struct Csr {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> indptr{0};
  std::vector<std::size_t> indices;
  std::vector<T> values;

  std::size_t nnz() const { return values.size(); }

  Matrix<T> to_dense() const {
    Matrix<T> d(rows, cols);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t p = indptr[i]; p < indptr[i + 1]; ++p) d(i, indices[p]) = values[p];
    return d;
  }

  template <class U>
  Csr<U> cast() const {
    Csr<U> out;
    out.rows = rows;
    out.cols = cols;
    out.indptr = indptr;
    out.indices = indices;
    out.values.assign(values.begin(), values.end());
    return out;
  }
};

// Y = S * X
template <class T>
Matrix<T> spmm(const Csr<T>& s, const Matrix<T>& x) {
  if (s.cols != x.rows()) throw std::invalid_argument("spmm: dimension mismatch");
  Matrix<T> y(s.rows, x.cols());
  const auto& k = kernels::active<T>();
  for (std::size_t i = 0; i < s.rows; ++i) {
    T* yi = y.data() + i * y.cols();
    for (std::size_t p = s.indptr[i]; p < s.indptr[i + 1]; ++p) {
      k.axpy(s.values[p], x.data() + s.indices[p] * x.cols(), yi, x.cols());
    }
  }
  return y;
}

// dX += S^T * dY
template <class T>
void spmm_transpose_acc(const Csr<T>& s, const Matrix<T>& dy, Matrix<T>& dx) {
  const auto& k = kernels::active<T>();
  for (std::size_t i = 0; i < s.rows; ++i) {
    const T* dyi = dy.data() + i * dy.cols();
    for (std::size_t p = s.indptr[i]; p < s.indptr[i + 1]; ++p) {
      k.axpy(s.values[p], dyi, dx.data() + s.indices[p] * dx.cols(), dy.cols());
    }
  }
}

}  // namespace tsa
