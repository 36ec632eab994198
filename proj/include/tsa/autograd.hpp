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

// A minimal reverse-mode tape over dense matrices.
//
// A Tape records every intermediate value together with a closure that
// propagates the node's gradient into its inputs. Parameters enter the tape
// as borrowed leaves; after backward() their gradients are accumulated into
// Parameter::grad. Nodes that do not depend on any trainable leaf carry no
// gradient and their closures are never run, which is how frozen encoders
// and stop-gradient boundaries are expressed.
//
// The tape is single-use and single-threaded: build it, call backward once,
// read the parameter gradients, discard it.

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tsa/tensor.hpp"

namespace tsa {

template <class T>
struct Parameter {
  std::string name;
  Matrix<T> value;
  Matrix<T> grad;

  Parameter() = default;
  Parameter(std::string n, Matrix<T> v)
      : name(std::move(n)), value(std::move(v)), grad(value.rows(), value.cols()) {}

  void zero_grad() {
    if (!grad.same_shape(value)) grad = Matrix<T>(value.rows(), value.cols());
    grad.fill(T(0));
  }
};

template <class T>
using ParameterRefs = std::vector<Parameter<T>*>;

namespace ag {

template <class T>
class Tape;

template <class T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  const Matrix<T>& value() const { return tape->value(id); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

template <class T>
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t self)>;

  Var<T> constant(Matrix<T> v);
  // Borrows p.value; the parameter must outlive the tape.
  Var<T> parameter(Parameter<T>& p, bool requires_grad = true);
  Var<T> record(Matrix<T> value, std::span<const Var<T>> inputs, Backward fn);

  const Matrix<T>& value(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  // Gradient buffer of a node, allocated (zeroed) on first access.
  Matrix<T>& grad(std::size_t id);
  bool has_grad(std::size_t id) const { return !nodes_[id].grad.empty(); }

  // Seeds d(root)/d(root) = weight for every (root, weight) and runs all
  // closures in reverse order of recording. Roots must be 1x1.
  void backward(std::span<const std::pair<Var<T>, T>> seeds);
  void backward(Var<T> root) {
    const std::pair<Var<T>, T> seed{root, T(1)};
    backward(std::span<const std::pair<Var<T>, T>>(&seed, 1));
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix<T> owned;
    const Matrix<T>* borrowed = nullptr;
    Matrix<T> grad;
    bool requires_grad = false;
    Backward backward;
    Parameter<T>* param = nullptr;
  };
  std::deque<Node> nodes_;
};

// ---- Differentiable operations -------------------------------------------

template <class T>
Var<T> matmul(Var<T> a, Var<T> b);

template <class T>
Var<T> add(Var<T> a, Var<T> b);

// x + broadcast(bias) over rows; bias is 1 x cols.
template <class T>
Var<T> add_row_bias(Var<T> x, Var<T> bias);

template <class T>
Var<T> relu(Var<T> x);

// Exact GELU, 0.5 x (1 + erf(x / sqrt 2)).
template <class T>
Var<T> gelu(Var<T> x);

// Row-wise layer normalization with affine gamma/beta (each 1 x cols).
template <class T>
Var<T> layer_norm(Var<T> x, Var<T> gamma, Var<T> beta, T eps = T(1e-5));

template <class T>
Var<T> gather_rows(Var<T> x, std::vector<std::size_t> rows);

// Divides every row by its L2 norm. Throws std::domain_error when a row norm
// is below 1e-12 rather than producing NaN.
template <class T>
Var<T> l2_normalize_rows(Var<T> x);

// Y = S * X for a constant sparse S.
template <class T>
Var<T> spmm(const Csr<T>& s, Var<T> x);

// Identity on values, blocks gradient flow.
template <class T>
Var<T> stop_gradient(Var<T> x);

// Average of rows within each segment [starts[i], starts[i] + counts[i]).
template <class T>
Var<T> segment_mean(Var<T> x, std::vector<std::size_t> starts,
                    std::vector<std::size_t> counts);

// Packed multi-head self-attention over a batch of sequences laid out as
// consecutive blocks of `seq_len` rows in q/k/v (batch * seq_len rows,
// model-width columns). Keys at positions >= valid_lengths[b] are masked
// out of every softmax; padded query rows still produce (unused) outputs.
template <class T>
Var<T> masked_self_attention(Var<T> q, Var<T> k, Var<T> v, std::size_t seq_len,
                             std::vector<std::size_t> valid_lengths,
                             std::size_t heads);

// Builds the packed (batch * seq_len) x width input of a sequence encoder:
// row (b, p) = prompt[p] for p < prompt_rows, token_table[tokens[b][p -
// prompt_rows]] after that (PAD id 0 beyond the sequence end), plus
// positions[p]. `prompt` may be null.
template <class T>
Var<T> embed_sequences(Var<T> token_table, const Var<T>* prompt,
                       Var<T> positions,
                       const std::vector<std::vector<int>>& tokens,
                       std::size_t seq_len);

// A scalar node whose value and input gradients were computed by the caller
// (closed-form losses). grads[i] must match inputs[i] in shape and is scaled
// by the upstream gradient during backward.
template <class T>
Var<T> scalar_with_gradients(std::span<const Var<T>> inputs, T value,
                             std::vector<Matrix<T>> grads);

}  // namespace ag
}  // namespace tsa
