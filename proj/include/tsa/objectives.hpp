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

// Closed-form training objectives with analytic gradients.
//
// Every loss takes unit-norm embedding rows (cosine similarity == dot
// product) and returns its value plus gradients with respect to each
// embedding matrix and, where used, the temperature. The trainer wraps these
// results as tape nodes so gradients continue into the encoders.

#include <optional>
#include <vector>

#include "tsa/tensor.hpp"

namespace tsa {

inline constexpr double kTauMin = 1e-3;
inline constexpr double kTauMax = 100.0;
inline constexpr double kTauInit = 0.07;

struct LossConfig {
  double tau = kTauInit;
  double margin = 1.0;
  double alpha = 0.0;
  std::size_t top_k = 1;
  // true: standard InfoNCE denominators over the whole batch (plus the
  // retrieved positives for the matching loss). false: denominators over
  // j != i only, exactly as the objective is usually printed.
  bool include_positive_in_denominator = true;

  void validate() const;
};

double clamp_tau(double tau);

template <class T>
struct LossResult {
  T value = 0;
  Matrix<T> grad_first;   // w.r.t. the first embedding argument
  Matrix<T> grad_second;  // w.r.t. the second embedding argument
  T grad_tau = 0;
};

// mean_i -log softmax_{j in D_i}(sim(n_i, t_j) / tau)[i]
template <class T>
LossResult<T> contrastive_loss(const Matrix<T>& nodes, const Matrix<T>& texts, T tau,
                               bool include_positive);

// Positive semantics matching. retrieved[i] holds node i's retrieved bank
// embeddings (k_i x d, possibly empty; constants, no gradient). Nodes with no
// retrieval are skipped; the mean runs over contributing nodes.
template <class T>
LossResult<T> psm_loss(const Matrix<T>& nodes, const std::vector<Matrix<T>>& retrieved,
                       const Matrix<T>& texts, T tau, bool include_positive);

// mean over ordered pairs (i, j != i) of max(0, m + sim(n_i, neg_i) - sim(n_i, neg_j)).
// grad_first: nodes, grad_second: negative texts.
template <class T>
LossResult<T> margin_loss(const Matrix<T>& nodes, const Matrix<T>& neg_texts, T margin);

// -(1/B) sum_i ||t_i - neg_i||_2. grad_first: texts, grad_second: negative texts.
template <class T>
LossResult<T> semantics_opposite_loss(const Matrix<T>& texts, const Matrix<T>& neg_texts);

struct LossBreakdown {
  double contrastive = 0;
  double psm = 0;
  double margin = 0;
  double opposite = 0;
  double total = 0;
};

enum class GradientRouting {
  // Training routing: margin and opposite losses only reach the negative
  // texts, and the matching loss only reaches the nodes.
  kTraining,
  // Exact gradient of the total objective w.r.t. every input.
  kFull,
};

template <class T>
struct BatchArtifacts {
  const Matrix<T>* nodes = nullptr;
  const Matrix<T>* texts = nullptr;
  const Matrix<T>* neg_texts = nullptr;  // required iff alpha > 0
  const std::vector<Matrix<T>>* retrieved = nullptr;
};

template <class T>
struct TotalLossResult {
  LossBreakdown breakdown;
  T value = 0;
  Matrix<T> grad_nodes;
  Matrix<T> grad_texts;
  Matrix<T> grad_neg_texts;  // empty when alpha == 0
  T grad_tau = 0;
};

// L_CL + L_PSM + alpha * (L_ML + L_SO). With alpha == 0 the negative texts
// are neither required nor read.
template <class T>
TotalLossResult<T> total_loss(const BatchArtifacts<T>& batch, const LossConfig& cfg,
                              GradientRouting routing = GradientRouting::kTraining);

}  // namespace tsa
