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

#include "tsa/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace tsa {

void LossConfig::validate() const {
  if (!(tau >= kTauMin && tau <= kTauMax)) throw std::invalid_argument("loss: tau outside [1e-3, 100]");
  if (!(margin >= 0)) throw std::invalid_argument("loss: margin must be >= 0");
  if (!(alpha >= 0)) throw std::invalid_argument("loss: alpha must be >= 0");
  if (top_k < 1) throw std::invalid_argument("loss: top_k must be >= 1");
}

double clamp_tau(double tau) { return std::clamp(tau, kTauMin, kTauMax); }

namespace {

template <class T>
void require_same(const Matrix<T>& a, const Matrix<T>& b, const char* what) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch " +
                                shape_str(a.rows(), a.cols()) + " vs " +
                                shape_str(b.rows(), b.cols()));
  }
}

// Numerically stable log-sum-exp; also writes softmax weights into `w`.
template <class T>
T log_sum_exp(const std::vector<T>& z, std::vector<T>& w) {
  T mx = -std::numeric_limits<T>::infinity();
  for (T v : z) mx = std::max(mx, v);
  w.resize(z.size());
  T sum = 0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    w[i] = std::exp(z[i] - mx);
    sum += w[i];
  }
  for (auto& v : w) v /= sum;
  return mx + std::log(sum);
}

}  // namespace

template <class T>
LossResult<T> contrastive_loss(const Matrix<T>& nodes, const Matrix<T>& texts, T tau,
                               bool include_positive) {
  require_same(nodes, texts, "contrastive_loss");
  const std::size_t b = nodes.rows();
  if (b == 0) throw std::invalid_argument("contrastive_loss: empty batch");
  if (!include_positive && b < 2) {
    throw std::invalid_argument("contrastive_loss: batch of 1 leaves the j != i denominator empty");
  }
  const Matrix<T> sim = matmul_nt(nodes, texts);
  Matrix<T> dsim(b, b);
  LossResult<T> out;
  std::vector<T> z, w;
  const T inv_b = T(1) / T(b);
  for (std::size_t i = 0; i < b; ++i) {
    z.clear();
    std::vector<std::size_t> cols;
    for (std::size_t j = 0; j < b; ++j) {
      if (j == i && !include_positive) continue;
      z.push_back(sim(i, j) / tau);
      cols.push_back(j);
    }
    const T lse = log_sum_exp(z, w);
    out.value += (lse - sim(i, i) / tau) * inv_b;
    for (std::size_t p = 0; p < cols.size(); ++p) dsim(i, cols[p]) += w[p] * inv_b;
    dsim(i, i) -= inv_b;
  }
  // dz = dsim (before the 1/tau factor): dL/dtau = sum dz * (-sim / tau^2).
  for (std::size_t i = 0; i < b * b; ++i) out.grad_tau -= dsim.data()[i] * sim.data()[i] / (tau * tau);
  for (auto& v : dsim.storage()) v /= tau;
  out.grad_first = matmul(dsim, texts);
  out.grad_second = Matrix<T>(b, texts.cols());
  kernels::active<T>().gemm_tn(b, nodes.cols(), b, dsim.data(), b, nodes.data(), nodes.cols(),
                               out.grad_second.data(), nodes.cols());
  return out;
}

template <class T>
LossResult<T> psm_loss(const Matrix<T>& nodes, const std::vector<Matrix<T>>& retrieved,
                       const Matrix<T>& texts, T tau, bool include_positive) {
  require_same(nodes, texts, "psm_loss");
  const std::size_t b = nodes.rows(), d = nodes.cols();
  if (retrieved.size() != b) throw std::invalid_argument("psm_loss: one retrieval list per node required");
  LossResult<T> out;
  out.grad_first = Matrix<T>(b, d);
  out.grad_second = Matrix<T>(b, d);
  std::size_t contributing = 0;
  for (const auto& r : retrieved) {
    if (r.rows() == 0) continue;
    if (r.cols() != d) throw std::invalid_argument("psm_loss: retrieved vector dimension mismatch");
    ++contributing;
  }
  if (contributing == 0) return out;
  if (!include_positive && b < 2) {
    throw std::invalid_argument("psm_loss: batch of 1 leaves the j != i denominator empty");
  }
  const auto& kt = kernels::active<T>();
  const T inv_c = T(1) / T(contributing);
  const Matrix<T> sim = matmul_nt(nodes, texts);
  std::vector<T> num, wnum, den, wden;
  for (std::size_t i = 0; i < b; ++i) {
    const auto& r = retrieved[i];
    const std::size_t k = r.rows();
    if (k == 0) continue;
    const T* ni = nodes.data() + i * d;
    num.assign(k, T(0));
    for (std::size_t q = 0; q < k; ++q) num[q] = kt.dot(ni, r.data() + q * d, d) / tau;
    den.clear();
    std::vector<std::size_t> cols;
    for (std::size_t j = 0; j < b; ++j) {
      if (j == i && !include_positive) continue;
      den.push_back(sim(i, j) / tau);
      cols.push_back(j);
    }
    const std::size_t batch_terms = den.size();
    if (include_positive) den.insert(den.end(), num.begin(), num.end());
    const T lse_num = log_sum_exp(num, wnum);
    const T lse_den = log_sum_exp(den, wden);
    out.value += (lse_den - lse_num) * inv_c;

    // Gradients w.r.t. logits, then through logit = sim / tau.
    T* gni = out.grad_first.data() + i * d;
    for (std::size_t q = 0; q < k; ++q) {
      T g = -wnum[q];
      if (include_positive) g += wden[batch_terms + q];
      g *= inv_c;
      out.grad_tau -= g * num[q] / tau;
      kt.axpy(g / tau, r.data() + q * d, gni, d);
    }
    for (std::size_t p = 0; p < batch_terms; ++p) {
      const T g = wden[p] * inv_c;
      out.grad_tau -= g * den[p] / tau;
      const std::size_t j = cols[p];
      kt.axpy(g / tau, texts.data() + j * d, gni, d);
      kt.axpy(g / tau, ni, out.grad_second.data() + j * d, d);
    }
  }
  return out;
}

template <class T>
LossResult<T> margin_loss(const Matrix<T>& nodes, const Matrix<T>& neg_texts, T margin) {
  require_same(nodes, neg_texts, "margin_loss");
  const std::size_t b = nodes.rows(), d = nodes.cols();
  if (b < 2) throw std::invalid_argument("margin_loss: batch must have >= 2 rows");
  const Matrix<T> sim = matmul_nt(nodes, neg_texts);
  LossResult<T> out;
  out.grad_first = Matrix<T>(b, d);
  out.grad_second = Matrix<T>(b, d);
  const T inv_pairs = T(1) / T(b * (b - 1));
  const auto& kt = kernels::active<T>();
  for (std::size_t i = 0; i < b; ++i) {
    const T* ni = nodes.data() + i * d;
    T* gni = out.grad_first.data() + i * d;
    for (std::size_t j = 0; j < b; ++j) {
      if (j == i) continue;
      const T term = margin + sim(i, i) - sim(i, j);
      if (!(term > T(0))) continue;
      out.value += term * inv_pairs;
      kt.axpy(inv_pairs, neg_texts.data() + i * d, gni, d);
      kt.axpy(-inv_pairs, neg_texts.data() + j * d, gni, d);
      kt.axpy(inv_pairs, ni, out.grad_second.data() + i * d, d);
      kt.axpy(-inv_pairs, ni, out.grad_second.data() + j * d, d);
    }
  }
  return out;
}

template <class T>
LossResult<T> semantics_opposite_loss(const Matrix<T>& texts, const Matrix<T>& neg_texts) {
  require_same(texts, neg_texts, "semantics_opposite_loss");
  const std::size_t b = texts.rows(), d = texts.cols();
  if (b == 0) throw std::invalid_argument("semantics_opposite_loss: empty batch");
  LossResult<T> out;
  out.grad_first = Matrix<T>(b, d);
  out.grad_second = Matrix<T>(b, d);
  const T inv_b = T(1) / T(b);
  for (std::size_t i = 0; i < b; ++i) {
    T dist2 = 0;
    for (std::size_t c = 0; c < d; ++c) {
      const T diff = texts(i, c) - neg_texts(i, c);
      dist2 += diff * diff;
    }
    const T dist = std::sqrt(dist2);
    out.value -= dist * inv_b;
    if (dist == T(0)) continue;
    for (std::size_t c = 0; c < d; ++c) {
      const T g = -inv_b * (texts(i, c) - neg_texts(i, c)) / dist;
      out.grad_first(i, c) = g;
      out.grad_second(i, c) = -g;
    }
  }
  return out;
}

template <class T>
TotalLossResult<T> total_loss(const BatchArtifacts<T>& batch, const LossConfig& cfg,
                              GradientRouting routing) {
  cfg.validate();
  if (!batch.nodes || !batch.texts || !batch.retrieved) {
    throw std::invalid_argument("total_loss: nodes, texts and retrieval lists are required");
  }
  const T tau = static_cast<T>(cfg.tau);
  const bool include = cfg.include_positive_in_denominator;
  TotalLossResult<T> out;
  const auto cl = contrastive_loss(*batch.nodes, *batch.texts, tau, include);
  const auto psm = psm_loss(*batch.nodes, *batch.retrieved, *batch.texts, tau, include);
  out.grad_nodes = cl.grad_first;
  out.grad_texts = cl.grad_second;
  kernels::axpy(T(1), psm.grad_first.data(), out.grad_nodes.data(), out.grad_nodes.size());
  if (routing == GradientRouting::kFull) {
    kernels::axpy(T(1), psm.grad_second.data(), out.grad_texts.data(), out.grad_texts.size());
  }
  out.grad_tau = cl.grad_tau + psm.grad_tau;
  out.breakdown.contrastive = static_cast<double>(cl.value);
  out.breakdown.psm = static_cast<double>(psm.value);
  out.value = cl.value + psm.value;

  if (cfg.alpha > 0) {
    if (!batch.neg_texts) throw std::invalid_argument("total_loss: alpha > 0 requires negative texts");
    const T alpha = static_cast<T>(cfg.alpha);
    const auto ml = margin_loss(*batch.nodes, *batch.neg_texts, static_cast<T>(cfg.margin));
    const auto so = semantics_opposite_loss(*batch.texts, *batch.neg_texts);
    out.grad_neg_texts = Matrix<T>(batch.neg_texts->rows(), batch.neg_texts->cols());
    kernels::axpy(alpha, ml.grad_second.data(), out.grad_neg_texts.data(), out.grad_neg_texts.size());
    kernels::axpy(alpha, so.grad_second.data(), out.grad_neg_texts.data(), out.grad_neg_texts.size());
    if (routing == GradientRouting::kFull) {
      kernels::axpy(alpha, ml.grad_first.data(), out.grad_nodes.data(), out.grad_nodes.size());
      kernels::axpy(alpha, so.grad_first.data(), out.grad_texts.data(), out.grad_texts.size());
    }
    out.breakdown.margin = static_cast<double>(ml.value);
    out.breakdown.opposite = static_cast<double>(so.value);
    out.value += alpha * (ml.value + so.value);
  }
  out.breakdown.total = static_cast<double>(out.value);
  return out;
}

#define TSA_INSTANTIATE(T)                                                                    \
  template LossResult<T> contrastive_loss<T>(const Matrix<T>&, const Matrix<T>&, T, bool);    \
  template LossResult<T> psm_loss<T>(const Matrix<T>&, const std::vector<Matrix<T>>&,         \
                                     const Matrix<T>&, T, bool);                              \
  template LossResult<T> margin_loss<T>(const Matrix<T>&, const Matrix<T>&, T);               \
  template LossResult<T> semantics_opposite_loss<T>(const Matrix<T>&, const Matrix<T>&);      \
  template TotalLossResult<T> total_loss<T>(const BatchArtifacts<T>&, const LossConfig&,      \
                                            GradientRouting);

TSA_INSTANTIATE(float)
TSA_INSTANTIATE(double)

#undef TSA_INSTANTIATE

}  // namespace tsa
