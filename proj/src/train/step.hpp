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

#include <functional>
#include <vector>

#include "tsa/model.hpp"
#include "tsa/objectives.hpp"

namespace tsa::detail {

template <class T>
using Retriever = std::function<std::vector<Matrix<T>>(const std::vector<NodeId>& batch, const Matrix<T>& texts)>;

template <class T>
struct Step {
  TotalLossResult<T> loss;
  Matrix<T> texts;
  ag::Var<T> root;
};

// Records one objective evaluation on `tape`: node, text and (when
// use_negative) negative-text forwards, retrieval, and the closed-form loss
// as a scalar node whose backward reaches every trainable parameter.
template <class T>
Step<T> build_step(ag::Tape<T>& tape, Model<T>& model, const GraphInputs<T>& inputs,
                   const std::vector<TokenSeq>& sequences, const std::vector<NodeId>& batch,
                   const Retriever<T>& retrieve, LossConfig lc, bool use_negative, bool learn_tau,
                   GradientRouting routing) {
  std::vector<TokenSeq> seqs;
  seqs.reserve(batch.size());
  for (NodeId id : batch) seqs.push_back(sequences[id]);
  const auto nodes = model.graph.forward(tape, inputs, batch, true);
  const auto texts = model.text.forward(tape, seqs, nullptr, true);
  std::vector<ag::Var<T>> ins{nodes, texts};
  std::optional<ag::Var<T>> neg;
  if (use_negative) {
    neg = model.negative.forward(tape, seqs, true);
    ins.push_back(*neg);
  } else {
    lc.alpha = 0;
  }
  const auto retrieved = retrieve(batch, texts.value());
  BatchArtifacts<T> art;
  art.nodes = &nodes.value();
  art.texts = &texts.value();
  art.neg_texts = neg ? &neg->value() : nullptr;
  art.retrieved = &retrieved;
  Step<T> out;
  out.loss = total_loss(art, lc, routing);
  std::vector<Matrix<T>> grads{out.loss.grad_nodes, out.loss.grad_texts};
  if (neg) grads.push_back(out.loss.grad_neg_texts);
  if (learn_tau) {
    ins.push_back(tape.parameter(model.log_tau, true));
    grads.emplace_back(1, 1, out.loss.grad_tau * static_cast<T>(lc.tau));
  }
  out.root = ag::scalar_with_gradients<T>(ins, out.loss.value, std::move(grads));
  out.texts = texts.value();
  return out;
}

}  // namespace tsa::detail
