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

#include "tsa/prompting.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "tsa/objectives.hpp"

namespace tsa {

void validate_template(std::string_view templ) {
  const auto first = templ.find(kClassPlaceholder);
  if (first == std::string_view::npos) {
    throw std::invalid_argument("template must contain the placeholder [class]");
  }
  if (templ.find(kClassPlaceholder, first + 1) != std::string_view::npos) {
    throw std::invalid_argument("template must contain exactly one [class] placeholder");
  }
}

std::string instantiate_template(std::string_view templ, std::string_view class_name) {
  validate_template(templ);
  const auto at = templ.find(kClassPlaceholder);
  std::string out(templ.substr(0, at));
  out += class_name;
  out += templ.substr(at + kClassPlaceholder.size());
  return out;
}

template <class T>
PromptState<T>::PromptState(std::string t, std::size_t prompt_len, std::size_t token_dim,
                            T init_std, std::uint64_t seed)
    : templ(std::move(t)) {
  validate_template(templ);
  std::mt19937_64 rng(seed);
  std::normal_distribution<T> dist(T(0), init_std);
  Matrix<T> m(prompt_len, token_dim);
  for (auto& v : m.storage()) v = dist(rng);
  continuous = Parameter<T>("prompt.continuous", std::move(m));
}

std::vector<TokenSeq> class_description_tokens(const std::vector<std::string>& class_names,
                                               std::string_view templ,
                                               const Tokenizer& tokenizer) {
  std::vector<TokenSeq> out;
  out.reserve(class_names.size());
  for (const auto& name : class_names) out.push_back(tokenizer.encode(instantiate_template(templ, name)));
  return out;
}

template <class T>
Matrix<T> build_zero_shot_class_embeddings(const std::vector<std::string>& class_names,
                                           std::string_view templ, const Tokenizer& tokenizer,
                                           TextEncoder<T>& encoder) {
  if (class_names.size() < 2) throw std::invalid_argument("class embeddings: need C >= 2 classes");
  return encoder.encode(class_description_tokens(class_names, templ, tokenizer));
}

template <class T>
Matrix<T> build_few_shot_class_embeddings(const std::vector<std::string>& class_names,
                                          const PromptState<T>& prompt, const Tokenizer& tokenizer,
                                          TextEncoder<T>& encoder) {
  if (prompt.length() == 0) {
    return build_zero_shot_class_embeddings(class_names, prompt.templ, tokenizer, encoder);
  }
  if (class_names.size() < 2) throw std::invalid_argument("class embeddings: need C >= 2 classes");
  return encoder.encode(class_description_tokens(class_names, prompt.templ, tokenizer),
                        &prompt.continuous, Overflow::kError);
}

template <class T>
Matrix<T> build_negative_class_embeddings(const std::vector<std::string>& class_names,
                                          std::string_view templ, const Tokenizer& tokenizer,
                                          NegativeTextEncoder<T>& encoder) {
  if (class_names.size() < 2) throw std::invalid_argument("class embeddings: need C >= 2 classes");
  return encoder.encode(class_description_tokens(class_names, templ, tokenizer));
}

template <class T>
std::vector<T> class_probabilities(std::span<const T> node, const Matrix<T>& class_embs, T tau) {
  const std::size_t c = class_embs.rows();
  if (c < 2) throw std::invalid_argument("class_probabilities: need C >= 2 classes");
  if (node.size() != class_embs.cols()) throw std::invalid_argument("class_probabilities: dimension mismatch");
  std::vector<T> z(c);
  T mx = -std::numeric_limits<T>::infinity();
  for (std::size_t k = 0; k < c; ++k) {
    z[k] = kernels::dot(node.data(), class_embs.data() + k * class_embs.cols(), node.size()) / tau;
    mx = std::max(mx, z[k]);
  }
  T sum = 0;
  for (auto& v : z) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (auto& v : z) v /= sum;
  return z;
}

template <class T>
std::size_t argmax_lowest(std::span<const T> v) {
  if (v.empty()) throw std::invalid_argument("argmax of empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

template <class T>
Prediction<T> probability_average(std::span<const T> p, std::span<const T> p_neg) {
  if (p.size() != p_neg.size()) throw std::invalid_argument("probability_average: p / p_neg shape mismatch");
  Prediction<T> out;
  out.scores.resize(p.size());
  for (std::size_t c = 0; c < p.size(); ++c) out.scores[c] = (p[c] + T(1) - p_neg[c]) / T(2);
  out.label = argmax_lowest<T>(out.scores);
  return out;
}

template <class T>
Prediction<T> probability_average_predict(std::span<const T> node, const Matrix<T>& pos_class_embs,
                                          const Matrix<T>& neg_class_embs, T tau) {
  if (!pos_class_embs.same_shape(neg_class_embs)) {
    throw std::invalid_argument("probability_average_predict: class embedding shape mismatch");
  }
  const auto p = class_probabilities(node, pos_class_embs, tau);
  const auto pn = class_probabilities(node, neg_class_embs, tau);
  return probability_average<T>(p, pn);
}

template <class T>
ClassLoss<T> class_cross_entropy(const Matrix<T>& nodes, const std::vector<std::size_t>& labels,
                                 const Matrix<T>& class_embs, T tau) {
  if (nodes.rows() != labels.size()) throw std::invalid_argument("class_cross_entropy: label count mismatch");
  if (nodes.rows() == 0) throw std::invalid_argument("class_cross_entropy: empty batch");
  ClassLoss<T> out;
  out.grad_class_embs = Matrix<T>(class_embs.rows(), class_embs.cols());
  const T inv_n = T(1) / T(nodes.rows());
  for (std::size_t i = 0; i < nodes.rows(); ++i) {
    if (labels[i] >= class_embs.rows()) throw std::out_of_range("class_cross_entropy: label");
    const auto p = class_probabilities<T>(nodes.row(i), class_embs, tau);
    out.value -= std::log(p[labels[i]]) * inv_n;
    for (std::size_t c = 0; c < p.size(); ++c) {
      const T g = (p[c] - (c == labels[i] ? T(1) : T(0))) * inv_n / tau;
      kernels::axpy(g, nodes.data() + i * nodes.cols(), out.grad_class_embs.data() + c * class_embs.cols(),
                    class_embs.cols());
    }
  }
  return out;
}

template <class T>
PromptTuneTrace prompt_tune(const Episode& episode, const Matrix<T>& node_embs,
                            const std::vector<std::string>& class_names, PromptState<T>& prompt,
                            const Tokenizer& tokenizer, TextEncoder<T>& encoder, T tau,
                            const PromptTuneConfig& cfg) {
  if (episode.support.empty()) throw std::invalid_argument("prompt_tune: empty support set");
  if (class_names.size() != episode.ways()) throw std::invalid_argument("prompt_tune: one class name per way required");
  if (prompt.length() == 0) throw std::invalid_argument("prompt_tune: prompt has no learnable vectors");
  Matrix<T> support(episode.support.size(), node_embs.cols());
  std::vector<std::size_t> labels;
  for (std::size_t i = 0; i < episode.support.size(); ++i) {
    const auto& s = episode.support[i];
    std::copy(node_embs.row(s.node).begin(), node_embs.row(s.node).end(), support.row(i).begin());
    labels.push_back(s.way);
  }
  const auto descriptions = class_description_tokens(class_names, prompt.templ, tokenizer);
  Adam<T> opt({&prompt.continuous}, cfg.adam);
  PromptTuneTrace trace;
  for (std::size_t step = 0; step <= cfg.steps; ++step) {
    ag::Tape<T> tape;
    const auto pv = tape.parameter(prompt.continuous, true);
    const auto g = encoder.forward(tape, descriptions, &pv, /*trainable=*/false, Overflow::kError);
    auto ce = class_cross_entropy(support, labels, g.value(), tau);
    trace.support_loss.push_back(static_cast<double>(ce.value));
    if (step == cfg.steps) break;
    const ag::Var<T> ins[] = {g};
    std::vector<Matrix<T>> grads;
    grads.push_back(std::move(ce.grad_class_embs));
    const auto loss = ag::scalar_with_gradients<T>(ins, ce.value, std::move(grads));
    opt.zero_grad();
    tape.backward(loss);
    opt.step();
  }
  return trace;
}

#define TSA_INSTANTIATE(T)                                                                       \
  template struct PromptState<T>;                                                                \
  template Matrix<T> build_zero_shot_class_embeddings<T>(const std::vector<std::string>&,        \
                                                         std::string_view, const Tokenizer&,     \
                                                         TextEncoder<T>&);                       \
  template Matrix<T> build_few_shot_class_embeddings<T>(const std::vector<std::string>&,         \
                                                        const PromptState<T>&, const Tokenizer&, \
                                                        TextEncoder<T>&);                        \
  template Matrix<T> build_negative_class_embeddings<T>(const std::vector<std::string>&,         \
                                                        std::string_view, const Tokenizer&,      \
                                                        NegativeTextEncoder<T>&);                \
  template std::vector<T> class_probabilities<T>(std::span<const T>, const Matrix<T>&, T);       \
  template std::size_t argmax_lowest<T>(std::span<const T>);                                     \
  template Prediction<T> probability_average<T>(std::span<const T>, std::span<const T>);         \
  template Prediction<T> probability_average_predict<T>(std::span<const T>, const Matrix<T>&,    \
                                                        const Matrix<T>&, T);                    \
  template ClassLoss<T> class_cross_entropy<T>(const Matrix<T>&, const std::vector<std::size_t>&, \
                                               const Matrix<T>&, T);                             \
  template PromptTuneTrace prompt_tune<T>(const Episode&, const Matrix<T>&,                      \
                                          const std::vector<std::string>&, PromptState<T>&,      \
                                          const Tokenizer&, TextEncoder<T>&, T,                  \
                                          const PromptTuneConfig&);

TSA_INSTANTIATE(float)
TSA_INSTANTIATE(double)

#undef TSA_INSTANTIATE

}  // namespace tsa
