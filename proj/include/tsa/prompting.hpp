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

// Class prompts and the two inference rules: plain similarity softmax and
// probability-average with the negative text encoder.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "tsa/encoders.hpp"
#include "tsa/graph.hpp"
#include "tsa/optim.hpp"

namespace tsa {

inline constexpr std::string_view kClassPlaceholder = "[class]";
inline constexpr std::string_view kDefaultTemplate = "a paper of [class]";

// Replaces the single "[class]" placeholder; throws std::invalid_argument if
// the template has zero or several placeholders.
std::string instantiate_template(std::string_view templ, std::string_view class_name);
void validate_template(std::string_view templ);

template <class T>
struct PromptState {
  std::string templ{kDefaultTemplate};
  // M x token_dim continuous prompt, prepended to every class description.
  Parameter<T> continuous;

  PromptState() = default;
  PromptState(std::string templ, std::size_t prompt_len, std::size_t token_dim, T init_std,
              std::uint64_t seed);
  std::size_t length() const { return continuous.value.rows(); }
};

std::vector<TokenSeq> class_description_tokens(const std::vector<std::string>& class_names,
                                               std::string_view templ,
                                               const Tokenizer& tokenizer);

// g_c = psi(D_c), C x d, unit rows.
template <class T>
Matrix<T> build_zero_shot_class_embeddings(const std::vector<std::string>& class_names,
                                           std::string_view templ, const Tokenizer& tokenizer,
                                           TextEncoder<T>& encoder);

// g_c = psi([e_1..e_M, D_c]); identical to the zero-shot embeddings when M = 0.
// Throws when M + description length exceeds max_seq_len.
template <class T>
Matrix<T> build_few_shot_class_embeddings(const std::vector<std::string>& class_names,
                                          const PromptState<T>& prompt, const Tokenizer& tokenizer,
                                          TextEncoder<T>& encoder);

// Negative class embeddings: the negative encoder applied to the same
// class descriptions.
template <class T>
Matrix<T> build_negative_class_embeddings(const std::vector<std::string>& class_names,
                                          std::string_view templ, const Tokenizer& tokenizer,
                                          NegativeTextEncoder<T>& encoder);

// softmax_c(sim(n, g_c) / tau). Requires C >= 2.
template <class T>
std::vector<T> class_probabilities(std::span<const T> node, const Matrix<T>& class_embs, T tau);

// Index of the maximum; ties resolve to the lowest index.
template <class T>
std::size_t argmax_lowest(std::span<const T> v);

template <class T>
struct Prediction {
  std::size_t label = 0;
  std::vector<T> scores;
};

// score_c = (p_c + 1 - pneg_c) / 2, prediction = argmax_lowest(score).
template <class T>
Prediction<T> probability_average(std::span<const T> p, std::span<const T> p_neg);

template <class T>
Prediction<T> probability_average_predict(std::span<const T> node, const Matrix<T>& pos_class_embs,
                                          const Matrix<T>& neg_class_embs, T tau);

// Mean cross-entropy of softmax(sim(n_i, g_c) / tau) against labels, with its
// gradient w.r.t. the class embeddings.
template <class T>
struct ClassLoss {
  T value = 0;
  Matrix<T> grad_class_embs;
};

template <class T>
ClassLoss<T> class_cross_entropy(const Matrix<T>& nodes, const std::vector<std::size_t>& labels,
                                 const Matrix<T>& class_embs, T tau);

struct PromptTuneConfig {
  std::size_t steps = 50;
  AdamConfig adam{1e-2};
};

struct PromptTuneTrace {
  // Support cross-entropy before each step, plus the value after the last.
  std::vector<double> support_loss;
};

// Tunes prompt.continuous on the support set with every encoder parameter
// frozen. `node_embs` holds unit embeddings of all graph nodes.
template <class T>
PromptTuneTrace prompt_tune(const Episode& episode, const Matrix<T>& node_embs,
                            const std::vector<std::string>& class_names, PromptState<T>& prompt,
                            const Tokenizer& tokenizer, TextEncoder<T>& encoder, T tau,
                            const PromptTuneConfig& cfg);

}  // namespace tsa
