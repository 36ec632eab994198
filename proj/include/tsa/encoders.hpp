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

// Graph encoder (GCN), text encoder (pre-LN Transformer) and the negative
// text encoder, all mapping into one shared, unit-norm embedding space.

#include <atomic>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "tsa/autograd.hpp"
#include "tsa/graph.hpp"
#include "tsa/tokenizer.hpp"

namespace tsa {

enum class Pooling { kEos, kMean };

struct EncoderShape {
  std::size_t gcn_layers = 2;
  std::size_t gcn_hidden = 64;
  std::size_t embed_dim = 64;
  std::size_t token_dim = 64;
  std::size_t blocks = 2;
  std::size_t heads = 4;
  std::size_t ffn_mult = 4;
  std::size_t max_seq_len = 128;
  Pooling pooling = Pooling::kEos;
};

// What to do when prompt rows plus tokens exceed max_seq_len.
enum class Overflow { kTruncateText, kError };

// Precomputed graph-side inputs: normalized adjacency and per-node
// bag-of-words features (L2-normalized counts of the tokenized text).
template <class T>
struct GraphInputs {
  Csr<T> adjacency;
  Csr<T> features;
};

template <class T>
Csr<T> bag_of_words(std::span<const TokenSeq> sequences, std::size_t vocab_size);

template <class T>
GraphInputs<T> make_graph_inputs(const TextAttributedGraph& graph, const Tokenizer& tokenizer);

// v / ||v||; throws std::domain_error when ||v|| <= 1e-12.
template <class T>
std::vector<T> normalize_embedding(std::span<const T> v);

template <class T>
class GraphEncoder {
 public:
  GraphEncoder() = default;
  GraphEncoder(const EncoderShape& shape, std::size_t input_dim, std::mt19937_64& rng);

  // Unit-norm embeddings for `rows` (all nodes when empty).
  ag::Var<T> forward(ag::Tape<T>& tape, const GraphInputs<T>& in,
                     const std::vector<NodeId>& rows, bool trainable);
  Matrix<T> encode(const GraphInputs<T>& in, const std::vector<NodeId>& rows = {});

  ParameterRefs<T> parameters();
  std::size_t input_dim() const { return input_dim_; }

 private:
  std::size_t input_dim_ = 0;
  std::vector<Parameter<T>> weights_;
  std::vector<Parameter<T>> biases_;
  Parameter<T> proj_;
  Parameter<T> proj_bias_;
};

template <class T>
struct TransformerBlock {
  Parameter<T> ln1_gamma, ln1_beta;
  Parameter<T> wq, bq, wk, bk, wv, bv, wo, bo;
  Parameter<T> ln2_gamma, ln2_beta;
  Parameter<T> w1, b1, w2, b2;
};

template <class T>
class TextEncoder {
 public:
  TextEncoder() = default;
  TextEncoder(const EncoderShape& shape, std::size_t vocab_size, std::mt19937_64& rng,
              const std::string& prefix = "text");
  TextEncoder(const TextEncoder& other);
  TextEncoder& operator=(const TextEncoder& other);

  // Unit-norm B x embed_dim embeddings. `prompt` (rows x token_dim), when
  // given, is prepended at the embedding level before positions are added.
  // Sequences may carry trailing PAD after EOS; those positions are masked.
  ag::Var<T> forward(ag::Tape<T>& tape, const std::vector<TokenSeq>& batch,
                     const ag::Var<T>* prompt, bool trainable,
                     Overflow overflow = Overflow::kTruncateText);
  Matrix<T> encode(const std::vector<TokenSeq>& batch, const Parameter<T>* prompt = nullptr,
                   Overflow overflow = Overflow::kTruncateText);

  ParameterRefs<T> parameters();
  const EncoderShape& shape() const { return shape_; }
  // Renames every parameter from `<old prefix>.` to `<prefix>.`.
  void set_prefix(const std::string& prefix);

  // Number of forward passes run so far (diagnostics only).
  std::size_t forward_calls() const { return forward_calls_.load(); }

 private:
  EncoderShape shape_;
  std::string prefix_;
  Parameter<T> token_embedding_;
  Parameter<T> positions_;
  std::vector<TransformerBlock<T>> blocks_;
  Parameter<T> ln_final_gamma_, ln_final_beta_;
  Parameter<T> proj_;
  std::atomic<std::size_t> forward_calls_{0};
};

// A text encoder with its own learnable prompt prepended to every input.
template <class T>
struct NegativeTextEncoder {
  TextEncoder<T> encoder;
  Parameter<T> prompt;

  NegativeTextEncoder() = default;
  // Deep copy of `base` plus prompt_len x token_dim prompt ~ N(0, init_std).
  NegativeTextEncoder(const TextEncoder<T>& base, std::size_t prompt_len, T init_std,
                      std::mt19937_64& rng);

  ag::Var<T> forward(ag::Tape<T>& tape, const std::vector<TokenSeq>& batch, bool trainable);
  Matrix<T> encode(const std::vector<TokenSeq>& batch);
  ParameterRefs<T> parameters();
};

// Copies values of `src` into `dst` position by position; shapes must match.
template <class T>
void copy_parameter_values(const ParameterRefs<T>& src, const ParameterRefs<T>& dst);

}  // namespace tsa
