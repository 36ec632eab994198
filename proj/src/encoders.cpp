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

#include "tsa/encoders.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tsa {
namespace {

template <class T>
Parameter<T> normal_param(std::string name, std::size_t rows, std::size_t cols, T stddev,
                          std::mt19937_64& rng) {
  std::normal_distribution<T> dist(T(0), stddev);
  Matrix<T> m(rows, cols);
  for (auto& v : m.storage()) v = dist(rng);
  return {std::move(name), std::move(m)};
}

template <class T>
Parameter<T> const_param(std::string name, std::size_t rows, std::size_t cols, T value) {
  return {std::move(name), Matrix<T>(rows, cols, value)};
}

template <class T>
Parameter<T> linear_weight(std::string name, std::size_t fan_in, std::size_t fan_out,
                           std::mt19937_64& rng) {
  return normal_param<T>(std::move(name), fan_in, fan_out,
                         T(1) / std::sqrt(static_cast<T>(fan_in)), rng);
}

template <class T>
ag::Var<T> linear(ag::Tape<T>& tape, ag::Var<T> x, Parameter<T>& w, Parameter<T>& b,
                  bool trainable) {
  return ag::add_row_bias(ag::matmul(x, tape.parameter(w, trainable)),
                          tape.parameter(b, trainable));
}

}  // namespace

template <class T>
Csr<T> bag_of_words(std::span<const TokenSeq> sequences, std::size_t vocab_size) {
  Csr<T> x;
  x.rows = sequences.size();
  x.cols = vocab_size;
  for (const auto& seq : sequences) {
    std::vector<int> ids;
    for (int t : seq)
      if (t != Tokenizer::kPad) ids.push_back(t);
    std::sort(ids.begin(), ids.end());
    std::vector<std::pair<std::size_t, T>> counts;
    for (int t : ids) {
      if (static_cast<std::size_t>(t) >= vocab_size) throw std::out_of_range("bag_of_words: token id");
      if (!counts.empty() && counts.back().first == static_cast<std::size_t>(t)) {
        counts.back().second += T(1);
      } else {
        counts.emplace_back(static_cast<std::size_t>(t), T(1));
      }
    }
    T norm = 0;
    for (const auto& [c, v] : counts) norm += v * v;
    norm = std::sqrt(norm);
    for (const auto& [c, v] : counts) {
      x.indices.push_back(c);
      x.values.push_back(v / norm);
    }
    x.indptr.push_back(x.indices.size());
  }
  return x;
}

template <class T>
GraphInputs<T> make_graph_inputs(const TextAttributedGraph& graph, const Tokenizer& tokenizer) {
  std::vector<TokenSeq> seqs;
  seqs.reserve(graph.num_nodes());
  for (const auto& text : graph.texts) seqs.push_back(tokenizer.encode(text));
  return {normalize_adjacency<T>(graph), bag_of_words<T>(seqs, tokenizer.size())};
}

template <class T>
std::vector<T> normalize_embedding(std::span<const T> v) {
  const T n = row_norm<T>(v);
  if (!(n > T(1e-12))) throw std::domain_error("normalize_embedding: near-zero vector");
  std::vector<T> out(v.begin(), v.end());
  for (auto& x : out) x /= n;
  return out;
}

// ---- GraphEncoder ------------------------------------------------------------

template <class T>
GraphEncoder<T>::GraphEncoder(const EncoderShape& shape, std::size_t input_dim,
                              std::mt19937_64& rng)
    : input_dim_(input_dim) {
  std::size_t in = input_dim;
  for (std::size_t l = 0; l < shape.gcn_layers; ++l) {
    const std::string p = "graph.layer" + std::to_string(l);
    weights_.push_back(linear_weight<T>(p + ".weight", in, shape.gcn_hidden, rng));
    biases_.push_back(const_param<T>(p + ".bias", 1, shape.gcn_hidden, T(0)));
    in = shape.gcn_hidden;
  }
  proj_ = linear_weight<T>("graph.proj.weight", in, shape.embed_dim, rng);
  proj_bias_ = const_param<T>("graph.proj.bias", 1, shape.embed_dim, T(0));
}

template <class T>
ag::Var<T> GraphEncoder<T>::forward(ag::Tape<T>& tape, const GraphInputs<T>& in,
                                    const std::vector<NodeId>& rows, bool trainable) {
  if (in.features.cols != input_dim_) {
    throw std::invalid_argument("graph encoder: feature dimension " +
                                std::to_string(in.features.cols) + " != " +
                                std::to_string(input_dim_));
  }
  if (in.adjacency.rows != in.features.rows || in.adjacency.cols != in.features.rows) {
    throw std::invalid_argument("graph encoder: adjacency/feature node count mismatch");
  }
  ag::Var<T> h;
  if (weights_.empty()) {
    h = ag::spmm(in.features, tape.parameter(proj_, trainable));
    if (!rows.empty()) h = ag::gather_rows(h, rows);
    h = ag::add_row_bias(h, tape.parameter(proj_bias_, trainable));
    return ag::l2_normalize_rows(h);
  }
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    auto w = tape.parameter(weights_[l], trainable);
    h = l == 0 ? ag::spmm(in.features, w) : ag::matmul(h, w);
    h = ag::add_row_bias(ag::spmm(in.adjacency, h), tape.parameter(biases_[l], trainable));
    if (l + 1 < weights_.size()) h = ag::relu(h);
  }
  if (!rows.empty()) h = ag::gather_rows(h, rows);
  return ag::l2_normalize_rows(linear(tape, h, proj_, proj_bias_, trainable));
}

template <class T>
Matrix<T> GraphEncoder<T>::encode(const GraphInputs<T>& in, const std::vector<NodeId>& rows) {
  ag::Tape<T> tape;
  return forward(tape, in, rows, false).value();
}

template <class T>
ParameterRefs<T> GraphEncoder<T>::parameters() {
  ParameterRefs<T> out;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.push_back(&weights_[l]);
    out.push_back(&biases_[l]);
  }
  out.push_back(&proj_);
  out.push_back(&proj_bias_);
  return out;
}

// ---- TextEncoder -------------------------------------------------------------

template <class T>
TextEncoder<T>::TextEncoder(const EncoderShape& shape, std::size_t vocab_size,
                            std::mt19937_64& rng, const std::string& prefix)
    : shape_(shape), prefix_(prefix) {
  if (shape.heads == 0 || shape.token_dim % shape.heads != 0) {
    throw std::invalid_argument("text encoder: token_dim must be divisible by heads");
  }
  const std::size_t dt = shape.token_dim;
  const std::size_t ff = shape.ffn_mult * dt;
  token_embedding_ = normal_param<T>(prefix + ".token_embedding", vocab_size, dt, T(0.02), rng);
  positions_ = normal_param<T>(prefix + ".positions", shape.max_seq_len, dt, T(0.01), rng);
  for (std::size_t b = 0; b < shape.blocks; ++b) {
    const std::string p = prefix + ".block" + std::to_string(b);
    TransformerBlock<T> blk;
    blk.ln1_gamma = const_param<T>(p + ".ln1.gamma", 1, dt, T(1));
    blk.ln1_beta = const_param<T>(p + ".ln1.beta", 1, dt, T(0));
    blk.wq = linear_weight<T>(p + ".attn.wq", dt, dt, rng);
    blk.bq = const_param<T>(p + ".attn.bq", 1, dt, T(0));
    blk.wk = linear_weight<T>(p + ".attn.wk", dt, dt, rng);
    blk.bk = const_param<T>(p + ".attn.bk", 1, dt, T(0));
    blk.wv = linear_weight<T>(p + ".attn.wv", dt, dt, rng);
    blk.bv = const_param<T>(p + ".attn.bv", 1, dt, T(0));
    blk.wo = linear_weight<T>(p + ".attn.wo", dt, dt, rng);
    blk.bo = const_param<T>(p + ".attn.bo", 1, dt, T(0));
    blk.ln2_gamma = const_param<T>(p + ".ln2.gamma", 1, dt, T(1));
    blk.ln2_beta = const_param<T>(p + ".ln2.beta", 1, dt, T(0));
    blk.w1 = linear_weight<T>(p + ".ffn.w1", dt, ff, rng);
    blk.b1 = const_param<T>(p + ".ffn.b1", 1, ff, T(0));
    blk.w2 = linear_weight<T>(p + ".ffn.w2", ff, dt, rng);
    blk.b2 = const_param<T>(p + ".ffn.b2", 1, dt, T(0));
    blocks_.push_back(std::move(blk));
  }
  ln_final_gamma_ = const_param<T>(prefix + ".ln_final.gamma", 1, dt, T(1));
  ln_final_beta_ = const_param<T>(prefix + ".ln_final.beta", 1, dt, T(0));
  proj_ = linear_weight<T>(prefix + ".proj", dt, shape.embed_dim, rng);
}

template <class T>
TextEncoder<T>::TextEncoder(const TextEncoder& o)
    : shape_(o.shape_),
      prefix_(o.prefix_),
      token_embedding_(o.token_embedding_),
      positions_(o.positions_),
      blocks_(o.blocks_),
      ln_final_gamma_(o.ln_final_gamma_),
      ln_final_beta_(o.ln_final_beta_),
      proj_(o.proj_) {}

template <class T>
TextEncoder<T>& TextEncoder<T>::operator=(const TextEncoder& o) {
  if (this == &o) return *this;
  shape_ = o.shape_;
  prefix_ = o.prefix_;
  token_embedding_ = o.token_embedding_;
  positions_ = o.positions_;
  blocks_ = o.blocks_;
  ln_final_gamma_ = o.ln_final_gamma_;
  ln_final_beta_ = o.ln_final_beta_;
  proj_ = o.proj_;
  forward_calls_ = 0;
  return *this;
}

template <class T>
void TextEncoder<T>::set_prefix(const std::string& prefix) {
  for (auto* p : parameters()) {
    if (p->name.rfind(prefix_ + ".", 0) == 0) p->name = prefix + p->name.substr(prefix_.size());
  }
  prefix_ = prefix;
}

template <class T>
ag::Var<T> TextEncoder<T>::forward(ag::Tape<T>& tape, const std::vector<TokenSeq>& batch,
                                   const ag::Var<T>* prompt, bool trainable, Overflow overflow) {
  if (batch.empty()) throw std::invalid_argument("text encoder: empty batch");
  ++forward_calls_;
  const std::size_t s = shape_.max_seq_len;
  const std::size_t m = prompt ? prompt->rows() : 0;
  if (m >= s) throw std::invalid_argument("text encoder: prompt fills the whole sequence");

  std::vector<TokenSeq> trimmed;
  trimmed.reserve(batch.size());
  std::vector<std::size_t> lens;
  std::size_t packed = 0;
  for (const auto& seq : batch) {
    if (seq.size() > s) {
      throw std::invalid_argument("text encoder: sequence of length " +
                                  std::to_string(seq.size()) + " exceeds max_seq_len " +
                                  std::to_string(s));
    }
    // Valid prefix ends at the first EOS; anything after it is padding.
    auto eos = std::find(seq.begin(), seq.end(), Tokenizer::kEos);
    TokenSeq t;
    if (eos != seq.end()) {
      t.assign(seq.begin(), eos + 1);
    } else {
      auto last = seq.end();
      while (last != seq.begin() && *(last - 1) == Tokenizer::kPad) --last;
      t.assign(seq.begin(), last);
    }
    if (t.empty()) throw std::invalid_argument("text encoder: empty token sequence");
    if (m + t.size() > s) {
      if (overflow == Overflow::kError) {
        throw std::invalid_argument("text encoder: prompt + text length " +
                                    std::to_string(m + t.size()) + " exceeds max_seq_len " +
                                    std::to_string(s));
      }
      const int tail = t.back();
      t.resize(s - m);
      t.back() = tail;
    }
    lens.push_back(m + t.size());
    packed = std::max(packed, m + t.size());
    trimmed.push_back(std::move(t));
  }

  auto x = ag::embed_sequences(tape.parameter(token_embedding_, trainable), prompt,
                               tape.parameter(positions_, trainable), trimmed, packed);
  for (auto& blk : blocks_) {
    auto h = ag::layer_norm(x, tape.parameter(blk.ln1_gamma, trainable),
                            tape.parameter(blk.ln1_beta, trainable));
    auto q = linear(tape, h, blk.wq, blk.bq, trainable);
    auto k = linear(tape, h, blk.wk, blk.bk, trainable);
    auto v = linear(tape, h, blk.wv, blk.bv, trainable);
    auto a = ag::masked_self_attention(q, k, v, packed, lens, shape_.heads);
    x = ag::add(x, linear(tape, a, blk.wo, blk.bo, trainable));
    auto h2 = ag::layer_norm(x, tape.parameter(blk.ln2_gamma, trainable),
                             tape.parameter(blk.ln2_beta, trainable));
    auto f = ag::gelu(linear(tape, h2, blk.w1, blk.b1, trainable));
    x = ag::add(x, linear(tape, f, blk.w2, blk.b2, trainable));
  }

  ag::Var<T> pooled;
  if (shape_.pooling == Pooling::kEos) {
    std::vector<std::size_t> rows(lens.size());
    for (std::size_t b = 0; b < lens.size(); ++b) rows[b] = b * packed + lens[b] - 1;
    pooled = ag::gather_rows(x, std::move(rows));
  } else {
    std::vector<std::size_t> starts(lens.size());
    for (std::size_t b = 0; b < lens.size(); ++b) starts[b] = b * packed;
    pooled = ag::segment_mean(x, std::move(starts), lens);
  }
  pooled = ag::layer_norm(pooled, tape.parameter(ln_final_gamma_, trainable),
                          tape.parameter(ln_final_beta_, trainable));
  return ag::l2_normalize_rows(ag::matmul(pooled, tape.parameter(proj_, trainable)));
}

template <class T>
Matrix<T> TextEncoder<T>::encode(const std::vector<TokenSeq>& batch, const Parameter<T>* prompt,
                                 Overflow overflow) {
  ag::Tape<T> tape;
  if (prompt == nullptr) return forward(tape, batch, nullptr, false, overflow).value();
  const auto pv = tape.constant(prompt->value);
  return forward(tape, batch, &pv, false, overflow).value();
}

template <class T>
ParameterRefs<T> TextEncoder<T>::parameters() {
  ParameterRefs<T> out{&token_embedding_, &positions_};
  for (auto& b : blocks_) {
    for (auto* p : {&b.ln1_gamma, &b.ln1_beta, &b.wq, &b.bq, &b.wk, &b.bk, &b.wv, &b.bv,
                    &b.wo, &b.bo, &b.ln2_gamma, &b.ln2_beta, &b.w1, &b.b1, &b.w2, &b.b2}) {
      out.push_back(p);
    }
  }
  out.push_back(&ln_final_gamma_);
  out.push_back(&ln_final_beta_);
  out.push_back(&proj_);
  return out;
}

// ---- NegativeTextEncoder -----------------------------------------------------

template <class T>
NegativeTextEncoder<T>::NegativeTextEncoder(const TextEncoder<T>& base, std::size_t prompt_len,
                                            T init_std, std::mt19937_64& rng)
    : encoder(base) {
  encoder.set_prefix("neg_text");
  prompt = normal_param<T>("neg_text.prompt", prompt_len, base.shape().token_dim, init_std, rng);
}

template <class T>
ag::Var<T> NegativeTextEncoder<T>::forward(ag::Tape<T>& tape, const std::vector<TokenSeq>& batch,
                                           bool trainable) {
  const auto pv = tape.parameter(prompt, trainable);
  return encoder.forward(tape, batch, &pv, trainable, Overflow::kTruncateText);
}

template <class T>
Matrix<T> NegativeTextEncoder<T>::encode(const std::vector<TokenSeq>& batch) {
  ag::Tape<T> tape;
  return forward(tape, batch, false).value();
}

template <class T>
ParameterRefs<T> NegativeTextEncoder<T>::parameters() {
  auto out = encoder.parameters();
  out.push_back(&prompt);
  return out;
}

template <class T>
void copy_parameter_values(const ParameterRefs<T>& src, const ParameterRefs<T>& dst) {
  if (src.size() != dst.size()) throw std::invalid_argument("copy_parameter_values: count mismatch");
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (!src[i]->value.same_shape(dst[i]->value))
      throw std::invalid_argument("copy_parameter_values: shape mismatch for " + dst[i]->name);
    dst[i]->value = src[i]->value;
  }
}

#define TSA_INSTANTIATE(T)                                                             \
  template Csr<T> bag_of_words<T>(std::span<const TokenSeq>, std::size_t);             \
  template GraphInputs<T> make_graph_inputs<T>(const TextAttributedGraph&, const Tokenizer&); \
  template std::vector<T> normalize_embedding<T>(std::span<const T>);                  \
  template class GraphEncoder<T>;                                                      \
  template class TextEncoder<T>;                                                       \
  template struct NegativeTextEncoder<T>;                                              \
  template void copy_parameter_values<T>(const ParameterRefs<T>&, const ParameterRefs<T>&);

TSA_INSTANTIATE(float)
TSA_INSTANTIATE(double)

#undef TSA_INSTANTIATE

}  // namespace tsa
