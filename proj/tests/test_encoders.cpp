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

#include <algorithm>
#include <random>

#include "doctest.h"
#include "support.hpp"
#include "tsa/encoders.hpp"
#include "tsa/tokenizer.hpp"

using namespace tsa;

namespace {

EncoderShape micro_shape() {
  EncoderShape s;
  s.gcn_layers = 2;
  s.gcn_hidden = 5;
  s.embed_dim = 4;
  s.token_dim = 4;
  s.blocks = 1;
  s.heads = 2;
  s.ffn_mult = 2;
  s.max_seq_len = 10;
  return s;
}

Parameter<double>& by_name(const ParameterRefs<double>& ps, const std::string& name) {
  for (auto* p : ps)
    if (p->name == name) return *p;
  throw std::runtime_error("no parameter " + name);
}

double projected(const Matrix<double>& out, const Matrix<double>& w) {
  double s = 0;
  for (std::size_t i = 0; i < out.size(); ++i) s += out.data()[i] * w.data()[i];
  return s;
}

// Analytic vs central-difference gradient of <w, forward()> for every entry
// of every parameter.
template <class Forward>
void check_encoder_gradients(const ParameterRefs<double>& params, Forward forward) {
  std::mt19937_64 rng(77);
  Matrix<double> w;
  {
    ag::Tape<double> tape;
    const auto out = forward(tape, false).value();
    w = test::random_matrix<double>(out.rows(), out.cols(), rng);
  }
  for (auto* p : params) p->zero_grad();
  {
    ag::Tape<double> tape;
    auto out = forward(tape, true);
    const std::vector<ag::Var<double>> in{out};
    tape.backward(ag::scalar_with_gradients<double>(in, projected(out.value(), w), {w}));
  }
  for (auto* p : params) {
    CAPTURE(p->name);
    const auto numeric = test::numeric_gradient(p->value, [&] {
      ag::Tape<double> tape;
      return projected(forward(tape, false).value(), w);
    });
    const auto analytic = test::as_vector(p->grad);
    double scale = 0;
    for (double g : numeric) scale = std::max(scale, std::abs(g));
    if (scale < 1e-9) {
      // Parameters the output does not depend on (e.g. unused token rows).
      for (double g : analytic) CHECK(std::abs(g) < 1e-9);
    } else {
      CHECK(test::rel_error(analytic, numeric) < 1e-4);
    }
  }
}

std::vector<TokenSeq> micro_batch() { return {{3, 4, 5, 1}, {6, 1}, {7, 3, 8, 9, 4, 1}, {5, 5, 1}}; }

}  // namespace

TEST_SUITE("encoders") {
  TEST_CASE("tokenizer contracts") {
    const std::vector<std::string> corpus{"Graph nodes graph", "nodes and TEXT", "graph text"};
    const auto tok = Tokenizer::build(corpus, 128, 2);
    CHECK(tok.vocab()[0] == "<pad>");
    CHECK(tok.vocab()[1] == "<eos>");
    CHECK(tok.vocab()[2] == "<unk>");
    // graph (3) > nodes (2) = text (2), ties lexicographic; "and" dropped by min_freq.
    CHECK(std::vector<std::string>(tok.vocab().begin() + 3, tok.vocab().end()) ==
          std::vector<std::string>{"graph", "nodes", "text"});
    CHECK(tok.encode("") == TokenSeq{Tokenizer::kEos});
    CHECK(tok.encode("GRAPH unseen") == TokenSeq{tok.id("graph"), Tokenizer::kUnk, Tokenizer::kEos});
    CHECK(tok.encode("graph text") == tok.encode("graph text"));

    std::string long_text;
    for (int i = 0; i < 200; ++i) long_text += "graph ";
    const auto seq = tok.encode(long_text);
    CHECK(seq.size() == 128);
    CHECK(seq.back() == Tokenizer::kEos);
    CHECK(tok.encode(long_text, 5).size() == 5);

    CHECK_THROWS_AS(Tokenizer::from_vocab({"a", "b"}, 8), std::invalid_argument);
    const auto again = Tokenizer::from_vocab(tok.vocab(), 128);
    CHECK(again.encode("nodes text") == tok.encode("nodes text"));
  }

  TEST_CASE("normalize_embedding") {
    const std::vector<double> v{3, 4};
    const auto u = normalize_embedding<double>(v);
    CHECK(u[0] == doctest::Approx(0.6));
    CHECK(u[1] == doctest::Approx(0.8));
    const auto uu = normalize_embedding<double>(u);
    CHECK(uu[0] == doctest::Approx(u[0]).epsilon(1e-15));
    CHECK(uu[1] == doctest::Approx(u[1]).epsilon(1e-15));
    const std::vector<double> z{0, 0};
    CHECK_THROWS_AS(normalize_embedding<double>(z), std::domain_error);
  }

  TEST_CASE("cosine similarity is invariant to positive rescaling") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> scale(0.1, 10);
    for (int trial = 0; trial < 200; ++trial) {
      const auto m = test::random_matrix<double>(2, 8, rng);
      const auto u = normalize_embedding<double>(m.row(0));
      const auto v = normalize_embedding<double>(m.row(1));
      const double a = scale(rng), b = scale(rng);
      std::vector<double> au(m.row(0).begin(), m.row(0).end()), bv(m.row(1).begin(), m.row(1).end());
      for (auto& x : au) x *= a;
      for (auto& x : bv) x *= b;
      const auto su = normalize_embedding<double>(au), sv = normalize_embedding<double>(bv);
      double s0 = 0, s1 = 0;
      for (std::size_t k = 0; k < 8; ++k) {
        s0 += u[k] * v[k];
        s1 += su[k] * sv[k];
      }
      CHECK(std::abs(s0 - s1) < 1e-14);
    }
  }

  TEST_CASE("graph encoder with zero layers ignores edges") {
    auto g = test::toy_graph();
    const auto tok = Tokenizer::build(g.texts, 16, 1);
    auto shape = micro_shape();
    shape.gcn_layers = 0;
    std::mt19937_64 rng(1);
    GraphEncoder<double> enc(shape, tok.size(), rng);
    const auto with_edges = enc.encode(make_graph_inputs<double>(g, tok));
    g.edges.clear();
    const auto inputs = make_graph_inputs<double>(g, tok);
    const auto without = enc.encode(inputs);
    CHECK(with_edges == without);
    auto ps = enc.parameters();
    auto h = matmul(inputs.features.to_dense(), by_name(ps, "graph.proj.weight").value);
    const auto& bias = by_name(ps, "graph.proj.bias").value;
    for (std::size_t i = 0; i < h.rows(); ++i)
      for (std::size_t j = 0; j < h.cols(); ++j) h(i, j) += bias(0, j);
    CHECK(test::max_abs_diff(test::unit_rows(h), without) < 1e-12);
  }

  TEST_CASE("graph encoder on a single isolated node is an MLP of its features") {
    TextAttributedGraph g;
    g.class_names = {"c"};
    g.node_keys = {"x"};
    g.texts = {"alpha beta beta gamma"};
    g.labels = {0};
    const auto tok = Tokenizer::build(g.texts, 16, 1);
    std::mt19937_64 rng(2);
    GraphEncoder<double> enc(micro_shape(), tok.size(), rng);
    const auto in = make_graph_inputs<double>(g, tok);
    CHECK(in.adjacency.to_dense()(0, 0) == 1.0);
    auto ps = enc.parameters();
    auto affine = [](const Matrix<double>& x, const Parameter<double>& w, const Parameter<double>& b) {
      auto y = matmul(x, w.value);
      for (std::size_t j = 0; j < y.cols(); ++j) y(0, j) += b.value(0, j);
      return y;
    };
    auto h = affine(in.features.to_dense(), by_name(ps, "graph.layer0.weight"), by_name(ps, "graph.layer0.bias"));
    for (auto& x : h.storage()) x = std::max(0.0, x);
    h = affine(h, by_name(ps, "graph.layer1.weight"), by_name(ps, "graph.layer1.bias"));
    h = affine(h, by_name(ps, "graph.proj.weight"), by_name(ps, "graph.proj.bias"));
    CHECK(test::max_abs_diff(test::unit_rows(h), enc.encode(in)) < 1e-12);
  }

  TEST_CASE("bag-of-words features are unit rows and include EOS") {
    const std::vector<TokenSeq> seqs{{3, 3, 4, 1}, {1}};
    const auto x = bag_of_words<double>(seqs, 5).to_dense();
    CHECK(x(0, 3) == doctest::Approx(2 / std::sqrt(6.0)));
    CHECK(x(0, 1) == doctest::Approx(1 / std::sqrt(6.0)));
    CHECK(x(1, 1) == doctest::Approx(1.0));
  }

  TEST_CASE("text encoder determinism, unit norm and batch equivariance") {
    std::mt19937_64 rng(3);
    TextEncoder<double> enc(micro_shape(), 12, rng);
    const std::vector<TokenSeq> batch{{3, 4, 1}, {5, 6, 7, 1}, {3, 4, 1}, {8, 1}};
    const auto out = enc.encode(batch);
    for (std::size_t i = 0; i < out.rows(); ++i) {
      double n = 0;
      for (double x : out.row(i)) n += x * x;
      CHECK(std::abs(std::sqrt(n) - 1) < 1e-6);
    }
    for (std::size_t j = 0; j < out.cols(); ++j) CHECK(out(0, j) == out(2, j));
    const std::vector<TokenSeq> permuted{batch[3], batch[1], batch[0], batch[2]};
    const auto pout = enc.encode(permuted);
    const std::size_t map[] = {3, 1, 0, 2};
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < out.cols(); ++j) CHECK(std::abs(pout(i, j) - out(map[i], j)) < 1e-12);
    CHECK(enc.encode(batch) == out);
  }

  TEST_CASE("padding after EOS never changes the output") {
    std::mt19937_64 rng(4);
    TextEncoder<double> enc(micro_shape(), 12, rng);
    const auto a = enc.encode({{3, 4, 5, 1}, {6, 1}});
    const auto b = enc.encode({{3, 4, 5, 1, 0, 0}, {6, 1, 0, 0, 0, 0, 0}});
    CHECK(test::max_abs_diff(a, b) < 1e-6);
    // Batch-mates of different lengths do not interact either.
    const auto c = enc.encode({{6, 1}});
    for (std::size_t j = 0; j < a.cols(); ++j) CHECK(std::abs(a(1, j) - c(0, j)) < 1e-12);
    CHECK_THROWS_AS(enc.encode({std::vector<int>(11, 3)}), std::invalid_argument);
  }

  TEST_CASE("mean pooling is available") {
    auto shape = micro_shape();
    shape.pooling = Pooling::kMean;
    std::mt19937_64 r1(6), r2(6);
    TextEncoder<double> mean_enc(shape, 12, r1);
    TextEncoder<double> eos_enc(micro_shape(), 12, r2);
    const std::vector<TokenSeq> batch{{3, 4, 5, 1}};
    CHECK(!(mean_enc.encode(batch) == eos_enc.encode(batch)));
  }

  TEST_CASE("negative prompt lengthens the sequence by M_neg") {
    auto shape = micro_shape();
    shape.max_seq_len = 46;
    std::mt19937_64 rng(7);
    TextEncoder<double> enc(shape, 12, rng);
    TokenSeq text(29, 3);
    text.push_back(Tokenizer::kEos);  // 30 tokens
    Parameter<double> prompt("prompt", test::random_matrix<double>(16, shape.token_dim, rng, 0.02));
    CHECK_NOTHROW(enc.encode({text}, &prompt, Overflow::kError));
    text.insert(text.begin(), 3);
    CHECK_THROWS_AS(enc.encode({text}, &prompt, Overflow::kError), std::invalid_argument);
    // Truncation keeps the final EOS and fits the budget.
    CHECK_NOTHROW(enc.encode({text}, &prompt, Overflow::kTruncateText));

    NegativeTextEncoder<double> neg(enc, 16, 0.02, rng);
    CHECK(neg.prompt.value.rows() == 16);
    const auto a = neg.encode({text});
    const auto b = enc.encode({text}, &neg.prompt, Overflow::kTruncateText);
    CHECK(a == b);
  }

  TEST_CASE("zero negative prompt still changes the embedding") {
    std::mt19937_64 rng(8);
    TextEncoder<double> enc(micro_shape(), 12, rng);
    NegativeTextEncoder<double> neg(enc, 3, 0.0, rng);
    for (double x : neg.prompt.value.storage()) REQUIRE(x == 0.0);
    const std::vector<TokenSeq> batch{{3, 4, 1}, {5, 1}};
    CHECK(test::max_abs_diff(neg.encode(batch), enc.encode(batch)) > 1e-6);
    CHECK(neg.encode(batch) == neg.encode(batch));
  }

  TEST_CASE("negative encoder is a deep copy") {
    std::mt19937_64 rng(9);
    TextEncoder<double> enc(micro_shape(), 12, rng);
    NegativeTextEncoder<double> neg(enc, 2, 0.02, rng);
    const std::vector<TokenSeq> batch{{3, 4, 1}};
    const auto before = enc.encode(batch);
    for (auto* p : neg.encoder.parameters()) p->value.fill(0.5);
    CHECK(enc.encode(batch) == before);
    for (auto* p : neg.encoder.parameters()) CHECK(p->name.rfind("neg_text.", 0) == 0);
  }

  TEST_CASE("outputs stay finite over 1000 random initialisations") {
    const auto g = test::toy_graph(2, 4);
    const auto tok = Tokenizer::build(g.texts, 10, 1);
    const auto in = make_graph_inputs<float>(g, tok);
    std::vector<TokenSeq> batch;
    for (const auto& t : g.texts) batch.push_back(tok.encode(t));
    // Default desk shape; the micro shape is small enough for dead ReLU rows.
    EncoderShape shape;
    shape.max_seq_len = 10;
    bool finite = true;
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
      std::mt19937_64 rng(seed);
      GraphEncoder<float> ge(shape, tok.size(), rng);
      TextEncoder<float> te(shape, tok.size(), rng);
      const auto gout = ge.encode(in);
      const auto tout = te.encode(batch);
      for (float x : gout.storage()) finite = finite && std::isfinite(x);
      for (float x : tout.storage()) finite = finite && std::isfinite(x);
    }
    CHECK(finite);
  }

  TEST_CASE("graph encoder gradients match finite differences") {
    const auto g = test::toy_graph(2, 2);
    const auto tok = Tokenizer::build(g.texts, 10, 1);
    const auto in = make_graph_inputs<double>(g, tok);
    std::mt19937_64 rng(10);
    GraphEncoder<double> enc(micro_shape(), tok.size(), rng);
    check_encoder_gradients(enc.parameters(), [&](ag::Tape<double>& tape, bool trainable) {
      return enc.forward(tape, in, {0, 1, 2, 3}, trainable);
    });
  }

  TEST_CASE("text encoder gradients match finite differences") {
    std::mt19937_64 rng(11);
    TextEncoder<double> enc(micro_shape(), 10, rng);
    check_encoder_gradients(enc.parameters(), [&](ag::Tape<double>& tape, bool trainable) {
      return enc.forward(tape, micro_batch(), nullptr, trainable);
    });
  }

  TEST_CASE("negative text encoder gradients match finite differences") {
    std::mt19937_64 rng(12);
    TextEncoder<double> base(micro_shape(), 10, rng);
    NegativeTextEncoder<double> neg(base, 3, 0.3, rng);
    check_encoder_gradients(neg.parameters(), [&](ag::Tape<double>& tape, bool trainable) {
      return neg.forward(tape, micro_batch(), trainable);
    });
  }

  TEST_CASE("copy_parameter_values requires matching shapes") {
    std::mt19937_64 rng(13);
    TextEncoder<double> a(micro_shape(), 10, rng), b(micro_shape(), 10, rng), c(micro_shape(), 11, rng);
    copy_parameter_values<double>(a.parameters(), b.parameters());
    CHECK(a.encode(micro_batch()) == b.encode(micro_batch()));
    CHECK_THROWS(copy_parameter_values<double>(a.parameters(), c.parameters()));
  }
}
