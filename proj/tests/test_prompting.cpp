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

#include <numeric>
#include <random>

#include "doctest.h"
#include "support.hpp"
#include "tsa/model.hpp"
#include "tsa/prompting.hpp"

using namespace tsa;

namespace {

EncoderShape small_shape() {
  EncoderShape s;
  s.gcn_hidden = 16;
  s.embed_dim = 8;
  s.token_dim = 8;
  s.blocks = 1;
  s.heads = 2;
  s.ffn_mult = 2;
  s.max_seq_len = 24;
  return s;
}

struct Fixture {
  TextAttributedGraph graph;
  Tokenizer tok;
  TextEncoder<double> text;
  Matrix<double> node_embs;

  Fixture() {
    SyntheticSpec spec;
    spec.nodes_per_class = 30;
    spec.vocab_size = 100;
    spec.tokens_per_text = 8;
    graph = generate_synthetic(spec);
    std::vector<std::string> corpus = graph.texts;
    corpus.push_back("a paper of");
    tok = Tokenizer::build(corpus, small_shape().max_seq_len, 1);
    std::mt19937_64 rng(1);
    GraphEncoder<double> ge(small_shape(), tok.size(), rng);
    text = TextEncoder<double>(small_shape(), tok.size(), rng);
    node_embs = ge.encode(make_graph_inputs<double>(graph, tok));
  }

  std::vector<std::string> names(const Episode& ep) const {
    std::vector<std::string> out;
    for (auto c : ep.classes) out.push_back(graph.class_names[c]);
    return out;
  }
};

}  // namespace

TEST_SUITE("prompting") {
  TEST_CASE("template instantiation") {
    CHECK(instantiate_template("a paper of [class]", "databases") == "a paper of databases");
    CHECK(instantiate_template("[class] research", "vision") == "vision research");
    CHECK_THROWS_AS(instantiate_template("a paper", "x"), std::invalid_argument);
    CHECK_THROWS_AS(validate_template("[class] and [class]"), std::invalid_argument);
    CHECK_NOTHROW(validate_template(kDefaultTemplate));
  }

  TEST_CASE("zero-shot class embeddings") {
    Fixture f;
    const std::vector<std::string> names{"databases", "vision"};
    const auto g = build_zero_shot_class_embeddings(names, kDefaultTemplate, f.tok, f.text);
    CHECK(g.rows() == 2);
    CHECK(g.cols() == 8);
    const std::vector<std::string> dup{"w0 w1", "w0 w1", "w20 w21"};
    const auto gd = build_zero_shot_class_embeddings(dup, kDefaultTemplate, f.tok, f.text);
    for (std::size_t j = 0; j < gd.cols(); ++j) CHECK(gd(0, j) == gd(1, j));
    CHECK_THROWS_AS(build_zero_shot_class_embeddings(names, "no placeholder", f.tok, f.text), std::invalid_argument);
  }

  TEST_CASE("an empty continuous prompt reduces to the zero-shot embeddings") {
    Fixture f;
    const std::vector<std::string> names{"w0 w1", "w20 w21"};
    const PromptState<double> empty(std::string(kDefaultTemplate), 0, 8, 0.02, 3);
    CHECK(build_few_shot_class_embeddings(names, empty, f.tok, f.text) ==
          build_zero_shot_class_embeddings(names, kDefaultTemplate, f.tok, f.text));
    const PromptState<double> four(std::string(kDefaultTemplate), 4, 8, 0.02, 3);
    CHECK(!(build_few_shot_class_embeddings(names, four, f.tok, f.text) ==
            build_zero_shot_class_embeddings(names, kDefaultTemplate, f.tok, f.text)));
    const PromptState<double> huge(std::string(kDefaultTemplate), 20, 8, 0.02, 3);
    CHECK_THROWS_AS(build_few_shot_class_embeddings(names, huge, f.tok, f.text), std::invalid_argument);
  }

  TEST_CASE("cross-entropy gradient w.r.t. the prompt matches finite differences") {
    Fixture f;
    const auto ep = sample_episode(f.graph, 5, 3, 4, 5);
    const auto names = f.names(ep);
    PromptState<double> prompt(std::string(kDefaultTemplate), 4, 8, 0.3, 5);
    Matrix<double> support(ep.support.size(), 8);
    std::vector<std::size_t> labels;
    for (std::size_t i = 0; i < ep.support.size(); ++i) {
      for (std::size_t j = 0; j < 8; ++j) support(i, j) = f.node_embs(ep.support[i].node, j);
      labels.push_back(ep.support[i].way);
    }
    const double tau = 0.2;
    const auto descriptions = class_description_tokens(names, prompt.templ, f.tok);
    prompt.continuous.zero_grad();
    {
      ag::Tape<double> tape;
      const auto pv = tape.parameter(prompt.continuous);
      const auto g = f.text.forward(tape, descriptions, &pv, false, Overflow::kError);
      auto ce = class_cross_entropy(support, labels, g.value(), tau);
      const ag::Var<double> ins[] = {g};
      std::vector<Matrix<double>> grads{ce.grad_class_embs};
      tape.backward(ag::scalar_with_gradients<double>(ins, ce.value, std::move(grads)));
    }
    const auto numeric = test::numeric_gradient(prompt.continuous.value, [&] {
      const auto g = build_few_shot_class_embeddings(names, prompt, f.tok, f.text);
      return class_cross_entropy(support, labels, g, tau).value;
    });
    CHECK(test::rel_error(test::as_vector(prompt.continuous.grad), numeric) < 1e-4);

    // And the analytic class-embedding gradient itself.
    auto g0 = build_few_shot_class_embeddings(names, prompt, f.tok, f.text);
    const auto ce = class_cross_entropy(support, labels, g0, tau);
    const auto num_g = test::numeric_gradient(g0, [&] { return class_cross_entropy(support, labels, g0, tau).value; });
    CHECK(test::rel_error(test::as_vector(ce.grad_class_embs), num_g) < 1e-6);
  }

  TEST_CASE("class probabilities") {
    const auto embs = Matrix<double>::from_rows({{1, 0}, {0, 1}});
    const std::vector<double> node{1, 0};
    const auto p = class_probabilities<double>(node, embs, 1.0);
    CHECK(std::abs(p[0] - std::exp(1.0) / (std::exp(1.0) + 1)) < 1e-12);
    CHECK(std::abs(p[0] - 0.7311) < 1e-4);
    CHECK(std::abs(p[1] - 0.2689) < 1e-4);

    const std::vector<double> diag{std::sqrt(0.5), std::sqrt(0.5)};
    const auto u = class_probabilities<double>(diag, embs, 0.07);
    CHECK(std::abs(u[0] - 0.5) < 1e-12);
    CHECK(std::abs(u[1] - 0.5) < 1e-12);

    const auto sharp = class_probabilities<double>(node, embs, kTauMin);
    CHECK(sharp[0] > 0.999);

    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 200; ++trial) {
      const auto cls = test::random_unit<double>(5, 8, rng);
      const auto n = test::random_unit<double>(1, 8, rng);
      const auto q = class_probabilities<double>(n.row(0), cls, 0.5);
      CHECK(std::abs(std::accumulate(q.begin(), q.end(), 0.0) - 1) < 1e-9);
      for (double x : q) CHECK((x > 0 && x < 1));
    }
    CHECK_THROWS_AS(class_probabilities<double>(node, Matrix<double>::from_rows({{1, 0}}), 1.0), std::invalid_argument);
  }

  TEST_CASE("argmax ties resolve to the lowest index") {
    const std::vector<double> v{0.2, 0.4, 0.4, 0.1};
    CHECK(argmax_lowest<double>(v) == 1);
  }

  TEST_CASE("probability-average rule") {
    const std::vector<double> p{0.7, 0.3}, pn{0.6, 0.4};
    const auto a = probability_average<double>(p, pn);
    CHECK(std::abs(a.scores[0] - 0.55) < 1e-12);
    CHECK(std::abs(a.scores[1] - 0.45) < 1e-12);
    CHECK(a.label == 0);

    const std::vector<double> p2{0.52, 0.48}, pn2{0.9, 0.1};
    const auto b = probability_average<double>(p2, pn2);
    CHECK(std::abs(b.scores[0] - 0.31) < 1e-12);
    CHECK(std::abs(b.scores[1] - 0.69) < 1e-12);
    CHECK(b.label == 1);

    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.01, 1);
    for (int trial = 0; trial < 500; ++trial) {
      const std::size_t c = 2 + rng() % 6;
      std::vector<double> q(c), qn(c), uni(c, 1.0 / double(c));
      for (auto& x : q) x = u(rng);
      for (auto& x : qn) x = u(rng);
      const double s = std::accumulate(q.begin(), q.end(), 0.0), sn = std::accumulate(qn.begin(), qn.end(), 0.0);
      for (auto& x : q) x /= s;
      for (auto& x : qn) x /= sn;
      CHECK(probability_average<double>(q, uni).label == argmax_lowest<double>(q));
      for (double x : probability_average<double>(q, qn).scores) CHECK((x >= 0 && x <= 1));
    }
    const std::vector<double> three{0.2, 0.3, 0.5};
    CHECK_THROWS_AS(probability_average<double>(p, three), std::invalid_argument);
  }

  TEST_CASE("prompt tuning lowers the support loss and freezes the encoder") {
    Fixture f;
    const auto ep = sample_episode(f.graph, 5, 5, 11, 5);
    const auto names = f.names(ep);
    const auto before = parameter_hash<double>(f.text.parameters());
    PromptState<double> prompt(std::string(kDefaultTemplate), 4, 8, 0.02, 11);
    PromptTuneConfig cfg;
    cfg.steps = 50;
    const auto trace = prompt_tune(ep, f.node_embs, names, prompt, f.tok, f.text, 0.07, cfg);
    CHECK(trace.support_loss.size() == 51);
    CHECK(trace.support_loss.back() < trace.support_loss.front());
    CHECK(parameter_hash<double>(f.text.parameters()) == before);

    PromptState<double> again(std::string(kDefaultTemplate), 4, 8, 0.02, 11);
    prompt_tune(ep, f.node_embs, names, again, f.tok, f.text, 0.07, cfg);
    CHECK(again.continuous.value == prompt.continuous.value);
  }

  TEST_CASE("zero tuning steps leave the prompt bit-identical") {
    Fixture f;
    const auto ep = sample_episode(f.graph, 5, 5, 12, 5);
    PromptState<double> prompt(std::string(kDefaultTemplate), 4, 8, 0.02, 12);
    const auto init = prompt.continuous.value;
    PromptTuneConfig cfg;
    cfg.steps = 0;
    const auto trace = prompt_tune(ep, f.node_embs, f.names(ep), prompt, f.tok, f.text, 0.07, cfg);
    CHECK(trace.support_loss.size() == 1);
    CHECK(prompt.continuous.value == init);
  }

  TEST_CASE("prompt tuning preconditions") {
    Fixture f;
    const auto zs = sample_episode(f.graph, 5, 0, 13, 5);
    PromptState<double> prompt(std::string(kDefaultTemplate), 4, 8, 0.02, 13);
    CHECK_THROWS_AS(prompt_tune(zs, f.node_embs, f.names(zs), prompt, f.tok, f.text, 0.07, {}),
                    std::invalid_argument);
    const auto ep = sample_episode(f.graph, 5, 2, 13, 5);
    auto names = f.names(ep);
    names.pop_back();
    CHECK_THROWS_AS(prompt_tune(ep, f.node_embs, names, prompt, f.tok, f.text, 0.07, {}), std::invalid_argument);
    PromptState<double> empty(std::string(kDefaultTemplate), 0, 8, 0.02, 13);
    CHECK_THROWS_AS(prompt_tune(ep, f.node_embs, f.names(ep), empty, f.tok, f.text, 0.07, {}),
                    std::invalid_argument);
  }
}
