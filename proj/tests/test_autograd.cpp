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

#include <functional>
#include <random>

#include "doctest.h"
#include "support.hpp"
#include "tsa/autograd.hpp"

using namespace tsa;
using ag::Tape;
using ag::Var;

namespace {

using Op = std::function<Var<double>(Tape<double>&, std::vector<Var<double>>&)>;

// Projects the op output onto a fixed random direction so every output entry
// contributes to the scalar being differentiated.
double project(const Matrix<double>& out, const Matrix<double>& w) {
  double s = 0;
  for (std::size_t i = 0; i < out.size(); ++i) s += out.data()[i] * w.data()[i];
  return s;
}

void check_gradients(std::vector<Parameter<double>> params, const Op& op, double tol = 1e-6) {
  std::mt19937_64 rng(101);
  Matrix<double> w;
  auto evaluate = [&]() {
    Tape<double> tape;
    std::vector<Var<double>> vars;
    for (auto& p : params) vars.push_back(tape.parameter(p, false));
    return op(tape, vars).value();
  };
  const auto out0 = evaluate();
  w = test::random_matrix<double>(out0.rows(), out0.cols(), rng);

  for (auto& p : params) p.zero_grad();
  {
    Tape<double> tape;
    std::vector<Var<double>> vars;
    for (auto& p : params) vars.push_back(tape.parameter(p));
    auto out = op(tape, vars);
    const std::vector<Var<double>> in{out};
    auto loss = ag::scalar_with_gradients<double>(in, project(out.value(), w), {w});
    tape.backward(loss);
  }
  for (auto& p : params) {
    CAPTURE(p.name);
    const auto numeric = test::numeric_gradient(p.value, [&] { return project(evaluate(), w); });
    CHECK(test::rel_error(test::as_vector(p.grad), numeric) < tol);
  }
}

Parameter<double> param(const std::string& name, std::size_t r, std::size_t c, std::uint64_t seed,
                        double scale = 1) {
  std::mt19937_64 rng(seed);
  return {name, test::random_matrix<double>(r, c, rng, scale)};
}

}  // namespace

TEST_SUITE("autograd") {
  TEST_CASE("matmul, add and bias gradients") {
    check_gradients({param("a", 3, 4, 1), param("b", 4, 5, 2)},
                    [](auto&, auto& v) { return ag::matmul(v[0], v[1]); });
    check_gradients({param("a", 3, 4, 1), param("b", 3, 4, 2)},
                    [](auto&, auto& v) { return ag::add(v[0], v[1]); });
    check_gradients({param("x", 3, 4, 1), param("bias", 1, 4, 2)},
                    [](auto&, auto& v) { return ag::add_row_bias(v[0], v[1]); });
  }

  TEST_CASE("elementwise nonlinearities") {
    check_gradients({param("x", 4, 5, 3)}, [](auto&, auto& v) { return ag::relu(v[0]); });
    check_gradients({param("x", 4, 5, 4)}, [](auto&, auto& v) { return ag::gelu(v[0]); });
  }

  TEST_CASE("gelu is the exact erf form") {
    Tape<double> tape;
    auto x = tape.constant(Matrix<double>::from_rows({{-1.5, 0.0, 0.7}}));
    const auto y = ag::gelu(x).value();
    for (std::size_t i = 0; i < 3; ++i) {
      const double v = x.value()(0, i);
      CHECK(y(0, i) == doctest::Approx(0.5 * v * (1 + std::erf(v / std::sqrt(2.0)))).epsilon(1e-14));
    }
  }

  TEST_CASE("layer norm gradient") {
    check_gradients({param("x", 3, 6, 5), param("gamma", 1, 6, 6), param("beta", 1, 6, 7)},
                    [](auto&, auto& v) { return ag::layer_norm(v[0], v[1], v[2]); });
  }

  TEST_CASE("row normalization gradient and zero-row error") {
    check_gradients({param("x", 4, 5, 8)}, [](auto&, auto& v) { return ag::l2_normalize_rows(v[0]); });
    Tape<double> tape;
    auto z = tape.constant(Matrix<double>(2, 3));
    CHECK_THROWS_AS(ag::l2_normalize_rows(z), std::domain_error);
  }

  TEST_CASE("gather, segment mean and sparse product gradients") {
    check_gradients({param("x", 5, 3, 9)},
                    [](auto&, auto& v) { return ag::gather_rows(v[0], {4, 0, 4, 2}); });
    check_gradients({param("x", 6, 3, 10)},
                    [](auto&, auto& v) { return ag::segment_mean(v[0], {0, 3}, {2, 3}); });
    Csr<double> s;
    s.rows = 3;
    s.cols = 4;
    s.indptr = {0, 2, 3, 5};
    s.indices = {0, 2, 1, 0, 3};
    s.values = {0.5, 0.5, 1.0, 0.3, 0.7};
    check_gradients({param("x", 4, 3, 11)}, [&](auto&, auto& v) { return ag::spmm(s, v[0]); });
  }

  TEST_CASE("masked self-attention gradient") {
    // Two sequences of packed length 4, the second with one padded slot.
    check_gradients({param("q", 8, 6, 12), param("k", 8, 6, 13), param("v", 8, 6, 14)},
                    [](auto&, auto& v) { return ag::masked_self_attention(v[0], v[1], v[2], 4, {4, 3}, 2); });
  }

  TEST_CASE("padded keys never influence the attention output") {
    std::mt19937_64 rng(15);
    auto q = test::random_matrix<double>(4, 4, rng);
    auto k = test::random_matrix<double>(4, 4, rng);
    auto v = test::random_matrix<double>(4, 4, rng);
    auto run = [&] {
      Tape<double> tape;
      return ag::masked_self_attention(tape.constant(q), tape.constant(k), tape.constant(v), 4, {2}, 2)
          .value();
    };
    const auto a = run();
    for (std::size_t c = 0; c < 4; ++c) {
      k(3, c) = 50.0;
      v(3, c) = -50.0;
    }
    const auto b = run();
    for (std::size_t r = 0; r < 2; ++r)
      for (std::size_t c = 0; c < 4; ++c) CHECK(a(r, c) == b(r, c));
  }

  TEST_CASE("sequence embedding gradient reaches table, prompt and positions") {
    const std::vector<std::vector<int>> tokens{{3, 1}, {2, 4, 1}};
    check_gradients({param("table", 5, 3, 16), param("prompt", 2, 3, 17), param("pos", 6, 3, 18)},
                    [&](auto&, auto& v) { return ag::embed_sequences(v[0], &v[1], v[2], tokens, 5); });
  }

  TEST_CASE("stop_gradient blocks flow and frozen leaves get no gradient") {
    auto a = param("a", 2, 2, 19);
    auto b = param("b", 2, 2, 20);
    a.zero_grad();
    b.zero_grad();
    Tape<double> tape;
    auto va = tape.parameter(a);
    auto vb = tape.parameter(b, false);
    auto out = ag::add(ag::stop_gradient(va), ag::matmul(va, vb));
    const Matrix<double> ones(2, 2, 1.0);
    const std::vector<Var<double>> in{out};
    tape.backward(ag::scalar_with_gradients<double>(in, 0.0, {ones}));
    // d/da of sum(a b) = ones * b^T; the stopped branch adds nothing.
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < 2; ++j) CHECK(a.grad(i, j) == doctest::Approx(b.value(j, 0) + b.value(j, 1)));
    CHECK(b.grad == Matrix<double>(2, 2));
  }

  TEST_CASE("backward accumulates over several seeded roots") {
    auto p = param("p", 1, 3, 21);
    p.zero_grad();
    Tape<double> tape;
    auto v = tape.parameter(p);
    const std::vector<Var<double>> in{v};
    auto r1 = ag::scalar_with_gradients<double>(in, 0.0, {Matrix<double>(1, 3, 1.0)});
    auto r2 = ag::scalar_with_gradients<double>(in, 0.0, {Matrix<double>(1, 3, 2.0)});
    const std::vector<std::pair<Var<double>, double>> seeds{{r1, 1.0}, {r2, 0.5}};
    tape.backward(seeds);
    for (std::size_t j = 0; j < 3; ++j) CHECK(p.grad(0, j) == doctest::Approx(2.0));
  }
}
