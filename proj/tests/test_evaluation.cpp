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

#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>

#include "doctest.h"
#include "support.hpp"
#include "tsa/evaluation.hpp"
#include "tsa/prompting.hpp"
#include "tsa/trainer.hpp"

using namespace tsa;

namespace {

const TextAttributedGraph& graph() {
  static const TextAttributedGraph g = [] {
    SyntheticSpec spec;
    spec.class_token_overlap = 0.5;
    return generate_synthetic(spec);
  }();
  return g;
}

TrainConfig quick_config(double alpha) {
  TrainConfig c;
  c.lr = 1e-3;
  c.epochs = 1;
  c.alpha = alpha;
  c.encoder.blocks = 1;
  c.encoder.max_seq_len = 40;
  c.neg_prompt_len = 4;
  c.prompt.steps = 5;
  return c;
}

// Two checkpoints shared by the suite: alpha = 0 and alpha = 0.5.
Checkpoint& checkpoint(bool negative) {
  static Checkpoint plain = pretrain(graph(), quick_config(0)).checkpoint;
  static Checkpoint with_neg = pretrain(graph(), quick_config(0.5)).checkpoint;
  return negative ? with_neg : plain;
}

nlohmann::json without_time(nlohmann::json j) {
  j.erase("seconds");
  return j;
}

}  // namespace

TEST_SUITE("evaluation") {
  TEST_CASE("accuracy and macro-F1") {
    const std::vector<std::size_t> t{0, 0, 1, 1, 2, 2}, p{0, 1, 1, 1, 0, 2};
    CHECK(accuracy(t, p) == doctest::Approx(4.0 / 6));
    // Per class: F1_0 = 1/2, F1_1 = 4/5, F1_2 = 2/3.
    CHECK(macro_f1(t, p, 3) == doctest::Approx((0.5 + 0.8 + 2.0 / 3) / 3).epsilon(1e-12));
    CHECK(macro_f1(t, t, 3) == 1.0);

    // Everything predicted as class 0 on a balanced 3-class set.
    const std::vector<std::size_t> all0(6, 0);
    CHECK(macro_f1(t, all0, 3) == doctest::Approx((2.0 * 2 / (2 * 2 + 4)) / 3));

    // A class absent everywhere counts as 0.
    const std::vector<std::size_t> two{0, 1}, two_p{0, 1};
    CHECK(macro_f1(two, two_p, 3) == doctest::Approx(2.0 / 3));

    CHECK_THROWS_AS(accuracy({}, {}), std::invalid_argument);
    CHECK_THROWS_AS(accuracy(t, two), std::invalid_argument);
    CHECK_THROWS_AS(macro_f1(t, p, 2), std::invalid_argument);
  }

  TEST_CASE("mean and sample standard deviation") {
    const auto [m1, s1] = mean_std({0.7});
    CHECK(m1 == 0.7);
    CHECK(s1 == 0.0);
    const auto [m, s] = mean_std({1, 2, 3, 4});
    CHECK(m == 2.5);
    CHECK(s == doctest::Approx(std::sqrt(5.0 / 3)));
    CHECK_THROWS_AS(mean_std({}), std::invalid_argument);
  }

  TEST_CASE("episode runner with stub classifiers") {
    const auto perfect = [](const Episode& ep, std::uint64_t) {
      std::vector<std::size_t> out;
      for (const auto& q : ep.query) out.push_back(q.way);
      return out;
    };
    const auto rep = run_episodes(graph(), 5, 3, 5, 10, 15, perfect);
    REQUIRE(rep.runs.size() == 5);
    CHECK(rep.acc_mean == 1.0);
    CHECK(rep.acc_std == 0.0);
    CHECK(rep.f1_mean == 1.0);
    for (std::size_t r = 0; r < 5; ++r) {
      CHECK(rep.runs[r].seed == 10 + r);
      CHECK(rep.runs[r].nodes.size() == 75);
    }

    std::mt19937_64 rng(99);
    const auto uniform = [&](const Episode& ep, std::uint64_t) {
      std::vector<std::size_t> out;
      for (std::size_t i = 0; i < ep.query.size(); ++i) out.push_back(rng() % ep.ways());
      return out;
    };
    const auto noise = run_episodes(graph(), 5, 1, 20, 0, 15, uniform);
    const double sigma = std::sqrt(0.2 * 0.8 / (20.0 * 75));
    CHECK(std::abs(noise.acc_mean - 0.2) < 3 * sigma);

    const auto wrong_count = [](const Episode&, std::uint64_t) { return std::vector<std::size_t>{0}; };
    CHECK_THROWS_AS(run_episodes(graph(), 5, 1, 1, 0, 15, wrong_count), std::logic_error);
    CHECK_THROWS_AS(run_episodes(graph(), 5, 1, 0, 0, 15, perfect), std::invalid_argument);
  }

  TEST_CASE("antipodal two-class probabilities") {
    const double tau = 0.1;
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 100; ++trial) {
      const auto u = test::random_unit<double>(1, 8, rng);
      const auto e = test::random_unit<double>(1, 8, rng);
      Matrix<double> cls(2, 8);
      for (std::size_t j = 0; j < 8; ++j) {
        cls(0, j) = u(0, j);
        cls(1, j) = -u(0, j);
      }
      const double s = test::oracle::cosine(test::as_vector(e), test::as_vector(u));
      const auto p = class_probabilities<double>(e.row(0), cls, tau);
      CHECK(std::abs(p[0] - 1 / (1 + std::exp(-2 * s / tau))) < 1e-12);
      CHECK(argmax_lowest<double>(p) == (s >= 0 ? 0u : 1u));
    }
  }

  TEST_CASE("zero-shot evaluation flags and preconditions") {
    auto& plain = checkpoint(false);
    CHECK_THROWS_AS(evaluate_zeroshot(plain, graph(), 5, 2, 0, true, std::string(kDefaultTemplate), 15),
                    std::invalid_argument);
    const auto r = evaluate_zeroshot(plain, graph(), 5, 2, 0, false, std::string(kDefaultTemplate), 15);
    CHECK(r.mode == "zeroshot");
    CHECK(!r.prob_average);
    CHECK(r.shot == 0);
    CHECK(r.runs.size() == 2);
    CHECK(r.config_hash == config_hash(plain.config));

    auto& neg = checkpoint(true);
    const auto pa = evaluate_zeroshot(neg, graph(), 5, 2, 0, true, std::string(kDefaultTemplate), 15);
    CHECK(pa.prob_average);
    CHECK(to_json(pa).at("prob_average") == true);
    CHECK(to_json(r).at("prob_average") == false);
  }

  TEST_CASE("only probability averaging runs the negative encoder") {
    auto& ck = checkpoint(true);
    const auto calls = [&] { return ck.model.negative.encoder.forward_calls(); };
    auto before = calls();
    PromptConfig pc = ck.config.prompt;
    evaluate_fewshot(ck, graph(), 5, 1, 3, 0, pc, 15);
    CHECK(calls() == before);
    evaluate_zeroshot(ck, graph(), 5, 3, 0, false, pc.templ, 15);
    CHECK(calls() == before);
    evaluate_zeroshot(ck, graph(), 5, 3, 0, true, pc.templ, 15);
    CHECK(calls() == before + 3);
  }

  TEST_CASE("reports are bit-reproducible") {
    auto& ck = checkpoint(true);
    PromptConfig pc = ck.config.prompt;
    const auto a = evaluate_fewshot(ck, graph(), 5, 3, 3, 4, pc, 15);
    const auto b = evaluate_fewshot(ck, graph(), 5, 3, 3, 4, pc, 15);
    CHECK(without_time(to_json(a)) == without_time(to_json(b)));
    for (std::size_t r = 0; r < a.runs.size(); ++r) CHECK(a.runs[r].predicted == b.runs[r].predicted);
    const auto z1 = evaluate_zeroshot(ck, graph(), 5, 3, 4, true, pc.templ, 15);
    const auto z2 = evaluate_zeroshot(ck, graph(), 5, 3, 4, true, pc.templ, 15);
    CHECK(without_time(to_json(z1)) == without_time(to_json(z2)));

    const auto j = to_json(a);
    for (const char* k : {"runs", "mean", "std", "f1_mean", "f1_std", "config_hash", "seconds"}) CHECK(j.contains(k));
    CHECK(j.at("runs").size() == 3);
    CHECK_THROWS_AS(evaluate_fewshot(ck, graph(), 5, 0, 3, 4, pc, 15), std::invalid_argument);
  }

  TEST_CASE("an empty prompt in few-shot matches zero-shot classification") {
    auto& ck = checkpoint(false);
    PromptConfig pc = ck.config.prompt;
    pc.length = 0;
    const auto f = evaluate_fewshot(ck, graph(), 5, 2, 3, 7, pc, 15);
    const auto z = evaluate_zeroshot(ck, graph(), 5, 3, 7, false, pc.templ, 15);
    // Episodes differ (support nodes are drawn first), so compare per node.
    std::size_t compared = 0;
    for (std::size_t r = 0; r < 3; ++r) {
      std::map<NodeId, std::size_t> zero_label;
      for (std::size_t i = 0; i < z.runs[r].nodes.size(); ++i) zero_label[z.runs[r].nodes[i]] = z.runs[r].predicted[i];
      const auto ep_f = sample_episode(graph(), 5, 2, 7 + r, 15);
      const auto ep_z = sample_episode(graph(), 5, 0, 7 + r, 15);
      if (ep_f.classes != ep_z.classes) continue;
      for (std::size_t i = 0; i < f.runs[r].nodes.size(); ++i) {
        const auto it = zero_label.find(f.runs[r].nodes[i]);
        if (it == zero_label.end()) continue;
        CHECK(it->second == f.runs[r].predicted[i]);
        ++compared;
      }
    }
    CHECK(compared > 0);
  }

  TEST_CASE("probability-average runs record both distributions") {
    auto& ck = checkpoint(true);
    const auto rep = evaluate_zeroshot(ck, graph(), 4, 2, 1, true, std::string(kDefaultTemplate), 5);
    for (const auto& run : rep.runs) {
      REQUIRE(run.p.size() == run.nodes.size());
      REQUIRE(run.p_neg.size() == run.nodes.size());
      for (std::size_t i = 0; i < run.nodes.size(); ++i) {
        CHECK(run.p[i].size() == 4);
        CHECK(std::accumulate(run.p_neg[i].begin(), run.p_neg[i].end(), 0.0) == doctest::Approx(1.0).epsilon(1e-5));
        CHECK(run.predicted[i] == probability_average<double>(run.p[i], run.p_neg[i]).label);
      }
    }
  }

  TEST_CASE("prediction dump") {
    auto& ck = checkpoint(false);
    const auto rep = evaluate_zeroshot(ck, graph(), 3, 2, 0, false, std::string(kDefaultTemplate), 4);
    test::TempDir dir;
    write_predictions(rep, dir / "p.jsonl");
    std::ifstream in(dir / "p.jsonl");
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      const auto j = nlohmann::json::parse(line);
      const auto run = j.at("run").get<std::size_t>();
      const auto i = n - run * 12;
      CHECK(j.at("node_id") == rep.runs[run].nodes[i]);
      CHECK(j.at("true_label") == rep.runs[run].truth[i]);
      CHECK(j.at("p").size() == 3);
      CHECK(!j.contains("p_neg"));
      CHECK(j.at("predicted") == rep.runs[run].predicted[i]);
      CHECK(j.at("seed") == rep.runs[run].seed);
      ++n;
    }
    CHECK(n == 24);
  }
}
