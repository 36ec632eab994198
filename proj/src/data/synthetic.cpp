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

#include <random>

#include "tsa/graph.hpp"

namespace tsa {

void SyntheticSpec::validate() const {
  if (classes < 1) throw DataError("synthetic: classes must be >= 1");
  if (nodes_per_class < 1) throw DataError("synthetic: nodes_per_class must be >= 1");
  if (!(p_intra >= 0.0 && p_intra <= 1.0) || !(p_inter >= 0.0 && p_inter <= 1.0)) {
    throw DataError("synthetic: edge probabilities must lie in [0, 1]");
  }
  if (!(class_token_overlap >= 0.0 && class_token_overlap <= 1.0)) {
    throw DataError("synthetic: class_token_overlap must lie in [0, 1]");
  }
  if (vocab_size < classes) {
    throw DataError("synthetic: vocab_size < classes, cannot build disjoint class token cores");
  }
  if (tokens_per_text < 1) throw DataError("synthetic: tokens_per_text must be >= 1");
}

std::string synthetic_word(std::size_t index) { return "w" + std::to_string(index); }

std::pair<std::size_t, std::size_t> synthetic_core(const SyntheticSpec& spec, ClassId c) {
  const std::size_t core = spec.vocab_size / spec.classes;
  return {c * core, (c + 1) * core};
}

TextAttributedGraph generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  TextAttributedGraph g;
  const std::size_t n = spec.classes * spec.nodes_per_class;
  for (ClassId c = 0; c < spec.classes; ++c) {
    const auto [lo, hi] = synthetic_core(spec, c);
    // Class description = the two highest-ranked core words.
    std::string name = synthetic_word(lo);
    if (hi - lo > 1) name += " " + synthetic_word(lo + 1);
    g.class_names.push_back(std::move(name));
  }

  // Zipf weights within each core so that low-rank core words dominate.
  const std::size_t core = spec.vocab_size / spec.classes;
  std::vector<double> zipf(core);
  for (std::size_t r = 0; r < core; ++r) zipf[r] = 1.0 / static_cast<double>(r + 1);
  std::discrete_distribution<std::size_t> core_rank(zipf.begin(), zipf.end());
  std::uniform_int_distribution<std::size_t> any_word(0, spec.vocab_size - 1);

  for (NodeId i = 0; i < n; ++i) {
    const ClassId c = i / spec.nodes_per_class;
    g.node_keys.push_back("n" + std::to_string(i));
    g.labels.push_back(c);
    const std::size_t lo = synthetic_core(spec, c).first;
    std::string text;
    for (std::size_t t = 0; t < spec.tokens_per_text; ++t) {
      const bool shared = unit(rng) < spec.class_token_overlap;
      const std::size_t w = shared ? any_word(rng) : lo + core_rank(rng);
      if (t) text += ' ';
      text += synthetic_word(w);
    }
    g.texts.push_back(std::move(text));
  }

  for (NodeId u = 0; u < n; ++u) {
    for (NodeId v = u + 1; v < n; ++v) {
      const bool same = g.labels[u] == g.labels[v];
      if (unit(rng) < (same ? spec.p_intra : spec.p_inter)) g.edges.emplace_back(u, v);
    }
  }
  g.validate();
  return g;
}

}  // namespace tsa
