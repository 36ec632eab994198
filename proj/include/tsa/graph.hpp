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

// Text-attributed graphs: the data model, dataset directory I/O, adjacency
// normalization, the synthetic block-model corpus, and C-way K-shot episode
// sampling.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "tsa/tensor.hpp"

namespace tsa {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using NodeId = std::size_t;
using ClassId = std::size_t;

struct TextAttributedGraph {
  // Original string ids in file order; NodeId is the index into this vector.
  std::vector<std::string> node_keys;
  std::vector<std::string> texts;
  std::vector<ClassId> labels;
  std::vector<std::string> class_names;
  // Undirected, stored once as (min, max), sorted, no self-loops.
  std::vector<std::pair<NodeId, NodeId>> edges;

  std::size_t num_nodes() const { return texts.size(); }
  std::size_t num_classes() const { return class_names.size(); }

  // Throws DataError on any broken invariant.
  void validate() const;
  std::vector<std::vector<NodeId>> nodes_by_class() const;
};

// Sorts, symmetrizes to (min, max), removes duplicates and self-loops.
std::vector<std::pair<NodeId, NodeId>> canonical_edges(
    std::vector<std::pair<NodeId, NodeId>> edges);

// Reads nodes.jsonl, edges.tsv and classes.json from `dir`.
TextAttributedGraph load_dataset(const std::filesystem::path& dir);
void save_dataset(const TextAttributedGraph& graph, const std::filesystem::path& dir);

// D^-1/2 (A + I) D^-1/2 with degrees counted after adding self-loops.
template <class T>
Csr<T> normalize_adjacency(const TextAttributedGraph& graph);

struct SyntheticSpec {
  std::size_t classes = 5;
  std::size_t nodes_per_class = 100;
  double p_intra = 0.1;
  double p_inter = 0.01;
  std::size_t vocab_size = 500;
  std::size_t tokens_per_text = 16;
  // 0: every token from the node's own class core; 1: every token from the
  // shared (whole-vocabulary) distribution.
  double class_token_overlap = 0.3;
  std::uint64_t seed = 0;

  void validate() const;
};

// Word string of vocabulary entry `index` in synthetic corpora.
std::string synthetic_word(std::size_t index);
// Half-open range of vocabulary indices forming class `c`'s token core.
std::pair<std::size_t, std::size_t> synthetic_core(const SyntheticSpec& spec, ClassId c);

TextAttributedGraph generate_synthetic(const SyntheticSpec& spec);

struct LabeledNode {
  NodeId node;
  // Index into Episode::classes, i.e. the episode-local label.
  std::size_t way;
  friend bool operator==(const LabeledNode&, const LabeledNode&) = default;
};

struct Episode {
  std::vector<ClassId> classes;
  std::size_t shots = 0;
  std::vector<LabeledNode> support;
  std::vector<LabeledNode> query;

  std::size_t ways() const { return classes.size(); }
};

inline constexpr std::size_t kDefaultQueryPerClass = 15;

Episode sample_episode(const TextAttributedGraph& graph, std::size_t ways,
                       std::size_t shots, std::uint64_t seed,
                       std::size_t query_per_class = kDefaultQueryPerClass);

}  // namespace tsa
