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
#include <cmath>

#include "tsa/graph.hpp"

namespace tsa {

void TextAttributedGraph::validate() const {
  const std::size_t n = num_nodes();
  if (n == 0) throw DataError("empty node set");
  if (labels.size() != n || node_keys.size() != n) {
    throw DataError("graph must carry exactly one text, key and label per node");
  }
  if (class_names.empty()) throw DataError("empty class catalog");
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] >= class_names.size()) {
      throw DataError("node " + node_keys[i] + ": label outside class catalog");
    }
  }
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const auto [u, v] = edges[e];
    if (u >= n || v >= n) throw DataError("edge references unknown node");
    if (u == v) throw DataError("self-loop stored in edge list");
    if (u > v) throw DataError("edge not in canonical (min, max) order");
    if (e > 0 && !(edges[e - 1] < edges[e])) throw DataError("edge list not deduplicated");
  }
}

std::vector<std::vector<NodeId>> TextAttributedGraph::nodes_by_class() const {
  std::vector<std::vector<NodeId>> out(num_classes());
  for (NodeId i = 0; i < num_nodes(); ++i) out[labels[i]].push_back(i);
  return out;
}

std::vector<std::pair<NodeId, NodeId>> canonical_edges(
    std::vector<std::pair<NodeId, NodeId>> edges) {
  std::erase_if(edges, [](const auto& e) { return e.first == e.second; });
  for (auto& e : edges) {
    if (e.first > e.second) std::swap(e.first, e.second);
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  return edges;
}

template <class T>
Csr<T> normalize_adjacency(const TextAttributedGraph& graph) {
  const std::size_t n = graph.num_nodes();
  std::vector<std::vector<NodeId>> nbrs(n);
  for (NodeId i = 0; i < n; ++i) nbrs[i].push_back(i);
  for (const auto& [u, v] : graph.edges) {
    nbrs[u].push_back(v);
    nbrs[v].push_back(u);
  }
  std::vector<T> inv_sqrt(n);
  for (NodeId i = 0; i < n; ++i) {
    std::sort(nbrs[i].begin(), nbrs[i].end());
    inv_sqrt[i] = T(1) / std::sqrt(static_cast<T>(nbrs[i].size()));
  }
  Csr<T> a;
  a.rows = a.cols = n;
  a.indptr.reserve(n + 1);
  for (NodeId i = 0; i < n; ++i) {
    for (NodeId j : nbrs[i]) {
      a.indices.push_back(j);
      a.values.push_back(inv_sqrt[i] * inv_sqrt[j]);
    }
    a.indptr.push_back(a.indices.size());
  }
  return a;
}

template Csr<float> normalize_adjacency<float>(const TextAttributedGraph&);
template Csr<double> normalize_adjacency<double>(const TextAttributedGraph&);

}  // namespace tsa
