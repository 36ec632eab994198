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

#include "tsa/graph.hpp"

namespace tsa {

Episode sample_episode(const TextAttributedGraph& graph, std::size_t ways, std::size_t shots,
                       std::uint64_t seed, std::size_t query_per_class) {
  if (ways < 2) throw DataError("episode: way count must be >= 2");
  if (query_per_class < 1) throw DataError("episode: query_per_class must be >= 1");
  const std::size_t need = shots + query_per_class;
  const auto by_class = graph.nodes_by_class();
  std::vector<ClassId> eligible;
  for (ClassId c = 0; c < by_class.size(); ++c) {
    if (by_class[c].size() >= need) eligible.push_back(c);
  }
  if (eligible.size() < ways) {
    throw DataError("episode: insufficient classes, need " + std::to_string(ways) +
                    " classes with >= " + std::to_string(need) + " nodes, graph has " +
                    std::to_string(eligible.size()));
  }

  std::mt19937_64 rng(seed);
  std::shuffle(eligible.begin(), eligible.end(), rng);
  Episode ep;
  ep.shots = shots;
  ep.classes.assign(eligible.begin(), eligible.begin() + static_cast<std::ptrdiff_t>(ways));
  for (std::size_t w = 0; w < ways; ++w) {
    auto members = by_class[ep.classes[w]];
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t i = 0; i < shots; ++i) ep.support.push_back({members[i], w});
    for (std::size_t i = shots; i < need; ++i) ep.query.push_back({members[i], w});
  }
  return ep;
}

}  // namespace tsa
