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

#include <fstream>
#include <sstream>
#include <unordered_map>

#include "json.hpp"

#include "tsa/graph.hpp"

namespace tsa {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::ifstream open_input(const fs::path& p) {
  if (!fs::exists(p)) throw DataError("missing file: " + p.string());
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot open " + p.string());
  return in;
}

std::string location(const fs::path& p, std::size_t line) {
  return p.filename().string() + ":" + std::to_string(line) + ": ";
}

std::string_view trim_cr(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.remove_suffix(1);
  return s;
}

}  // namespace

TextAttributedGraph load_dataset(const fs::path& dir) {
  const fs::path nodes_path = dir / "nodes.jsonl";
  const fs::path edges_path = dir / "edges.tsv";
  const fs::path classes_path = dir / "classes.json";

  TextAttributedGraph g;
  {
    auto in = open_input(classes_path);
    json classes;
    try {
      classes = json::parse(in);
    } catch (const json::exception& e) {
      throw DataError("classes.json: " + std::string(e.what()));
    }
    if (!classes.is_array()) throw DataError("classes.json: expected a JSON array of strings");
    for (const auto& c : classes) {
      if (!c.is_string()) throw DataError("classes.json: expected a JSON array of strings");
      g.class_names.push_back(c.get<std::string>());
    }
  }
  std::unordered_map<std::string, ClassId> class_index;
  for (ClassId c = 0; c < g.class_names.size(); ++c) {
    if (!class_index.emplace(g.class_names[c], c).second) {
      throw DataError("classes.json: duplicate class name " + g.class_names[c]);
    }
  }

  std::unordered_map<std::string, NodeId> node_index;
  {
    auto in = open_input(nodes_path);
    std::string line;
    for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
      if (trim_cr(line).empty()) continue;
      json rec;
      try {
        rec = json::parse(line);
      } catch (const json::exception&) {
        throw DataError(location(nodes_path, lineno) + "malformed JSON record");
      }
      if (!rec.is_object() || !rec.contains("id") || !rec.contains("text") ||
          !rec.contains("label") || !rec["id"].is_string() || !rec["text"].is_string() ||
          !rec["label"].is_string()) {
        throw DataError(location(nodes_path, lineno) +
                        "record must have string fields id, text, label");
      }
      const auto id = rec["id"].get<std::string>();
      const auto label = rec["label"].get<std::string>();
      const auto cls = class_index.find(label);
      if (cls == class_index.end()) {
        throw DataError(location(nodes_path, lineno) + "label outside class catalog: " + label);
      }
      if (!node_index.emplace(id, g.node_keys.size()).second) {
        throw DataError(location(nodes_path, lineno) + "duplicate node id " + id);
      }
      g.node_keys.push_back(id);
      g.texts.push_back(rec["text"].get<std::string>());
      g.labels.push_back(cls->second);
    }
  }
  if (g.node_keys.empty()) throw DataError("empty node set");

  {
    auto in = open_input(edges_path);
    std::string line;
    std::vector<std::pair<NodeId, NodeId>> edges;
    for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
      const auto view = trim_cr(line);
      if (view.empty()) continue;
      const auto tab = view.find('\t');
      if (tab == std::string_view::npos || view.find('\t', tab + 1) != std::string_view::npos) {
        throw DataError(location(edges_path, lineno) + "expected two tab-separated node ids");
      }
      const std::string a(view.substr(0, tab)), b(view.substr(tab + 1));
      const auto ia = node_index.find(a), ib = node_index.find(b);
      if (ia == node_index.end() || ib == node_index.end()) {
        throw DataError(location(edges_path, lineno) + "edge references unknown node " +
                        (ia == node_index.end() ? a : b));
      }
      edges.emplace_back(ia->second, ib->second);
    }
    g.edges = canonical_edges(std::move(edges));
  }
  g.validate();
  return g;
}

void save_dataset(const TextAttributedGraph& graph, const fs::path& dir) {
  graph.validate();
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "classes.json", std::ios::binary);
    out << json(graph.class_names).dump() << "\n";
  }
  {
    std::ofstream out(dir / "nodes.jsonl", std::ios::binary);
    for (NodeId i = 0; i < graph.num_nodes(); ++i) {
      json rec = {{"id", graph.node_keys[i]},
                  {"text", graph.texts[i]},
                  {"label", graph.class_names[graph.labels[i]]}};
      out << rec.dump() << "\n";
    }
  }
  {
    std::ofstream out(dir / "edges.tsv", std::ios::binary);
    for (const auto& [u, v] : graph.edges) {
      out << graph.node_keys[u] << '\t' << graph.node_keys[v] << '\n';
    }
  }
}

}  // namespace tsa
