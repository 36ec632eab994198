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

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "tsa/autograd.hpp"
#include "tsa/graph.hpp"
#include "tsa/tensor.hpp"

namespace tsa::test {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "tsa") {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            (tag + "-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

template <class T>
Matrix<T> random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double scale = 1) {
  std::normal_distribution<double> nd(0.0, scale);
  Matrix<T> m(rows, cols);
  for (auto& x : m.storage()) x = static_cast<T>(nd(rng));
  return m;
}

template <class T>
Matrix<T> unit_rows(Matrix<T> m) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double n = 0;
    for (T x : m.row(i)) n += static_cast<double>(x) * x;
    n = std::sqrt(n);
    for (T& x : m.row(i)) x = static_cast<T>(x / n);
  }
  return m;
}

template <class T>
Matrix<T> random_unit(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  return unit_rows(random_matrix<T>(rows, cols, rng));
}

inline double max_abs_diff(const Matrix<double>& a, const Matrix<double>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

// ||a - b|| / max(||a||, ||b||, tiny)
inline double rel_error(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double denom = std::max({std::sqrt(na), std::sqrt(nb), 1e-300});
  return std::sqrt(d) / denom;
}

// Central differences of f over every entry of m.
inline std::vector<double> numeric_gradient(Matrix<double>& m, const std::function<double()>& f,
                                            double h = 1e-5) {
  std::vector<double> g(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) {
    const double keep = m.data()[i];
    m.data()[i] = keep + h;
    const double up = f();
    m.data()[i] = keep - h;
    const double down = f();
    m.data()[i] = keep;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

inline std::vector<double> as_vector(const Matrix<double>& m) { return m.storage(); }

// Reference transcriptions of the training objectives, evaluated term by term
// on plain nested vectors. Kept deliberately naive and independent of
// src/objectives.cpp.
namespace oracle {

using Rows = std::vector<std::vector<double>>;

inline Rows rows_of(const Matrix<double>& m) {
  Rows r(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) r[i].assign(m.row(i).begin(), m.row(i).end());
  return r;
}

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    ab += a[k] * b[k];
    aa += a[k] * a[k];
    bb += b[k] * b[k];
  }
  return ab / std::sqrt(aa * bb);
}

inline double contrastive(const Rows& n, const Rows& t, double tau, bool include) {
  const std::size_t b = n.size();
  double total = 0;
  for (std::size_t i = 0; i < b; ++i) {
    const double num = std::exp(cosine(n[i], t[i]) / tau);
    double den = 0;
    for (std::size_t j = 0; j < b; ++j) {
      if (!include && j == i) continue;
      den += std::exp(cosine(n[i], t[j]) / tau);
    }
    total += -std::log(num / den);
  }
  return total / static_cast<double>(b);
}

inline double psm(const Rows& n, const std::vector<Rows>& retrieved, const Rows& t, double tau,
                  bool include) {
  double total = 0;
  std::size_t used = 0;
  for (std::size_t i = 0; i < n.size(); ++i) {
    if (retrieved[i].empty()) continue;
    double num = 0;
    for (const auto& r : retrieved[i]) num += std::exp(cosine(n[i], r) / tau);
    // include: retrieved vectors join the batch candidates in the denominator.
    double den = include ? num : 0.0;
    for (std::size_t j = 0; j < t.size(); ++j) {
      if (!include && j == i) continue;
      den += std::exp(cosine(n[i], t[j]) / tau);
    }
    total += -std::log(num / den);
    ++used;
  }
  return used ? total / static_cast<double>(used) : 0.0;
}

inline double margin(const Rows& n, const Rows& neg, double m) {
  double total = 0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < n.size(); ++i) {
    for (std::size_t j = 0; j < n.size(); ++j) {
      if (j == i) continue;
      total += std::max(0.0, m + cosine(n[i], neg[i]) - cosine(n[i], neg[j]));
      ++pairs;
    }
  }
  return total / static_cast<double>(pairs);
}

inline double opposite(const Rows& t, const Rows& neg) {
  double total = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    double d = 0;
    for (std::size_t k = 0; k < t[i].size(); ++k) d += (t[i][k] - neg[i][k]) * (t[i][k] - neg[i][k]);
    total += std::sqrt(d);
  }
  return -total / static_cast<double>(t.size());
}

}  // namespace oracle

// Small labelled graph built in memory: `per_class` nodes per class, texts
// made of class-specific words, a ring inside each class.
inline TextAttributedGraph toy_graph(std::size_t classes = 3, std::size_t per_class = 6) {
  TextAttributedGraph g;
  for (std::size_t c = 0; c < classes; ++c) g.class_names.push_back("topic" + std::to_string(c));
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t k = 0; k < per_class; ++k) {
      const std::size_t id = g.texts.size();
      g.node_keys.push_back("n" + std::to_string(id));
      g.labels.push_back(c);
      std::string text;
      for (std::size_t w = 0; w < 5; ++w) {
        text += "w" + std::to_string(c) + "_" + std::to_string((k + w) % 4) + " ";
      }
      g.texts.push_back(text + "common");
    }
  }
  std::vector<std::pair<NodeId, NodeId>> edges;
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t k = 0; k < per_class; ++k) {
      edges.emplace_back(c * per_class + k, c * per_class + (k + 1) % per_class);
    }
  }
  g.edges = canonical_edges(std::move(edges));
  g.validate();
  return g;
}

}  // namespace tsa::test
