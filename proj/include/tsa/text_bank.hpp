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

// Bounded FIFO store of detached, unit-norm text embeddings with exact top-K
// cosine retrieval. Single writer; concurrent readers need a snapshot copy.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "tsa/graph.hpp"
#include "tsa/tensor.hpp"

namespace tsa {

inline constexpr std::size_t kDefaultBankCapacity = 32768;

template <class T>
struct BankHit {
  NodeId id;
  std::vector<T> embedding;
  T similarity;
};

template <class T>
struct BankQueryResult {
  std::vector<BankHit<T>> hits;
  // Fewer than K candidates were available (including the empty bank).
  bool short_count = false;
};

template <class T>
class TextBank {
 public:
  explicit TextBank(std::size_t capacity = kDefaultBankCapacity, std::size_t dim = 0);

  // Appends rows of `embeddings` (copied) tagged with `ids`, evicting the
  // oldest entries once capacity is exceeded. The first push fixes the
  // dimension when it was not given at construction.
  void push_batch(std::span<const NodeId> ids, const Matrix<T>& embeddings);

  // Exact top-K by cosine similarity, descending; ties go to the most recent
  // insertion. Entries whose id equals `exclude` are skipped.
  BankQueryResult<T> query_topk(std::span<const T> query, std::size_t k,
                                std::optional<NodeId> exclude = std::nullopt) const;

  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }
  std::size_t dim() const { return dim_; }
  std::uint64_t total_pushed() const { return inserted_; }

  // Entries from oldest to newest.
  std::vector<NodeId> ids() const;
  Matrix<T> embeddings() const;

  // Debug dump: <stem>.bin (raw row-major values, oldest first) and
  // <stem>.json (ids, shape, counters).
  void dump(const std::filesystem::path& stem) const;
  static TextBank load(const std::filesystem::path& stem);

 private:
  std::size_t slot(std::size_t age_index) const { return (head_ + age_index) % capacity_; }

  std::size_t capacity_;
  std::size_t dim_;
  std::vector<T> data_;            // capacity_ x dim_ ring buffer
  std::vector<NodeId> ids_;
  std::vector<std::uint64_t> seq_;  // insertion counter per slot
  std::size_t head_ = 0;            // oldest entry
  std::size_t size_ = 0;
  std::uint64_t inserted_ = 0;
};

struct BankStats {
  std::size_t size = 0;
  std::size_t capacity = 0;
  double fill = 0.0;
  // Histogram over [-1, 1] of each entry's best non-self neighbour similarity.
  std::vector<std::size_t> histogram;
  double mean_top1 = 0.0;
};

template <class T>
BankStats bank_stats(const TextBank<T>& bank, std::size_t bins = 20,
                     std::size_t max_probes = 2000);

}  // namespace tsa
