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

#include "tsa/text_bank.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "json.hpp"

namespace tsa {

template <class T>
TextBank<T>::TextBank(std::size_t capacity, std::size_t dim) : capacity_(capacity), dim_(dim) {
  if (capacity == 0) throw std::invalid_argument("text bank: capacity must be >= 1");
}

template <class T>
void TextBank<T>::push_batch(std::span<const NodeId> ids, const Matrix<T>& embeddings) {
  if (ids.size() != embeddings.rows()) {
    throw std::invalid_argument("text bank: id count does not match embedding rows");
  }
  if (embeddings.rows() == 0) return;
  if (dim_ == 0) dim_ = embeddings.cols();
  if (embeddings.cols() != dim_) {
    throw std::invalid_argument("text bank: embedding dimension " +
                                std::to_string(embeddings.cols()) + " != bank dimension " +
                                std::to_string(dim_));
  }
  for (std::size_t r = 0; r < embeddings.rows(); ++r) {
    const T n = row_norm<T>(embeddings.row(r));
    if (!(std::abs(n - T(1)) <= T(1e-3))) {
      throw std::invalid_argument("text bank: embeddings must be unit-norm");
    }
  }
  if (data_.empty()) {
    data_.assign(capacity_ * dim_, T(0));
    ids_.assign(capacity_, 0);
    seq_.assign(capacity_, 0);
  }
  for (std::size_t r = 0; r < embeddings.rows(); ++r) {
    std::size_t s;
    if (size_ < capacity_) {
      s = slot(size_);
      ++size_;
    } else {
      s = head_;
      head_ = (head_ + 1) % capacity_;
    }
    std::copy(embeddings.row(r).begin(), embeddings.row(r).end(), data_.begin() + s * dim_);
    ids_[s] = ids[r];
    seq_[s] = inserted_++;
  }
}

template <class T>
BankQueryResult<T> TextBank<T>::query_topk(std::span<const T> query, std::size_t k,
                                           std::optional<NodeId> exclude) const {
  if (k == 0) throw std::invalid_argument("text bank: K must be >= 1");
  BankQueryResult<T> out;
  if (size_ == 0) {
    out.short_count = true;
    return out;
  }
  if (query.size() != dim_) throw std::invalid_argument("text bank: query dimension mismatch");
  const auto& kt = kernels::active<T>();
  struct Cand {
    T sim;
    std::uint64_t seq;
    std::size_t slot;
  };
  std::vector<Cand> cands;
  cands.reserve(size_);
  for (std::size_t i = 0; i < size_; ++i) {
    const std::size_t s = slot(i);
    if (exclude && ids_[s] == *exclude) continue;
    cands.push_back({kt.dot(query.data(), data_.data() + s * dim_, dim_), seq_[s], s});
  }
  const auto better = [](const Cand& a, const Cand& b) {
    return a.sim != b.sim ? a.sim > b.sim : a.seq > b.seq;
  };
  const std::size_t take = std::min(k, cands.size());
  std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(take), cands.end(),
                    better);
  out.short_count = take < k;
  for (std::size_t i = 0; i < take; ++i) {
    const T* e = data_.data() + cands[i].slot * dim_;
    out.hits.push_back({ids_[cands[i].slot], std::vector<T>(e, e + dim_), cands[i].sim});
  }
  return out;
}

template <class T>
std::vector<NodeId> TextBank<T>::ids() const {
  std::vector<NodeId> out(size_);
  for (std::size_t i = 0; i < size_; ++i) out[i] = ids_[slot(i)];
  return out;
}

template <class T>
Matrix<T> TextBank<T>::embeddings() const {
  Matrix<T> m(size_, dim_);
  for (std::size_t i = 0; i < size_; ++i) {
    const T* e = data_.data() + slot(i) * dim_;
    std::copy(e, e + dim_, m.row(i).begin());
  }
  return m;
}

template <class T>
void TextBank<T>::dump(const std::filesystem::path& stem) const {
  const auto emb = embeddings();
  {
    std::ofstream out(std::filesystem::path(stem).concat(".bin"), std::ios::binary);
    out.write(reinterpret_cast<const char*>(emb.data()),
              static_cast<std::streamsize>(emb.size() * sizeof(T)));
    if (!out) throw std::runtime_error("text bank: failed to write dump");
  }
  nlohmann::json meta = {{"capacity", capacity_},
                         {"dim", dim_},
                         {"size", size_},
                         {"total_pushed", inserted_},
                         {"dtype", sizeof(T) == 4 ? "float32" : "float64"},
                         {"ids", ids()}};
  std::ofstream out(std::filesystem::path(stem).concat(".json"), std::ios::binary);
  out << meta.dump() << "\n";
}

template <class T>
TextBank<T> TextBank<T>::load(const std::filesystem::path& stem) {
  const auto json_path = std::filesystem::path(stem).concat(".json");
  const auto bin_path = std::filesystem::path(stem).concat(".bin");
  std::ifstream jin(json_path, std::ios::binary);
  if (!jin) throw std::runtime_error("text bank: missing " + json_path.string());
  const auto meta = nlohmann::json::parse(jin);
  const std::string want = sizeof(T) == 4 ? "float32" : "float64";
  if (meta.at("dtype").get<std::string>() != want) throw std::runtime_error("text bank: dtype mismatch");
  TextBank bank(meta.at("capacity").get<std::size_t>(), meta.at("dim").get<std::size_t>());
  const auto ids = meta.at("ids").get<std::vector<NodeId>>();
  Matrix<T> emb(ids.size(), bank.dim_);
  std::ifstream bin(bin_path, std::ios::binary);
  bin.read(reinterpret_cast<char*>(emb.data()), static_cast<std::streamsize>(emb.size() * sizeof(T)));
  if (!bin || bin.gcount() != static_cast<std::streamsize>(emb.size() * sizeof(T))) {
    throw std::runtime_error("text bank: truncated dump " + bin_path.string());
  }
  bank.push_batch(ids, emb);
  bank.inserted_ = meta.at("total_pushed").get<std::uint64_t>();
  // Re-number so that relative insertion order (and tie-breaking) survives.
  for (std::size_t i = 0; i < bank.size_; ++i)
    bank.seq_[bank.slot(i)] = bank.inserted_ - bank.size_ + i;
  return bank;
}

template <class T>
BankStats bank_stats(const TextBank<T>& bank, std::size_t bins, std::size_t max_probes) {
  BankStats st;
  st.size = bank.size();
  st.capacity = bank.capacity();
  st.fill = static_cast<double>(bank.size()) / static_cast<double>(bank.capacity());
  st.histogram.assign(bins, 0);
  const auto ids = bank.ids();
  const auto emb = bank.embeddings();
  const std::size_t probes = std::min(max_probes, bank.size());
  std::size_t counted = 0;
  double sum = 0.0;
  for (std::size_t i = 0; i < probes; ++i) {
    const auto r = bank.query_topk(emb.row(i), 1, ids[i]);
    if (r.hits.empty()) continue;
    const double s = std::clamp(static_cast<double>(r.hits[0].similarity), -1.0, 1.0);
    auto b = static_cast<std::size_t>((s + 1.0) / 2.0 * static_cast<double>(bins));
    st.histogram[std::min(b, bins - 1)]++;
    sum += s;
    ++counted;
  }
  st.mean_top1 = counted ? sum / static_cast<double>(counted) : 0.0;
  return st;
}

template class TextBank<float>;
template class TextBank<double>;
template BankStats bank_stats<float>(const TextBank<float>&, std::size_t, std::size_t);
template BankStats bank_stats<double>(const TextBank<double>&, std::size_t, std::size_t);

}  // namespace tsa
