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

#include "tsa/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <stdexcept>

namespace tsa {

std::vector<std::string> Tokenizer::split_words(std::string_view text) {
  std::vector<std::string> words;
  std::string cur;
  for (const char ch : text) {
    const auto uc = static_cast<unsigned char>(ch);
    if (std::isspace(uc)) {
      if (!cur.empty()) words.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(uc)));
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

Tokenizer Tokenizer::build(std::span<const std::string> corpus, std::size_t max_seq_len,
                           std::size_t min_freq) {
  std::map<std::string, std::size_t> freq;
  for (const auto& text : corpus)
    for (auto& w : split_words(text)) ++freq[w];
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [w, f] : freq)
    if (f >= min_freq) kept.emplace_back(w, f);
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> vocab{"<pad>", "<eos>", "<unk>"};
  for (auto& [w, f] : kept) vocab.push_back(w);
  return from_vocab(std::move(vocab), max_seq_len);
}

Tokenizer Tokenizer::from_vocab(std::vector<std::string> vocab, std::size_t max_seq_len) {
  if (max_seq_len < 1) throw std::invalid_argument("tokenizer: max_seq_len must be >= 1");
  if (vocab.size() < 3 || vocab[0] != "<pad>" || vocab[1] != "<eos>" || vocab[2] != "<unk>") {
    throw std::invalid_argument("tokenizer: vocabulary must start with <pad>, <eos>, <unk>");
  }
  Tokenizer t;
  t.max_seq_len_ = max_seq_len;
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    if (!t.index_.emplace(vocab[i], static_cast<int>(i)).second) {
      throw std::invalid_argument("tokenizer: duplicate vocabulary entry " + vocab[i]);
    }
  }
  t.vocab_ = std::move(vocab);
  return t;
}

int Tokenizer::id(std::string_view word) const {
  const auto it = index_.find(std::string(word));
  return it == index_.end() ? kUnk : it->second;
}

TokenSeq Tokenizer::encode(std::string_view text, std::size_t budget) const {
  if (budget < 1) throw std::invalid_argument("tokenizer: length budget must be >= 1");
  TokenSeq out;
  for (const auto& w : split_words(text)) {
    if (out.size() + 1 >= budget) break;
    out.push_back(id(w));
  }
  out.push_back(kEos);
  return out;
}

}  // namespace tsa
