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

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace tsa {

using TokenSeq = std::vector<int>;

// Lower-cased whitespace word tokenizer with a closed vocabulary.
class Tokenizer {
 public:
  static constexpr int kPad = 0;
  static constexpr int kEos = 1;
  static constexpr int kUnk = 2;

  Tokenizer() = default;

  // Vocabulary = reserved ids, then every word with frequency >= min_freq,
  // ordered by descending frequency and then lexicographically.
  static Tokenizer build(std::span<const std::string> corpus, std::size_t max_seq_len,
                         std::size_t min_freq = 2);
  // `vocab` must start with the three reserved entries.
  static Tokenizer from_vocab(std::vector<std::string> vocab, std::size_t max_seq_len);

  static std::vector<std::string> split_words(std::string_view text);

  // Word ids truncated to max_seq_len - 1, then EOS.
  TokenSeq encode(std::string_view text) const { return encode(text, max_seq_len_); }
  // Same with an explicit total length budget (>= 1).
  TokenSeq encode(std::string_view text, std::size_t budget) const;

  int id(std::string_view word) const;
  std::size_t size() const { return vocab_.size(); }
  std::size_t max_seq_len() const { return max_seq_len_; }
  const std::vector<std::string>& vocab() const { return vocab_; }

 private:
  std::vector<std::string> vocab_;
  std::unordered_map<std::string, int> index_;
  std::size_t max_seq_len_ = 0;
};

}  // namespace tsa
