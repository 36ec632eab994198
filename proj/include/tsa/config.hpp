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

// Pretraining / evaluation configuration and its strict JSON form.

#include <cstdint>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "tsa/encoders.hpp"
#include "tsa/objectives.hpp"
#include "tsa/prompting.hpp"
#include "tsa/text_bank.hpp"

namespace tsa {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class NegInit { kCopyAtStart, kCopyAfterWarmup };

struct PromptConfig {
  std::size_t length = 4;
  double init_std = 0.02;
  double lr = 1e-2;
  std::size_t steps = 50;
  std::string templ{kDefaultTemplate};
};

struct TrainConfig {
  double lr = 2e-5;
  std::size_t epochs = 2;
  std::size_t batch_size = 64;
  std::size_t top_k = 1;
  std::size_t bank_capacity = kDefaultBankCapacity;
  std::size_t neg_prompt_len = 16;
  double neg_prompt_init_std = 0.02;
  double margin = 1.0;
  double alpha = 0.0;
  double tau_init = kTauInit;
  bool learn_tau = true;
  bool include_positive_in_denominator = true;
  // false drops the matching loss (no retrieval), for ablations.
  bool use_psm = true;
  // Steps trained with the contrastive loss alone before the matching loss
  // switches on.
  std::size_t psm_warmup_steps = 0;
  NegInit neg_encoder_init = NegInit::kCopyAtStart;
  std::size_t warmup_steps = 0;
  std::uint64_t seed = 0;
  std::size_t min_freq = 2;
  EncoderShape encoder;
  std::size_t query_per_class = kDefaultQueryPerClass;
  std::size_t runs = 5;
  PromptConfig prompt;

  // Throws ConfigError naming the offending field.
  void validate() const;
  LossConfig loss(double tau) const;
};

nlohmann::json to_json(const TrainConfig& cfg);
// Missing keys keep their defaults; unknown keys and wrong types throw
// ConfigError with the dotted key path.
TrainConfig config_from_json(const nlohmann::json& j);
TrainConfig load_config(const std::string& path);

// SHA-256 of the canonical (sorted-key, compact) JSON form.
std::string config_hash(const TrainConfig& cfg);

// Dotted path of the first differing field, or "" when equal.
std::string first_config_difference(const TrainConfig& a, const TrainConfig& b);

// JSON Schema (draft 2020-12) describing config files.
nlohmann::json config_schema();

}  // namespace tsa
