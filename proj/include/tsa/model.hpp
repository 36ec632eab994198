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

// The full parameter set (graph encoder, text encoder, negative encoder,
// temperature) and its on-disk checkpoint.

#include <cmath>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <string>

#include "tsa/config.hpp"
#include "tsa/encoders.hpp"
#include "tsa/text_bank.hpp"
#include "tsa/tokenizer.hpp"

namespace tsa {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <class T>
struct Model {
  Tokenizer tokenizer;
  GraphEncoder<T> graph;
  TextEncoder<T> text;
  NegativeTextEncoder<T> negative;
  // 1 x 1, log of the temperature.
  Parameter<T> log_tau;

  Model() = default;
  // Fresh initialisation from `rng`; the negative encoder starts as a copy
  // of the text encoder.
  Model(const TrainConfig& cfg, Tokenizer tok, std::mt19937_64& rng);

  double tau() const { return std::exp(static_cast<double>(log_tau.value(0, 0))); }

  // Graph, text, negative encoder (prompt last), log_tau.
  ParameterRefs<T> parameters();
  ParameterRefs<T> main_parameters();
  ParameterRefs<T> negative_parameters();
};

// SHA-256 over the concatenated raw parameter values.
template <class T>
std::string parameter_hash(const ParameterRefs<T>& params);

struct Checkpoint {
  TrainConfig config;
  Model<float> model;
  TextBank<float> bank;
  std::size_t step = 0;
  // False when alpha == 0: the negative encoder is stored but untrained.
  bool negative_encoder_trained = false;
};

// Writes <dir>/manifest.json, <dir>/params.bin and <dir>/bank.{bin,json}.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir);

// Throws CheckpointError on missing/corrupt files, and when `expected` is
// given and differs from the stored config (naming the first divergent field).
Checkpoint load_checkpoint(const std::filesystem::path& dir, const TrainConfig* expected = nullptr);

}  // namespace tsa
