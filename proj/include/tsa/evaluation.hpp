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

// Episodic few-/zero-shot evaluation and classification metrics.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "tsa/model.hpp"

namespace tsa {

double accuracy(const std::vector<std::size_t>& truth, const std::vector<std::size_t>& predicted);

// Unweighted mean of per-class F1 over classes 0..C-1. A class absent from
// both truth and prediction contributes 0.
double macro_f1(const std::vector<std::size_t>& truth, const std::vector<std::size_t>& predicted,
                std::size_t num_classes);

// Mean and sample standard deviation (0 for a single value).
std::pair<double, double> mean_std(const std::vector<double>& values);

struct RunResult {
  std::uint64_t seed = 0;
  double accuracy = 0;
  double macro_f1 = 0;
  std::vector<NodeId> nodes;
  std::vector<std::size_t> truth;      // episode-local labels
  std::vector<std::size_t> predicted;  // episode-local labels
  // Per query node, when the evaluator records them: class probabilities and,
  // for probability averaging, the negative-encoder probabilities.
  std::vector<std::vector<double>> p, p_neg;
};

struct EvalReport {
  std::string mode;  // "fewshot" or "zeroshot"
  std::size_t way = 0;
  std::size_t shot = 0;
  bool prob_average = false;
  std::vector<RunResult> runs;
  double acc_mean = 0, acc_std = 0;
  double f1_mean = 0, f1_std = 0;
  std::string config_hash;
  double seconds = 0;
};

// {"runs": [{seed, accuracy, macro_f1}], "mean", "std" (accuracy),
// "f1_mean", "f1_std", "config_hash", "seconds", plus the episode settings.
nlohmann::json to_json(const EvalReport& r);
// One JSON line per query node: run, seed, node_id, true_label, predicted, and
// p / p_neg when recorded.
void write_predictions(const EvalReport& r, const std::filesystem::path& path);

// Predicted episode-local labels for episode.query, in order.
using EpisodeClassifier = std::function<std::vector<std::size_t>(const Episode&, std::uint64_t seed)>;

// Run r samples its episode with seed + r. Fills runs and aggregates;
// timing and labelling fields are left for the caller.
EvalReport run_episodes(const TextAttributedGraph& graph, std::size_t way, std::size_t shot,
                        std::size_t runs, std::uint64_t seed, std::size_t query_per_class,
                        const EpisodeClassifier& classify);

// Unit graph-encoder embeddings of every node of `graph`, tokenized with the
// checkpoint vocabulary.
Matrix<float> embed_nodes(Checkpoint& ckpt, const TextAttributedGraph& graph);

// Per run: sample a C-way K-shot episode, tune a fresh prompt (length
// prompt.length, seeded by the run seed) on the support set, classify the
// query by the highest class probability. prompt.length == 0 skips tuning
// and uses the bare template.
EvalReport evaluate_fewshot(Checkpoint& ckpt, const TextAttributedGraph& graph, std::size_t way,
                            std::size_t shot, std::size_t runs, std::uint64_t seed,
                            const PromptConfig& prompt, std::size_t query_per_class);

// Classifies each query node from class-name descriptions only, by the plain
// class probability or, with prob_average, by the positive/negative average.
// Throws std::invalid_argument when prob_average is requested and the
// checkpoint's negative encoder was never trained.
EvalReport evaluate_zeroshot(Checkpoint& ckpt, const TextAttributedGraph& graph, std::size_t way,
                             std::size_t runs, std::uint64_t seed, bool prob_average,
                             const std::string& templ, std::size_t query_per_class);

}  // namespace tsa
