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

#include "tsa/evaluation.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "tsa/prompting.hpp"

namespace tsa {

using nlohmann::json;

namespace {

void check_labels(const std::vector<std::size_t>& truth, const std::vector<std::size_t>& predicted) {
  if (truth.size() != predicted.size()) {
    throw std::invalid_argument("metrics: " + std::to_string(truth.size()) + " labels vs " +
                                std::to_string(predicted.size()) + " predictions");
  }
  if (truth.empty()) throw std::invalid_argument("metrics: empty label vectors");
}

std::vector<std::string> episode_class_names(const TextAttributedGraph& graph, const Episode& ep) {
  std::vector<std::string> names;
  for (ClassId c : ep.classes) names.push_back(graph.class_names[c]);
  return names;
}

template <class Clock>
double since(typename Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

}  // namespace

double accuracy(const std::vector<std::size_t>& truth, const std::vector<std::size_t>& predicted) {
  check_labels(truth, predicted);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hit += truth[i] == predicted[i];
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

double macro_f1(const std::vector<std::size_t>& truth, const std::vector<std::size_t>& predicted,
                std::size_t num_classes) {
  check_labels(truth, predicted);
  if (num_classes == 0) throw std::invalid_argument("macro_f1: num_classes must be >= 1");
  std::vector<std::size_t> tp(num_classes), fp(num_classes), fn(num_classes);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] >= num_classes || predicted[i] >= num_classes) {
      throw std::invalid_argument("macro_f1: label outside 0..C-1");
    }
    if (truth[i] == predicted[i]) {
      ++tp[truth[i]];
    } else {
      ++fp[predicted[i]];
      ++fn[truth[i]];
    }
  }
  double sum = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    const double denom = 2.0 * tp[c] + fp[c] + fn[c];
    if (denom > 0) sum += 2.0 * tp[c] / denom;
  }
  return sum / static_cast<double>(num_classes);
}

std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) throw std::invalid_argument("mean_std: no values");
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() == 1) return {mean, 0.0};
  double ss = 0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

json to_json(const EvalReport& r) {
  json runs = json::array();
  for (const auto& run : r.runs) {
    runs.push_back({{"seed", run.seed}, {"accuracy", run.accuracy}, {"macro_f1", run.macro_f1}});
  }
  return {{"mode", r.mode},
          {"way", r.way},
          {"shot", r.shot},
          {"prob_average", r.prob_average},
          {"runs", runs},
          {"mean", r.acc_mean},
          {"std", r.acc_std},
          {"f1_mean", r.f1_mean},
          {"f1_std", r.f1_std},
          {"config_hash", r.config_hash},
          {"seconds", r.seconds}};
}

void write_predictions(const EvalReport& r, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write predictions " + path.string());
  for (std::size_t k = 0; k < r.runs.size(); ++k) {
    const auto& run = r.runs[k];
    for (std::size_t i = 0; i < run.nodes.size(); ++i) {
      json line{{"run", k},
                {"seed", run.seed},
                {"node_id", run.nodes[i]},
                {"true_label", run.truth[i]},
                {"predicted", run.predicted[i]}};
      if (i < run.p.size()) line["p"] = run.p[i];
      if (i < run.p_neg.size()) line["p_neg"] = run.p_neg[i];
      out << line.dump() << "\n";
    }
  }
}

EvalReport run_episodes(const TextAttributedGraph& graph, std::size_t way, std::size_t shot,
                        std::size_t runs, std::uint64_t seed, std::size_t query_per_class,
                        const EpisodeClassifier& classify) {
  if (runs < 1) throw std::invalid_argument("evaluation: runs must be >= 1");
  EvalReport rep;
  rep.way = way;
  rep.shot = shot;
  std::vector<double> accs, f1s;
  for (std::size_t r = 0; r < runs; ++r) {
    RunResult run;
    run.seed = seed + r;
    const auto ep = sample_episode(graph, way, shot, run.seed, query_per_class);
    run.predicted = classify(ep, run.seed);
    if (run.predicted.size() != ep.query.size()) {
      throw std::logic_error("evaluation: classifier returned the wrong number of predictions");
    }
    for (const auto& q : ep.query) {
      run.nodes.push_back(q.node);
      run.truth.push_back(q.way);
    }
    run.accuracy = accuracy(run.truth, run.predicted);
    run.macro_f1 = macro_f1(run.truth, run.predicted, way);
    accs.push_back(run.accuracy);
    f1s.push_back(run.macro_f1);
    rep.runs.push_back(std::move(run));
  }
  std::tie(rep.acc_mean, rep.acc_std) = mean_std(accs);
  std::tie(rep.f1_mean, rep.f1_std) = mean_std(f1s);
  return rep;
}

Matrix<float> embed_nodes(Checkpoint& ckpt, const TextAttributedGraph& graph) {
  const auto inputs = make_graph_inputs<float>(graph, ckpt.model.tokenizer);
  if (inputs.features.cols != ckpt.model.graph.input_dim()) {
    throw std::invalid_argument("evaluation: feature width does not match the checkpoint vocabulary");
  }
  return ckpt.model.graph.encode(inputs);
}

namespace {

using Probs = std::vector<std::vector<double>>;

std::vector<double> widen(const std::vector<float>& v) { return {v.begin(), v.end()}; }

std::vector<std::size_t> argmax_predictions(const Episode& ep, const Matrix<float>& node_embs,
                                            const Matrix<float>& class_embs, float tau, Probs& probs) {
  std::vector<std::size_t> out;
  for (const auto& q : ep.query) {
    const auto p = class_probabilities<float>(node_embs.row(q.node), class_embs, tau);
    out.push_back(argmax_lowest<float>(p));
    probs.push_back(widen(p));
  }
  return out;
}

void attach(EvalReport& rep, std::vector<Probs>& p, std::vector<Probs>& p_neg) {
  for (std::size_t r = 0; r < rep.runs.size(); ++r) {
    if (r < p.size()) rep.runs[r].p = std::move(p[r]);
    if (r < p_neg.size()) rep.runs[r].p_neg = std::move(p_neg[r]);
  }
}

}  // namespace

EvalReport evaluate_fewshot(Checkpoint& ckpt, const TextAttributedGraph& graph, std::size_t way,
                            std::size_t shot, std::size_t runs, std::uint64_t seed,
                            const PromptConfig& prompt, std::size_t query_per_class) {
  if (shot < 1) throw std::invalid_argument("evaluate_fewshot: shot must be >= 1 (use zero-shot evaluation for 0)");
  const auto t0 = std::chrono::steady_clock::now();
  const auto node_embs = embed_nodes(ckpt, graph);
  const float tau = static_cast<float>(ckpt.model.tau());
  auto& model = ckpt.model;
  std::vector<Probs> probs, neg_probs;
  const EpisodeClassifier classify = [&](const Episode& ep, std::uint64_t run_seed) {
    const auto names = episode_class_names(graph, ep);
    PromptState<float> state(prompt.templ, prompt.length, model.text.shape().token_dim,
                             static_cast<float>(prompt.init_std), run_seed);
    if (prompt.length > 0) {
      PromptTuneConfig tc;
      tc.steps = prompt.steps;
      tc.adam = AdamConfig{prompt.lr};
      prompt_tune(ep, node_embs, names, state, model.tokenizer, model.text, tau, tc);
    }
    const auto class_embs = build_few_shot_class_embeddings(names, state, model.tokenizer, model.text);
    return argmax_predictions(ep, node_embs, class_embs, tau, probs.emplace_back());
  };
  auto rep = run_episodes(graph, way, shot, runs, seed, query_per_class, classify);
  attach(rep, probs, neg_probs);
  rep.mode = "fewshot";
  rep.config_hash = config_hash(ckpt.config);
  rep.seconds = since<std::chrono::steady_clock>(t0);
  return rep;
}

EvalReport evaluate_zeroshot(Checkpoint& ckpt, const TextAttributedGraph& graph, std::size_t way,
                             std::size_t runs, std::uint64_t seed, bool prob_average,
                             const std::string& templ, std::size_t query_per_class) {
  if (prob_average && !ckpt.negative_encoder_trained) {
    throw std::invalid_argument(
        "evaluate_zeroshot: probability averaging needs a negative encoder trained with alpha > 0");
  }
  const auto t0 = std::chrono::steady_clock::now();
  const auto node_embs = embed_nodes(ckpt, graph);
  const float tau = static_cast<float>(ckpt.model.tau());
  auto& model = ckpt.model;
  std::vector<Probs> probs, neg_probs;
  const EpisodeClassifier classify = [&](const Episode& ep, std::uint64_t) {
    const auto names = episode_class_names(graph, ep);
    const auto pos = build_zero_shot_class_embeddings(names, templ, model.tokenizer, model.text);
    auto& p = probs.emplace_back();
    auto out = argmax_predictions(ep, node_embs, pos, tau, p);
    if (!prob_average) return out;
    const auto neg = build_negative_class_embeddings(names, templ, model.tokenizer, model.negative);
    auto& pn = neg_probs.emplace_back();
    for (std::size_t i = 0; i < ep.query.size(); ++i) {
      const auto row = node_embs.row(ep.query[i].node);
      const auto pf = class_probabilities<float>(row, pos, tau), pnf = class_probabilities<float>(row, neg, tau);
      out[i] = probability_average<float>(pf, pnf).label;
      pn.push_back(widen(pnf));
    }
    return out;
  };
  auto rep = run_episodes(graph, way, 0, runs, seed, query_per_class, classify);
  attach(rep, probs, neg_probs);
  rep.mode = "zeroshot";
  rep.prob_average = prob_average;
  rep.config_hash = config_hash(ckpt.config);
  rep.seconds = since<std::chrono::steady_clock>(t0);
  return rep;
}

}  // namespace tsa
