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

#include "tsa/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "step.hpp"

namespace tsa {

using nlohmann::json;

json to_json(const LossRecord& r) {
  return {{"step", r.step},          {"L_CL", r.loss.contrastive}, {"L_PSM", r.loss.psm},
          {"L_ML", r.loss.margin},   {"L_SO", r.loss.opposite},    {"total", r.loss.total},
          {"tau", r.tau}};
}

void write_loss_trace(const std::vector<LossRecord>& trace, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw TrainingError("cannot write loss trace " + path.string());
  for (const auto& r : trace) out << to_json(r).dump() << "\n";
}

std::size_t effective_batch_size(const TrainConfig& cfg, std::size_t num_nodes) {
  return std::min(cfg.batch_size, num_nodes);
}

namespace {

template <class T>
std::vector<Matrix<T>> retrieve_from_bank(const TextBank<T>& bank, const std::vector<NodeId>& batch,
                                          const Matrix<T>& texts, std::size_t k) {
  std::vector<Matrix<T>> out(batch.size());
  if (bank.size() == 0) return out;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto res = bank.query_topk(texts.row(i), k, batch[i]);
    Matrix<T> m(res.hits.size(), texts.cols());
    for (std::size_t q = 0; q < res.hits.size(); ++q) {
      std::copy(res.hits[q].embedding.begin(), res.hits[q].embedding.end(), m.row(q).begin());
    }
    out[i] = std::move(m);
  }
  return out;
}

template <class T>
void zero_all(const ParameterRefs<T>& params) {
  for (auto* p : params) p->zero_grad();
}

std::string describe(const LossBreakdown& b, double tau) {
  std::ostringstream os;
  os << "L_CL=" << b.contrastive << " L_PSM=" << b.psm << " L_ML=" << b.margin << " L_SO=" << b.opposite
     << " total=" << b.total << " tau=" << tau;
  return os.str();
}

}  // namespace

PretrainResult pretrain(const TextAttributedGraph& graph, const TrainConfig& cfg,
                        const PretrainOptions& options) {
  cfg.validate();
  graph.validate();
  const std::size_t n = graph.num_nodes();
  if (n < 2) throw TrainingError("pretrain: need at least 2 nodes");

  auto tok = Tokenizer::build(graph.texts, cfg.encoder.max_seq_len, cfg.min_freq);
  std::vector<TokenSeq> sequences;
  sequences.reserve(n);
  for (const auto& t : graph.texts) sequences.push_back(tok.encode(t));
  const auto inputs = make_graph_inputs<float>(graph, tok);

  std::mt19937_64 init_rng(cfg.seed);
  std::mt19937_64 order_rng(cfg.seed ^ 0x9E3779B97F4A7C15ULL);

  PretrainResult result;
  Checkpoint& ck = result.checkpoint;
  ck.config = cfg;
  ck.model = Model<float>(cfg, std::move(tok), init_rng);
  ck.bank = TextBank<float>(cfg.bank_capacity, cfg.encoder.embed_dim);
  Model<float>& model = ck.model;

  auto main_params = model.main_parameters();
  if (!cfg.learn_tau) main_params.pop_back();
  Adam<float> main_opt(main_params, AdamConfig{cfg.lr});
  Adam<float> neg_opt(model.negative_parameters(), AdamConfig{cfg.lr});
  const auto all_params = model.parameters();

  const std::size_t b = effective_batch_size(cfg, n);
  const std::size_t per_epoch = n / b;
  const bool wants_negative = cfg.alpha > 0;
  const double log_min = std::log(kTauMin), log_max = std::log(kTauMax);

  std::size_t step = 0;
  const detail::Retriever<float> retrieve = [&](const std::vector<NodeId>& batch, const Matrix<float>& texts) {
    if (!cfg.use_psm || step <= cfg.psm_warmup_steps) return std::vector<Matrix<float>>(batch.size());
    return retrieve_from_bank(ck.bank, batch, texts, cfg.top_k);
  };

  std::vector<NodeId> perm(n);
  bool neg_trained = false;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(perm.begin(), perm.end(), NodeId{0});
    std::shuffle(perm.begin(), perm.end(), order_rng);
    for (std::size_t s = 0; s < per_epoch; ++s) {
      if (wants_negative && cfg.neg_encoder_init == NegInit::kCopyAfterWarmup && step == cfg.warmup_steps) {
        copy_parameter_values(model.text.parameters(), model.negative.encoder.parameters());
      }
      const bool neg_active =
          wants_negative && (cfg.neg_encoder_init == NegInit::kCopyAtStart || step >= cfg.warmup_steps);
      ++step;
      std::vector<NodeId> batch(perm.begin() + static_cast<std::ptrdiff_t>(s * b),
                                perm.begin() + static_cast<std::ptrdiff_t>((s + 1) * b));
      const double tau = model.tau();
      ag::Tape<float> tape;
      std::optional<detail::Step<float>> st;
      std::string failure;
      try {
        st = detail::build_step<float>(tape, model, inputs, sequences, batch, retrieve, cfg.loss(tau),
                                       neg_active, cfg.learn_tau, options.routing);
      } catch (const std::domain_error& e) {
        // Non-finite or collapsed embeddings: the run has diverged.
        failure = e.what();
      }
      LossRecord rec{step, epoch, st ? st->loss.breakdown : LossBreakdown{}, tau};
      const auto& br = rec.loss;
      if (!failure.empty() || !std::isfinite(br.total) || !std::isfinite(br.contrastive) ||
          !std::isfinite(br.psm) || !std::isfinite(br.margin) || !std::isfinite(br.opposite)) {
        std::string where;
        if (!options.snapshot_dir.empty()) {
          ck.step = step - 1;
          ck.negative_encoder_trained = neg_trained;
          save_checkpoint(ck, options.snapshot_dir);
          write_loss_trace(result.trace, options.snapshot_dir / "loss_trace.jsonl");
          where = " (snapshot written to " + options.snapshot_dir.string() + ")";
        }
        throw TrainingError("pretrain: non-finite loss at step " + std::to_string(step) + ": " +
                            (failure.empty() ? describe(br, tau) : failure) + where);
      }
      zero_all(all_params);
      tape.backward(st->root);
      main_opt.step();
      if (neg_active) {
        neg_opt.step();
        neg_trained = true;
      }
      auto& lt = model.log_tau.value(0, 0);
      lt = static_cast<float>(std::clamp(static_cast<double>(lt), log_min, log_max));
      ck.bank.push_batch(batch, st->texts);
      result.trace.push_back(rec);
      if (options.on_step) options.on_step(rec, model, ck.bank);
    }
  }
  ck.step = step;
  ck.negative_encoder_trained = neg_trained;
  return result;
}

bool GradCheckReport::passed() const {
  return std::all_of(groups.begin(), groups.end(), [](const auto& g) { return g.passed; });
}

const GradCheckGroup* GradCheckReport::find(const std::string& name) const {
  for (const auto& g : groups)
    if (g.name == name) return &g;
  return nullptr;
}

json to_json(const GradCheckReport& r) {
  json groups = json::array();
  for (const auto& g : r.groups) {
    groups.push_back({{"group", g.name},
                      {"entries", g.entries},
                      {"rel_error", g.rel_error},
                      {"max_abs_error", g.max_abs_error},
                      {"passed", g.passed}});
  }
  return {{"h", r.h}, {"threshold", r.threshold}, {"passed", r.passed()}, {"groups", groups}};
}

namespace {

std::string group_of(const std::string& name) {
  if (name.rfind("graph.", 0) == 0) return "graph";
  if (name.rfind("text.", 0) == 0) return "text";
  if (name == "neg_text.prompt") return "neg_prompt";
  if (name.rfind("neg_text.", 0) == 0) return "neg_text";
  return name;
}

}  // namespace

GradCheckReport gradient_check(const TrainConfig& base, const GradCheckOptions& options) {
  SyntheticSpec spec;
  spec.classes = 2;
  spec.nodes_per_class = 4;
  spec.p_intra = 0.7;
  spec.p_inter = 0.2;
  spec.vocab_size = 24;
  spec.tokens_per_text = 6;
  spec.class_token_overlap = 0.3;
  spec.seed = base.seed;
  const auto graph = generate_synthetic(spec);

  TrainConfig cfg = base;
  cfg.encoder.gcn_hidden = 8;
  cfg.encoder.embed_dim = 8;
  cfg.encoder.token_dim = 8;
  cfg.encoder.blocks = 1;
  cfg.encoder.heads = 2;
  cfg.encoder.ffn_mult = 2;
  cfg.encoder.max_seq_len = spec.tokens_per_text + 1 + cfg.neg_prompt_len;
  cfg.min_freq = 1;
  cfg.prompt.length = 0;
  cfg.validate();

  auto tok = Tokenizer::build(graph.texts, cfg.encoder.max_seq_len, cfg.min_freq);
  std::vector<TokenSeq> seqs;
  for (const auto& t : graph.texts) seqs.push_back(tok.encode(t));
  const auto inputs = make_graph_inputs<double>(graph, tok);
  std::mt19937_64 rng(cfg.seed);
  Model<double> model(cfg, tok, rng);
  // Perturb the copy so the negative encoder differs from the text encoder.
  {
    std::normal_distribution<double> jitter(0.0, 0.05);
    for (auto* p : model.negative.encoder.parameters())
      for (auto& v : p->value.storage()) v += jitter(rng);
  }

  std::vector<NodeId> batch(graph.num_nodes());
  std::iota(batch.begin(), batch.end(), NodeId{0});
  TextBank<double> bank(graph.num_nodes(), cfg.encoder.embed_dim);
  bank.push_batch(batch, model.text.encode(seqs));
  std::vector<Matrix<double>> frozen;
  {
    const auto t0 = model.text.encode(seqs);
    frozen = retrieve_from_bank(bank, batch, t0, cfg.top_k);
  }
  const detail::Retriever<double> retrieve = [&](const std::vector<NodeId>&, const Matrix<double>&) {
    return frozen;
  };
  const bool use_neg = cfg.alpha > 0;

  const auto evaluate = [&]() {
    ag::Tape<double> tape;
    return detail::build_step<double>(tape, model, inputs, seqs, batch, retrieve, cfg.loss(model.tau()),
                                      use_neg, cfg.learn_tau, GradientRouting::kFull)
        .loss.value;
  };

  auto params = model.parameters();
  for (auto* p : params) p->zero_grad();
  {
    ag::Tape<double> tape;
    auto st = detail::build_step<double>(tape, model, inputs, seqs, batch, retrieve, cfg.loss(model.tau()),
                                         use_neg, cfg.learn_tau, GradientRouting::kFull);
    tape.backward(st.root);
  }

  GradCheckReport report;
  report.h = options.h;
  report.threshold = options.threshold;
  std::vector<std::string> order;
  struct Acc {
    double diff2 = 0, a2 = 0, n2 = 0, max_abs = 0;
    std::size_t entries = 0;
  };
  std::map<std::string, Acc> acc;
  for (auto* p : params) {
    const auto g = group_of(p->name);
    if (!use_neg && (g == "neg_text" || g == "neg_prompt")) continue;
    if (!cfg.learn_tau && g == "log_tau") continue;
    if (!acc.count(g)) order.push_back(g);
    auto& a = acc[g];
    const double sign = options.corrupt_group && *options.corrupt_group == g ? -1.0 : 1.0;
    for (std::size_t k = 0; k < p->value.size(); ++k) {
      double& w = p->value.data()[k];
      const double orig = w;
      w = orig + options.h;
      const double fp = evaluate();
      w = orig - options.h;
      const double fm = evaluate();
      w = orig;
      const double num = (fp - fm) / (2 * options.h);
      const double ana = sign * p->grad.data()[k];
      a.diff2 += (ana - num) * (ana - num);
      a.a2 += ana * ana;
      a.n2 += num * num;
      a.max_abs = std::max(a.max_abs, std::abs(ana - num));
      ++a.entries;
    }
  }
  for (const auto& name : order) {
    const auto& a = acc[name];
    GradCheckGroup g;
    g.name = name;
    g.entries = a.entries;
    const double denom = std::max({std::sqrt(a.a2), std::sqrt(a.n2), 1e-300});
    g.rel_error = std::sqrt(a.diff2) / denom;
    g.max_abs_error = a.max_abs;
    g.passed = g.rel_error < options.threshold;
    report.groups.push_back(g);
  }
  return report;
}

}  // namespace tsa
