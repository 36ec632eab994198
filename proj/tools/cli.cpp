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

#include "cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "tsa/config.hpp"
#include "tsa/evaluation.hpp"
#include "tsa/graph.hpp"
#include "tsa/hash.hpp"
#include "tsa/model.hpp"
#include "tsa/trainer.hpp"

namespace tsa::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string one_line(std::string s) {
  for (auto& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

std::string strip_prefix(std::string s, std::string_view prefix) {
  if (s.rfind(prefix, 0) == 0) s.erase(0, prefix.size());
  return s;
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("missing file: " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + " is not valid JSON: " + e.what());
  }
}

SyntheticSpec synthetic_spec_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("synthetic spec must be a JSON object");
  SyntheticSpec s;
  for (const auto& [key, v] : j.items()) {
    const auto uint = [&](std::size_t& dst) {
      if (!v.is_number_unsigned()) throw ConfigError("synthetic spec: " + key + " must be a non-negative integer");
      dst = v.get<std::size_t>();
    };
    const auto num = [&](double& dst) {
      if (!v.is_number()) throw ConfigError("synthetic spec: " + key + " must be a number");
      dst = v.get<double>();
    };
    if (key == "classes") {
      uint(s.classes);
    } else if (key == "nodes_per_class") {
      uint(s.nodes_per_class);
    } else if (key == "p_intra") {
      num(s.p_intra);
    } else if (key == "p_inter") {
      num(s.p_inter);
    } else if (key == "vocab_size") {
      uint(s.vocab_size);
    } else if (key == "tokens_per_text") {
      uint(s.tokens_per_text);
    } else if (key == "class_token_overlap") {
      num(s.class_token_overlap);
    } else if (key == "seed") {
      if (!v.is_number_unsigned()) throw ConfigError("synthetic spec: seed must be a non-negative integer");
      s.seed = v.get<std::uint64_t>();
    } else {
      throw ConfigError("synthetic spec: unknown key " + key);
    }
  }
  return s;
}

json synthetic_spec_to_json(const SyntheticSpec& s) {
  return {{"classes", s.classes},
          {"nodes_per_class", s.nodes_per_class},
          {"p_intra", s.p_intra},
          {"p_inter", s.p_inter},
          {"vocab_size", s.vocab_size},
          {"tokens_per_text", s.tokens_per_text},
          {"class_token_overlap", s.class_token_overlap},
          {"seed", s.seed}};
}

json dataset_hashes(const fs::path& dir) {
  json h = json::object();
  for (const char* f : {"nodes.jsonl", "edges.tsv", "classes.json"}) {
    if (fs::exists(dir / f)) h[f] = sha256_file(dir / f);
  }
  return h;
}

json checkpoint_hashes(const fs::path& dir) {
  json h = json::object();
  for (const char* f : {"manifest.json", "params.bin", "bank.bin", "bank.json"}) {
    if (fs::exists(dir / f)) h[f] = sha256_file(dir / f);
  }
  return h;
}

fs::path default_out(const std::string& command, const std::string& input_hash) {
  const char* root = std::getenv("TSA_OUT_DIR");
  const fs::path base = root && *root ? fs::path(root) : fs::path("runs");
  return base / (command + "-" + input_hash.substr(0, 12));
}

// Creates the output directory, refusing to reuse a non-empty one.
void prepare_out(const fs::path& dir, bool force) {
  if (fs::exists(dir) && !fs::is_directory(dir)) {
    throw UsageError("output path exists and is not a directory: " + dir.string());
  }
  if (fs::exists(dir) && !fs::is_empty(dir) && !force) {
    throw UsageError("output directory " + dir.string() + " already exists (pass --force to overwrite)");
  }
  fs::create_directories(dir);
}

struct Manifest {
  std::string command;
  std::string config_path;
  json config = nullptr;
  json inputs = json::object();
  json args = json::object();

  std::string input_hash() const {
    return sha256_hex(json{{"command", command}, {"config", config}, {"inputs", inputs}, {"args", args}}.dump());
  }
};

fs::path start_run(const Manifest& m, const std::string& out_flag, bool force) {
  const auto hash = m.input_hash();
  const fs::path dir = out_flag.empty() ? default_out(m.command, hash) : fs::path(out_flag);
  prepare_out(dir, force);
  json j = {{"command", m.command},
            {"config_path", m.config_path},
            {"config", m.config},
            {"output_dir", dir.string()},
            {"args", m.args},
            {"inputs", m.inputs},
            {"input_hash", hash}};
  std::ofstream out(dir / "run_manifest.json", std::ios::trunc);
  out << j.dump(2) << "\n";
  if (!out) throw std::runtime_error("cannot write " + (dir / "run_manifest.json").string());
  return dir;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  out << j.dump(2) << "\n";
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

struct ConfigOverrides {
  std::string path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs, batch_size;
  std::optional<double> lr, alpha;

  void bind(CLI::App* app) {
    app->add_option("--config", path, "JSON config file");
    app->add_option("--seed", seed, "override config seed");
    app->add_option("--epochs", epochs, "override config epochs");
    app->add_option("--batch-size", batch_size, "override config batch_size");
    app->add_option("--lr", lr, "override config lr");
    app->add_option("--alpha", alpha, "override config alpha");
  }

  TrainConfig resolve() const {
    TrainConfig c = path.empty() ? TrainConfig{} : load_config(path);
    if (seed) c.seed = *seed;
    if (epochs) c.epochs = *epochs;
    if (batch_size) c.batch_size = *batch_size;
    if (lr) c.lr = *lr;
    if (alpha) c.alpha = *alpha;
    c.validate();
    return c;
  }
};

std::string csv_number(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << std::fixed << v;
  return os.str();
}

}  // namespace

int execute(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Text semantics augmentation for few- and zero-shot node classification", "tsa"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  bool force = false;
  std::string out_flag, data_dir, ckpt_dir, spec_path, corrupt, templ;
  std::size_t way = 5, shot = 5, runs = 0, qpc = 0;
  std::optional<std::size_t> prompt_len, prompt_steps;
  std::optional<double> prompt_lr;
  std::uint64_t eval_seed = 0;
  bool prob_average = false;
  std::vector<std::size_t> ways{2, 3, 4, 5}, shots{1, 3, 5};
  ConfigOverrides ov;

  const auto add_eval_flags = [&](CLI::App* c) {
    c->add_option("--ckpt", ckpt_dir, "checkpoint directory")->required();
    c->add_option("--data", data_dir, "dataset directory")->required();
    c->add_option("--runs", runs, "episodes (default: config runs)");
    c->add_option("--seed", eval_seed, "first episode seed");
    c->add_option("--query-per-class", qpc, "query nodes per class (default: config)");
    c->add_option("--out", out_flag, "output directory");
    c->add_flag("--force", force, "reuse a non-empty output directory");
  };
  const auto add_prompt_flags = [&](CLI::App* c) {
    c->add_option("--prompt-len", prompt_len, "learnable prompt length M");
    c->add_option("--prompt-steps", prompt_steps, "prompt tuning steps");
    c->add_option("--prompt-lr", prompt_lr, "prompt tuning learning rate");
  };

  auto* gen = app.add_subcommand("gen-synthetic", "write a synthetic block-model dataset");
  gen->add_option("--spec", spec_path, "synthetic spec JSON (defaults when omitted)");
  gen->add_option("--out", out_flag, "dataset directory");
  gen->add_flag("--force", force, "reuse a non-empty output directory");

  auto* pre = app.add_subcommand("pretrain", "pretrain encoders and write a checkpoint");
  pre->add_option("--data", data_dir, "dataset directory")->required();
  pre->add_option("--out", out_flag, "checkpoint directory");
  pre->add_flag("--force", force, "reuse a non-empty output directory");
  ov.bind(pre);

  auto* few = app.add_subcommand("eval-fewshot", "C-way K-shot evaluation with prompt tuning");
  add_eval_flags(few);
  add_prompt_flags(few);
  few->add_option("--way", way, "classes per episode");
  few->add_option("--shot", shot, "support nodes per class (>= 1)");

  auto* zero = app.add_subcommand("eval-zeroshot", "class-name-only evaluation");
  add_eval_flags(zero);
  zero->add_option("--way", way, "classes per episode");
  zero->add_flag("--prob-average", prob_average, "combine with the negative encoder");
  zero->add_option("--template", templ, "class description template");

  auto* gc = app.add_subcommand("grad-check", "finite-difference gradient check on a micro-instance");
  ov.bind(gc);
  gc->add_option("--corrupt", corrupt, "negate this group's analytic gradient (sentinel)");

  auto* bs = app.add_subcommand("bank-stats", "text bank fill level and similarity histogram");
  bs->add_option("--ckpt", ckpt_dir, "checkpoint directory")->required();

  auto* sw = app.add_subcommand("sweep", "few-shot accuracy over way/shot grids as CSV");
  add_eval_flags(sw);
  add_prompt_flags(sw);
  sw->add_option("--ways", ways, "comma-separated way values")->delimiter(',');
  sw->add_option("--shots", shots, "comma-separated shot values")->delimiter(',');

  std::vector<const char*> argv{"tsa"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: usage: " << one_line(e.what()) << "\n";
    return kExitUsage;
  }

  try {
    if (gen->parsed()) {
      Manifest m;
      m.command = "gen-synthetic";
      m.config_path = spec_path;
      const SyntheticSpec spec = spec_path.empty() ? SyntheticSpec{} : synthetic_spec_from_json(read_json_file(spec_path));
      spec.validate();
      m.config = synthetic_spec_to_json(spec);
      const auto dir = start_run(m, out_flag, force);
      const auto g = generate_synthetic(spec);
      save_dataset(g, dir);
      out << json{{"out", dir.string()}, {"nodes", g.num_nodes()}, {"edges", g.edges.size()},
                  {"classes", g.num_classes()}}.dump()
          << "\n";
      return kExitOk;
    }

    if (pre->parsed()) {
      Manifest m;
      m.command = "pretrain";
      m.config_path = ov.path;
      const auto cfg = ov.resolve();
      m.config = to_json(cfg);
      m.inputs = {{"data", dataset_hashes(data_dir)}};
      const auto graph = load_dataset(data_dir);
      const auto dir = start_run(m, out_flag, force);
      PretrainOptions opts;
      opts.snapshot_dir = dir / "nonfinite_snapshot";
      const auto res = pretrain(graph, cfg, opts);
      save_checkpoint(res.checkpoint, dir);
      write_loss_trace(res.trace, dir / "loss_trace.jsonl");
      out << json{{"out", dir.string()},
                  {"steps", res.checkpoint.step},
                  {"final_loss", res.trace.empty() ? 0.0 : res.trace.back().loss.total},
                  {"params_sha256", sha256_file(dir / "params.bin")}}
                 .dump()
          << "\n";
      return kExitOk;
    }

    if (few->parsed() || zero->parsed() || sw->parsed()) {
      if (few->parsed() && shot == 0) {
        throw UsageError("--shot must be >= 1; use eval-zeroshot for zero-shot evaluation");
      }
      auto ck = load_checkpoint(ckpt_dir);
      const auto graph = load_dataset(data_dir);
      PromptConfig pc = ck.config.prompt;
      if (prompt_len) pc.length = *prompt_len;
      if (prompt_steps) pc.steps = *prompt_steps;
      if (prompt_lr) pc.lr = *prompt_lr;
      if (!templ.empty()) pc.templ = templ;
      validate_template(pc.templ);
      const std::size_t n_runs = runs ? runs : ck.config.runs;
      const std::size_t n_query = qpc ? qpc : ck.config.query_per_class;
      if (zero->parsed() && prob_average && !ck.negative_encoder_trained) {
        throw UsageError("--prob-average needs a checkpoint pretrained with alpha > 0");
      }

      Manifest m;
      m.command = few->parsed() ? "eval-fewshot" : zero->parsed() ? "eval-zeroshot" : "sweep";
      m.config = to_json(ck.config);
      m.inputs = {{"data", dataset_hashes(data_dir)}, {"checkpoint", checkpoint_hashes(ckpt_dir)}};
      m.args = {{"runs", n_runs}, {"seed", eval_seed}, {"query_per_class", n_query}};
      if (few->parsed() || sw->parsed()) {
        m.args["prompt"] = {{"length", pc.length}, {"steps", pc.steps}, {"lr", pc.lr}, {"template", pc.templ}};
      }
      if (few->parsed()) {
        m.args["way"] = way;
        m.args["shot"] = shot;
      } else if (zero->parsed()) {
        m.args["way"] = way;
        m.args["prob_average"] = prob_average;
        m.args["template"] = pc.templ;
      } else {
        m.args["ways"] = ways;
        m.args["shots"] = shots;
      }
      const auto dir = start_run(m, out_flag, force);

      if (sw->parsed()) {
        std::ostringstream csv;
        csv << "way,shot,acc_mean,acc_std,f1_mean,f1_std\n";
        for (std::size_t w : ways) {
          for (std::size_t s : shots) {
            if (s == 0) throw UsageError("--shots values must be >= 1");
            const auto rep = evaluate_fewshot(ck, graph, w, s, n_runs, eval_seed, pc, n_query);
            csv << w << "," << s << "," << csv_number(rep.acc_mean) << "," << csv_number(rep.acc_std) << ","
                << csv_number(rep.f1_mean) << "," << csv_number(rep.f1_std) << "\n";
          }
        }
        std::ofstream f(dir / "sweep.csv", std::ios::trunc);
        f << csv.str();
        out << csv.str();
        return kExitOk;
      }

      const auto rep = few->parsed()
                           ? evaluate_fewshot(ck, graph, way, shot, n_runs, eval_seed, pc, n_query)
                           : evaluate_zeroshot(ck, graph, way, n_runs, eval_seed, prob_average, pc.templ, n_query);
      write_json(dir / "eval_report.json", to_json(rep));
      write_predictions(rep, dir / "predictions.jsonl");
      out << to_json(rep).dump() << "\n";
      return kExitOk;
    }

    if (gc->parsed()) {
      const auto cfg = ov.resolve();
      GradCheckOptions opts;
      if (!corrupt.empty()) opts.corrupt_group = corrupt;
      const auto rep = gradient_check(cfg, opts);
      out << to_json(rep).dump() << "\n";
      if (!rep.passed()) {
        std::string bad;
        for (const auto& g : rep.groups) {
          if (!g.passed) bad += (bad.empty() ? "" : ",") + g.name;
        }
        err << "error: grad-check: relative error >= " << rep.threshold << " in groups " << bad << "\n";
        return kExitFailure;
      }
      return kExitOk;
    }

    if (bs->parsed()) {
      const auto ck = load_checkpoint(ckpt_dir);
      const auto st = bank_stats(ck.bank);
      json edges = json::array();
      for (std::size_t i = 0; i <= st.histogram.size(); ++i) {
        edges.push_back(-1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(st.histogram.size()));
      }
      out << json{{"size", st.size},
                  {"capacity", st.capacity},
                  {"fill", st.fill},
                  {"total_pushed", ck.bank.total_pushed()},
                  {"mean_top1_similarity", st.mean_top1},
                  {"histogram", st.histogram},
                  {"bin_edges", edges}}
                 .dump()
          << "\n";
      return kExitOk;
    }
  } catch (const UsageError& e) {
    err << "error: usage: " << one_line(e.what()) << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "error: config: " << one_line(strip_prefix(e.what(), "config: ")) << "\n";
    return kExitUsage;
  } catch (const DataError& e) {
    err << "error: data: " << one_line(e.what()) << "\n";
    return kExitFailure;
  } catch (const CheckpointError& e) {
    err << "error: checkpoint: " << one_line(e.what()) << "\n";
    return kExitFailure;
  } catch (const TrainingError& e) {
    err << "error: training: " << one_line(e.what()) << "\n";
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "error: runtime: " << one_line(e.what()) << "\n";
    return kExitFailure;
  }
  err << "error: usage: no subcommand given\n";
  return kExitUsage;
}

}  // namespace tsa::cli
