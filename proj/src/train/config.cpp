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

#include "tsa/config.hpp"

#include <cmath>
#include <fstream>

#include "tsa/hash.hpp"

namespace tsa {

using nlohmann::json;

namespace {

const char* pooling_name(Pooling p) { return p == Pooling::kEos ? "eos" : "mean"; }
const char* neg_init_name(NegInit n) {
  return n == NegInit::kCopyAtStart ? "copy_at_start" : "copy_after_warmup";
}

void require(bool ok, const std::string& field, const std::string& what) {
  if (!ok) throw ConfigError("config: " + field + " " + what);
}

// Overlays `in` onto `tmpl`, rejecting keys absent from the template and
// values whose JSON type differs from the template's.
void merge_strict(json& tmpl, const json& in, const std::string& path) {
  if (!in.is_object()) throw ConfigError("config: " + (path.empty() ? "root" : path) + " must be an object");
  for (const auto& [key, val] : in.items()) {
    const std::string field = path.empty() ? key : path + "." + key;
    auto it = tmpl.find(key);
    if (it == tmpl.end()) throw ConfigError("config: unknown key " + field);
    json& slot = *it;
    if (slot.is_object()) {
      merge_strict(slot, val, field);
    } else if (slot.is_boolean()) {
      require(val.is_boolean(), field, "must be a boolean");
      slot = val;
    } else if (slot.is_number_unsigned()) {
      require(val.is_number_unsigned() || (val.is_number_integer() && val.get<std::int64_t>() >= 0),
              field, "must be a non-negative integer");
      slot = val.get<std::uint64_t>();
    } else if (slot.is_number_float()) {
      require(val.is_number(), field, "must be a number");
      slot = val.get<double>();
    } else if (slot.is_string()) {
      require(val.is_string(), field, "must be a string");
      slot = val;
    }
  }
}

json schema_for(const json& tmpl) {
  json props = json::object();
  for (const auto& [key, val] : tmpl.items()) {
    json s;
    if (val.is_object()) {
      s = schema_for(val);
    } else if (val.is_boolean()) {
      s = {{"type", "boolean"}};
    } else if (val.is_number_unsigned()) {
      s = {{"type", "integer"}, {"minimum", 0}};
    } else if (val.is_number_float()) {
      s = {{"type", "number"}};
    } else {
      s = {{"type", "string"}};
    }
    if (!val.is_object()) s["default"] = val;
    props[key] = s;
  }
  return {{"type", "object"}, {"additionalProperties", false}, {"properties", props}};
}

}  // namespace

void TrainConfig::validate() const {
  require(lr > 0 && std::isfinite(lr), "lr", "must be > 0");
  require(epochs >= 1, "epochs", "must be >= 1");
  require(batch_size >= 2, "batch_size", "must be >= 2");
  require(top_k >= 1, "K", "must be >= 1");
  require(bank_capacity >= 1, "bank_capacity", "must be >= 1");
  require(neg_prompt_len >= 1, "M_neg", "must be >= 1");
  require(neg_prompt_init_std >= 0, "neg_prompt_init_std", "must be >= 0");
  require(margin >= 0, "margin", "must be >= 0");
  require(alpha >= 0 && std::isfinite(alpha), "alpha", "must be >= 0");
  require(tau_init >= kTauMin && tau_init <= kTauMax, "tau_init", "must lie in [1e-3, 100]");
  require(min_freq >= 1, "min_freq", "must be >= 1");
  require(encoder.gcn_hidden >= 1, "encoder.gcn_hidden", "must be >= 1");
  require(encoder.embed_dim >= 1, "encoder.embed_dim", "must be >= 1");
  require(encoder.token_dim >= 1, "encoder.token_dim", "must be >= 1");
  require(encoder.blocks >= 1, "encoder.blocks", "must be >= 1");
  require(encoder.heads >= 1 && encoder.token_dim % encoder.heads == 0, "encoder.heads",
          "must divide encoder.token_dim");
  require(encoder.ffn_mult >= 1, "encoder.ffn_mult", "must be >= 1");
  require(encoder.max_seq_len > neg_prompt_len, "encoder.max_seq_len", "must exceed M_neg");
  require(encoder.max_seq_len >= 2, "encoder.max_seq_len", "must be >= 2");
  require(query_per_class >= 1, "query_per_class", "must be >= 1");
  require(runs >= 1, "runs", "must be >= 1");
  require(prompt.init_std >= 0, "prompt.init_std", "must be >= 0");
  require(prompt.lr > 0, "prompt.lr", "must be > 0");
  require(prompt.length < encoder.max_seq_len, "prompt.length", "must be < encoder.max_seq_len");
  try {
    validate_template(prompt.templ);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: prompt.template ") + e.what());
  }
}

LossConfig TrainConfig::loss(double tau) const {
  LossConfig l;
  l.tau = tau;
  l.margin = margin;
  l.alpha = alpha;
  l.top_k = top_k;
  l.include_positive_in_denominator = include_positive_in_denominator;
  return l;
}

json to_json(const TrainConfig& c) {
  const auto u = [](std::size_t v) { return static_cast<std::uint64_t>(v); };
  json enc = {{"gcn_layers", u(c.encoder.gcn_layers)}, {"gcn_hidden", u(c.encoder.gcn_hidden)},
              {"embed_dim", u(c.encoder.embed_dim)},   {"token_dim", u(c.encoder.token_dim)},
              {"blocks", u(c.encoder.blocks)},         {"heads", u(c.encoder.heads)},
              {"ffn_mult", u(c.encoder.ffn_mult)},     {"max_seq_len", u(c.encoder.max_seq_len)},
              {"pooling", pooling_name(c.encoder.pooling)}};
  json prompt = {{"length", u(c.prompt.length)},
                 {"init_std", c.prompt.init_std},
                 {"lr", c.prompt.lr},
                 {"steps", u(c.prompt.steps)},
                 {"template", c.prompt.templ}};
  return {{"lr", c.lr},
          {"epochs", u(c.epochs)},
          {"batch_size", u(c.batch_size)},
          {"K", u(c.top_k)},
          {"bank_capacity", u(c.bank_capacity)},
          {"M_neg", u(c.neg_prompt_len)},
          {"neg_prompt_init_std", c.neg_prompt_init_std},
          {"margin", c.margin},
          {"alpha", c.alpha},
          {"tau_init", c.tau_init},
          {"learn_tau", c.learn_tau},
          {"include_positive_in_denominator", c.include_positive_in_denominator},
          {"use_psm", c.use_psm},
          {"psm_warmup_steps", u(c.psm_warmup_steps)},
          {"neg_encoder_init", neg_init_name(c.neg_encoder_init)},
          {"warmup_steps", u(c.warmup_steps)},
          {"seed", static_cast<std::uint64_t>(c.seed)},
          {"min_freq", u(c.min_freq)},
          {"encoder", enc},
          {"query_per_class", u(c.query_per_class)},
          {"runs", u(c.runs)},
          {"prompt", prompt}};
}

TrainConfig config_from_json(const json& in) {
  json m = to_json(TrainConfig{});
  merge_strict(m, in, "");
  const auto z = [](const json& v) { return static_cast<std::size_t>(v.get<std::uint64_t>()); };
  TrainConfig c;
  c.lr = m["lr"].get<double>();
  c.epochs = z(m["epochs"]);
  c.batch_size = z(m["batch_size"]);
  c.top_k = z(m["K"]);
  c.bank_capacity = z(m["bank_capacity"]);
  c.neg_prompt_len = z(m["M_neg"]);
  c.neg_prompt_init_std = m["neg_prompt_init_std"].get<double>();
  c.margin = m["margin"].get<double>();
  c.alpha = m["alpha"].get<double>();
  c.tau_init = m["tau_init"].get<double>();
  c.learn_tau = m["learn_tau"].get<bool>();
  c.include_positive_in_denominator = m["include_positive_in_denominator"].get<bool>();
  c.use_psm = m["use_psm"].get<bool>();
  c.psm_warmup_steps = z(m["psm_warmup_steps"]);
  const auto ni = m["neg_encoder_init"].get<std::string>();
  if (ni == "copy_at_start") {
    c.neg_encoder_init = NegInit::kCopyAtStart;
  } else if (ni == "copy_after_warmup") {
    c.neg_encoder_init = NegInit::kCopyAfterWarmup;
  } else {
    throw ConfigError("config: neg_encoder_init must be copy_at_start or copy_after_warmup");
  }
  c.warmup_steps = z(m["warmup_steps"]);
  c.seed = m["seed"].get<std::uint64_t>();
  c.min_freq = z(m["min_freq"]);
  const json& e = m["encoder"];
  c.encoder.gcn_layers = z(e["gcn_layers"]);
  c.encoder.gcn_hidden = z(e["gcn_hidden"]);
  c.encoder.embed_dim = z(e["embed_dim"]);
  c.encoder.token_dim = z(e["token_dim"]);
  c.encoder.blocks = z(e["blocks"]);
  c.encoder.heads = z(e["heads"]);
  c.encoder.ffn_mult = z(e["ffn_mult"]);
  c.encoder.max_seq_len = z(e["max_seq_len"]);
  const auto pool = e["pooling"].get<std::string>();
  if (pool == "eos") {
    c.encoder.pooling = Pooling::kEos;
  } else if (pool == "mean") {
    c.encoder.pooling = Pooling::kMean;
  } else {
    throw ConfigError("config: encoder.pooling must be eos or mean");
  }
  c.query_per_class = z(m["query_per_class"]);
  c.runs = z(m["runs"]);
  const json& p = m["prompt"];
  c.prompt.length = z(p["length"]);
  c.prompt.init_std = p["init_std"].get<double>();
  c.prompt.lr = p["lr"].get<double>();
  c.prompt.steps = z(p["steps"]);
  c.prompt.templ = p["template"].get<std::string>();
  c.validate();
  return c;
}

TrainConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("missing file: " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config: " + path + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

std::string config_hash(const TrainConfig& cfg) { return sha256_hex(to_json(cfg).dump()); }

namespace {

std::string diff_json(const json& a, const json& b, const std::string& path) {
  if (a.is_object() && b.is_object()) {
    for (const auto& [k, v] : a.items()) {
      const std::string field = path.empty() ? k : path + "." + k;
      if (!b.contains(k)) return field;
      auto d = diff_json(v, b[k], field);
      if (!d.empty()) return d;
    }
    for (const auto& [k, v] : b.items()) {
      if (!a.contains(k)) return path.empty() ? k : path + "." + k;
    }
    return "";
  }
  return a == b ? "" : path;
}

}  // namespace

std::string first_config_difference(const TrainConfig& a, const TrainConfig& b) {
  return diff_json(to_json(a), to_json(b), "");
}

json config_schema() {
  json s = schema_for(to_json(TrainConfig{}));
  s["$schema"] = "https://json-schema.org/draft/2020-12/schema";
  s["title"] = "TSA training configuration";
  s["properties"]["neg_encoder_init"]["enum"] = {"copy_at_start", "copy_after_warmup"};
  s["properties"]["encoder"]["properties"]["pooling"]["enum"] = {"eos", "mean"};
  return s;
}

}  // namespace tsa
