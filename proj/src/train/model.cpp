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

#include "tsa/model.hpp"

#include <cstring>
#include <fstream>

#include "tsa/hash.hpp"

namespace tsa {

using nlohmann::json;

template <class T>
Model<T>::Model(const TrainConfig& cfg, Tokenizer tok, std::mt19937_64& rng)
    : tokenizer(std::move(tok)) {
  graph = GraphEncoder<T>(cfg.encoder, tokenizer.size(), rng);
  text = TextEncoder<T>(cfg.encoder, tokenizer.size(), rng);
  negative = NegativeTextEncoder<T>(text, cfg.neg_prompt_len, static_cast<T>(cfg.neg_prompt_init_std), rng);
  log_tau = Parameter<T>("log_tau", Matrix<T>(1, 1, static_cast<T>(std::log(cfg.tau_init))));
}

template <class T>
ParameterRefs<T> Model<T>::main_parameters() {
  auto out = graph.parameters();
  for (auto* p : text.parameters()) out.push_back(p);
  out.push_back(&log_tau);
  return out;
}

template <class T>
ParameterRefs<T> Model<T>::negative_parameters() {
  return negative.parameters();
}

template <class T>
ParameterRefs<T> Model<T>::parameters() {
  auto out = graph.parameters();
  for (auto* p : text.parameters()) out.push_back(p);
  for (auto* p : negative.parameters()) out.push_back(p);
  out.push_back(&log_tau);
  return out;
}

template <class T>
std::string parameter_hash(const ParameterRefs<T>& params) {
  std::vector<std::byte> bytes;
  for (const auto* p : params) {
    const auto* b = reinterpret_cast<const std::byte*>(p->value.data());
    bytes.insert(bytes.end(), b, b + p->value.size() * sizeof(T));
  }
  return sha256_hex(bytes);
}

template struct Model<float>;
template struct Model<double>;
template std::string parameter_hash<float>(const ParameterRefs<float>&);
template std::string parameter_hash<double>(const ParameterRefs<double>&);

namespace {

constexpr const char* kFormat = "tsa-checkpoint-1";

std::vector<std::byte> read_all(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw CheckpointError("checkpoint: missing file " + p.string());
  std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<std::byte> out(buf.size());
  if (!buf.empty()) std::memcpy(out.data(), buf.data(), buf.size());
  return out;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto& model = const_cast<Model<float>&>(ckpt.model);
  const auto params = model.parameters();
  json entries = json::array();
  std::vector<std::byte> blob;
  for (const auto* p : params) {
    entries.push_back({{"name", p->name},
                       {"rows", p->value.rows()},
                       {"cols", p->value.cols()},
                       {"offset", blob.size()}});
    const auto* b = reinterpret_cast<const std::byte*>(p->value.data());
    blob.insert(blob.end(), b, b + p->value.size() * sizeof(float));
  }
  {
    std::ofstream out(dir / "params.bin", std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
    if (!out) throw CheckpointError("checkpoint: failed to write params.bin");
  }
  ckpt.bank.dump(dir / "bank");
  json m = {{"format", kFormat},
            {"dtype", "float32"},
            {"config", to_json(ckpt.config)},
            {"config_hash", config_hash(ckpt.config)},
            {"vocab", model.tokenizer.vocab()},
            {"max_seq_len", model.tokenizer.max_seq_len()},
            {"step", ckpt.step},
            {"negative_encoder_trained", ckpt.negative_encoder_trained},
            {"params", entries},
            {"params_bytes", blob.size()},
            {"params_sha256", sha256_hex(blob)}};
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  out << m.dump(2) << "\n";
  if (!out) throw CheckpointError("checkpoint: failed to write manifest.json");
}

Checkpoint load_checkpoint(const std::filesystem::path& dir, const TrainConfig* expected) {
  const auto manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw CheckpointError("checkpoint: missing file " + manifest_path.string());
  json m;
  try {
    m = json::parse(in);
  } catch (const json::parse_error& e) {
    throw CheckpointError("checkpoint: corrupt manifest.json: " + std::string(e.what()));
  }
  try {
    if (m.at("format").get<std::string>() != kFormat) throw CheckpointError("checkpoint: unknown format");
    Checkpoint ck;
    ck.config = config_from_json(m.at("config"));
    if (config_hash(ck.config) != m.at("config_hash").get<std::string>()) {
      throw CheckpointError("checkpoint: config hash mismatch (manifest edited or corrupt)");
    }
    if (expected) {
      const auto field = first_config_difference(*expected, ck.config);
      if (!field.empty()) throw CheckpointError("checkpoint: config mismatch in field " + field);
    }
    const auto blob = read_all(dir / "params.bin");
    const auto want_bytes = m.at("params_bytes").get<std::size_t>();
    if (blob.size() < want_bytes) {
      throw CheckpointError("checkpoint: truncated params.bin (" + std::to_string(blob.size()) + " of " +
                            std::to_string(want_bytes) + " bytes)");
    }
    if (blob.size() != want_bytes) throw CheckpointError("checkpoint: params.bin has trailing bytes");
    if (sha256_hex(blob) != m.at("params_sha256").get<std::string>()) {
      throw CheckpointError("checkpoint: params.bin checksum mismatch");
    }
    auto tok = Tokenizer::from_vocab(m.at("vocab").get<std::vector<std::string>>(),
                                     m.at("max_seq_len").get<std::size_t>());
    std::mt19937_64 rng(0);
    ck.model = Model<float>(ck.config, std::move(tok), rng);
    const auto params = ck.model.parameters();
    const auto& entries = m.at("params");
    if (entries.size() != params.size()) throw CheckpointError("checkpoint: parameter count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto& e = entries[i];
      auto& p = *params[i];
      if (e.at("name").get<std::string>() != p.name || e.at("rows").get<std::size_t>() != p.value.rows() ||
          e.at("cols").get<std::size_t>() != p.value.cols()) {
        throw CheckpointError("checkpoint: parameter layout mismatch at " + p.name);
      }
      const auto off = e.at("offset").get<std::size_t>();
      const std::size_t n = p.value.size() * sizeof(float);
      if (off + n > blob.size()) throw CheckpointError("checkpoint: truncated params.bin at " + p.name);
      if (n > 0) std::memcpy(p.value.data(), blob.data() + off, n);
    }
    try {
      ck.bank = TextBank<float>::load(dir / "bank");
    } catch (const std::exception& e) {
      throw CheckpointError(std::string("checkpoint: ") + e.what());
    }
    ck.step = m.at("step").get<std::size_t>();
    ck.negative_encoder_trained = m.at("negative_encoder_trained").get<bool>();
    return ck;
  } catch (const json::exception& e) {
    throw CheckpointError("checkpoint: malformed manifest.json: " + std::string(e.what()));
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("checkpoint: ") + e.what());
  }
}

}  // namespace tsa
