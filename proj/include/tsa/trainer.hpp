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

// Pretraining loop and the finite-difference gradient check.

#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "tsa/model.hpp"

namespace tsa {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LossRecord {
  std::size_t step = 0;  // 1-based
  std::size_t epoch = 0;
  LossBreakdown loss;
  double tau = 0;
};

// {"step", "L_CL", "L_PSM", "L_ML", "L_SO", "total", "tau"}
nlohmann::json to_json(const LossRecord& r);
void write_loss_trace(const std::vector<LossRecord>& trace, const std::filesystem::path& path);

// min(batch_size, N); every epoch runs floor(N / B) full batches.
std::size_t effective_batch_size(const TrainConfig& cfg, std::size_t num_nodes);

struct PretrainOptions {
  GradientRouting routing = GradientRouting::kTraining;
  // On a non-finite loss the current model is written here before throwing.
  std::filesystem::path snapshot_dir;
  std::function<void(const LossRecord&, const Model<float>&, const TextBank<float>&)> on_step;
};

struct PretrainResult {
  Checkpoint checkpoint;
  std::vector<LossRecord> trace;
};

PretrainResult pretrain(const TextAttributedGraph& graph, const TrainConfig& cfg,
                        const PretrainOptions& options = {});

struct GradCheckGroup {
  std::string name;
  std::size_t entries = 0;
  // ||analytic - numeric|| / max(||analytic||, ||numeric||) over the group.
  double rel_error = 0;
  double max_abs_error = 0;
  bool passed = false;
};

struct GradCheckReport {
  double h = 1e-5;
  double threshold = 1e-4;
  std::vector<GradCheckGroup> groups;
  bool passed() const;
  const GradCheckGroup* find(const std::string& name) const;
};

struct GradCheckOptions {
  double h = 1e-5;
  double threshold = 1e-4;
  // Negates the analytic gradient of this group before comparing.
  std::optional<std::string> corrupt_group;
};

// 8-node micro-instance, d = 8, 64-bit, exact total-objective gradient.
// Loss weights (alpha, margin, K, tau, M_neg) and the seed come from `cfg`.
GradCheckReport gradient_check(const TrainConfig& cfg, const GradCheckOptions& options = {});
nlohmann::json to_json(const GradCheckReport& r);

}  // namespace tsa
