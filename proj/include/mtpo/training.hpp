// Copyright 2026 The mtpo Authors
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

// Training loops and evaluation.
//
// train_single_cost: one predicted cost vector per sample feeds every task
// (all layers shared). train_multi_cost: each task has its own dataset and
// head on top of shared hidden layers; datasets are walked in lockstep.
//
// Per batch: forward, one solver call per (sample, task) inside the decision
// loss, combination of the batch-averaged terms, one optimizer step. After
// each epoch the monitored metric (validation regret by default) drives
// early stopping, and the best parameters seen are kept.

#ifndef MTPO_TRAINING_HPP_
#define MTPO_TRAINING_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mtpo/dataset.hpp"
#include "mtpo/losses.hpp"
#include "mtpo/multitask.hpp"
#include "mtpo/predictor.hpp"

namespace mtpo {

enum class Monitor { kValidationRegret, kTrainingLoss };
std::string to_string(Monitor monitor);
Monitor parse_monitor(const std::string& text);

struct TrainConfig {
  StrategyConfig strategy;
  OptimizerKind optimizer = OptimizerKind::kSgd;
  double learning_rate = 0.1;
  std::size_t batch_size = 32;
  std::size_t max_iterations = 30000;  // optimizer steps, per model
  std::size_t max_epochs = 1000000;    // per model
  std::size_t patience = 5;
  Monitor monitor = Monitor::kValidationRegret;
  std::vector<std::size_t> hidden;     // shared hidden widths
  int pfyl_samples = 1;
  double pfyl_sigma = 1.0;
  double gradnorm_alpha = 0.1;
  double gradnorm_lr = 0.005;
  std::uint64_t seed = 0;
  // Cost labels are divided by this while training and predictions are
  // multiplied back. Unset: mean training cost entry (1 without costs).
  std::optional<double> cost_scale;
  // Starting point for every model instead of a seeded initialization.
  std::optional<PredictorParams> initial_params;

  void validate(PredictorMode mode) const;
};

// Trained models plus the routing from task index to (model, head).
struct Ensemble {
  PredictorMode mode = PredictorMode::kSingleCost;
  std::vector<PredictorParams> members;
  std::vector<std::size_t> member_of_task;
  std::vector<std::optional<std::size_t>> head_of_task;
  std::vector<double> output_scale;  // per member

  std::size_t task_count() const { return member_of_task.size(); }
  CostVector predict(std::span<const double> x, std::size_t task) const;
};

void save_ensemble(const Ensemble& model, const std::filesystem::path& stem,
                   const nlohmann::json& extra = nlohmann::json::object());
Ensemble load_ensemble(const std::filesystem::path& stem,
                       nlohmann::json* extra = nullptr);

struct HistoryRow {
  std::size_t member = 0;
  std::size_t epoch = 0;
  std::string term;
  double loss = 0.0;    // epoch mean of the unweighted term
  double weight = 0.0;  // term weight at the end of the epoch
  double val_metric = 0.0;
  double elapsed_seconds = 0.0;
};

struct TrainResult {
  Ensemble model;
  std::vector<HistoryRow> history;
  std::size_t epochs = 0;      // summed over members
  std::size_t iterations = 0;  // summed over members
  double elapsed_seconds = 0.0;
  std::vector<double> best_metric;  // per member
  bool diverged = false;
  std::string diagnostic;
};

// The dataset carries the tasks. PFYL strategies only ever see the
// solution labels of `train`; `valid` may be solution-only, in which case
// the solution-mismatch rate is monitored instead of regret.
TrainResult train_single_cost(const GraphSpec& graph, const Dataset& train,
                              const Dataset& valid, const TrainConfig& config);

// One single-task dataset per task, all of equal length.
TrainResult train_multi_cost(const GraphSpec& graph, std::span<const Dataset> train,
                             std::span<const Dataset> valid,
                             const TrainConfig& config);

struct TaskMetrics {
  std::size_t task = 0;
  std::size_t samples = 0;
  std::optional<double> regret;             // total over samples
  std::optional<double> normalized_regret;  // total regret / total |z*|
  std::optional<double> cost_mse;           // mean ||c_hat - c||^2
  std::optional<double> mismatch;           // solution-only datasets
};

// Single-cost: one dataset holding every task. Multi-cost: one per task.
// Cost-labeled data yields regret and MSE; solution-only data yields the
// mean fraction of mismatched edges, |w_hat - w*|_1 / (2 |w*|_1).
std::vector<TaskMetrics> evaluate(const Ensemble& model, const GraphSpec& graph,
                                  std::span<const Dataset> test);

// Mean normalized regret (or mismatch) over the listed tasks.
double mean_metric(std::span<const TaskMetrics> metrics);

void write_history_csv(std::span<const HistoryRow> rows,
                       const std::filesystem::path& path);

}  // namespace mtpo

#endif  // MTPO_TRAINING_HPP_
