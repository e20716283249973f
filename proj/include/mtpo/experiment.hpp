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

// Experiment runner behind the command-line tool.
//
// Directory layout under a run root:
//
//   config.json, graph.json, task_<t>.json
//   data/holdout.csv                 independent test set (cost labels)
//   data/seed_<s>/{train,valid,test}.csv
//   runs/<strategy>/seed_<s>/model.{json,bin}, history.csv, summary.json,
//                            results.csv
//
// Multi-cost data keeps one file per task: train_<t>.csv and so on.
// Every file carries the hash of the data-defining part of the config and
// loaders refuse files whose hash does not match.

#ifndef MTPO_EXPERIMENT_HPP_
#define MTPO_EXPERIMENT_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mtpo/datagen.hpp"
#include "mtpo/dataset.hpp"
#include "mtpo/multitask.hpp"
#include "mtpo/training.hpp"

namespace mtpo {

struct ExperimentConfig {
  GenConfig gen;
  std::vector<Strategy> strategies;  // empty: every strategy the loss allows
  DecisionLoss loss = DecisionLoss::kSpoPlus;
  double mse_weight = 1.0;
  TrainConfig train;                 // strategy and seed are filled per run
  LabelKind labels = LabelKind::kCost;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::size_t n_train = 100;
  std::size_t n_test = 1000;
  double train_fraction = 0.8;
  double valid_fraction = 0.1;
  std::vector<std::size_t> sweep_n_train;
  std::vector<std::size_t> sweep_task_count;
  std::filesystem::path out = "runs";

  void validate() const;
  std::vector<Strategy> resolved_strategies() const;
  TrainConfig train_config(Strategy strategy, std::uint64_t seed) const;
  // Hash of everything that determines the generated files.
  std::string data_hash() const;
};

void to_json(nlohmann::json& j, const ExperimentConfig& config);
void from_json(const nlohmann::json& j, ExperimentConfig& config);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

struct ResultRow {
  std::size_t n_train = 0;
  std::size_t task_count = 0;
  std::string strategy;
  std::uint64_t seed = 0;
  std::size_t task = 0;
  std::string task_label;
  double regret = 0.0;
  double normalized_regret = 0.0;
  std::optional<double> cost_mse;
  std::size_t epochs = 0;
  double elapsed_seconds = 0.0;
  std::string status = "ok";
};

// Results CSV without wall-clock columns so reruns compare byte for byte.
void write_results_csv(const std::vector<ResultRow>& rows, const std::filesystem::path& path);
void write_timing_csv(const std::vector<ResultRow>& rows, const std::filesystem::path& path);

std::filesystem::path seed_dir(const std::filesystem::path& root, std::uint64_t seed);
std::filesystem::path run_dir(const std::filesystem::path& root, Strategy strategy,
                              std::uint64_t seed);

// Writes graph, tasks and datasets for every configured seed.
void cmd_gen(const ExperimentConfig& config, const std::filesystem::path& root);

struct TrainOutcome {
  bool diverged = false;
  std::string diagnostic;
  std::size_t epochs = 0;
  double elapsed_seconds = 0.0;
  double final_validation = 0.0;
};

TrainOutcome cmd_train(const ExperimentConfig& config, const std::filesystem::path& root,
                       Strategy strategy, std::uint64_t seed);

// Evaluates a checkpoint on the holdout set and writes results.csv next
// to it.
std::vector<ResultRow> cmd_eval(const ExperimentConfig& config,
                                const std::filesystem::path& root, Strategy strategy,
                                std::uint64_t seed);

// Explicit-path variant: checkpoint stem plus test dataset file(s).
std::vector<ResultRow> eval_checkpoint(const std::filesystem::path& model_stem,
                                       const std::vector<std::filesystem::path>& test_files);

struct BenchReport {
  std::vector<ResultRow> rows;
  std::size_t failed_cells = 0;
  int exit_code = 0;
};

// Runs every (sweep point, strategy, seed) cell with up to `jobs` cells in
// parallel, then writes results.csv, comparison.csv, timing.csv and
// summary.txt under config.out.
BenchReport cmd_bench(const ExperimentConfig& config, std::size_t jobs);

}  // namespace mtpo

#endif  // MTPO_EXPERIMENT_HPP_
