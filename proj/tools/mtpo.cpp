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

// mtpo: generate benchmark data, train under a multi-task strategy,
// evaluate checkpoints and run comparison sweeps.
//
//   mtpo gen   --config exp.json [--seed S] [--out DIR]
//   mtpo train --config exp.json [--strategy NAME] [--seed S] [--out DIR]
//   mtpo eval  --config exp.json [--strategy NAME] [--seed S] [--out DIR]
//   mtpo eval  --model DIR/model --test FILE...
//   mtpo bench --config exp.json [--jobs N] [--out DIR]
//
// Exit codes: 0 success, 1 I/O or data error, 2 invalid config,
// 3 training diverged, 4 some bench cells failed.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mtpo/error.hpp"
#include "mtpo/experiment.hpp"

namespace {

using mtpo::ExperimentConfig;

struct Common {
  std::string config_path;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string strategy;
};

void add_common(CLI::App* cmd, Common& c, bool with_strategy) {
  cmd->add_option("--config", c.config_path, "Experiment config (JSON)");
  cmd->add_option("--out", c.out, "Output directory (overrides the config)");
  cmd->add_option("--seed", c.seed, "Run only this seed");
  if (with_strategy) cmd->add_option("--strategy", c.strategy, "Run only this strategy");
}

ExperimentConfig resolve(const Common& c) {
  ExperimentConfig config;
  if (!c.config_path.empty()) config = mtpo::load_experiment_config(c.config_path);
  if (!c.out.empty()) config.out = c.out;
  if (c.seed) config.seeds = {*c.seed};
  if (!c.strategy.empty()) {
    try {
      config.strategies = {mtpo::parse_strategy(c.strategy)};
    } catch (const mtpo::Error& e) {
      throw mtpo::Error(mtpo::ErrorKind::kInvalidConfig, e.what());
    }
  }
  config.validate();
  return config;
}

void print_rows(const std::vector<mtpo::ResultRow>& rows) {
  for (const auto& r : rows) {
    std::printf("%-14s seed %-3llu task %zu %-12s regret %.6g  normalized %.6g  status %s\n",
                r.strategy.c_str(), static_cast<unsigned long long>(r.seed), r.task,
                r.task_label.c_str(), r.regret, r.normalized_regret, r.status.c_str());
  }
}

int exit_code(const mtpo::Error& e) {
  switch (e.kind()) {
    case mtpo::ErrorKind::kInvalidConfig:
    case mtpo::ErrorKind::kInvalidInput:
    case mtpo::ErrorKind::kInfeasibleRequest:
      return 2;
    case mtpo::ErrorKind::kTrainingDiverged:
      return 3;
    default:
      return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-task predict-then-optimize experiments"};
  app.require_subcommand(1);

  Common gen_opts, train_opts, eval_opts, bench_opts;
  auto* gen = app.add_subcommand("gen", "Generate graph, tasks and datasets");
  add_common(gen, gen_opts, false);
  auto* train = app.add_subcommand("train", "Train one or more strategies");
  add_common(train, train_opts, true);
  auto* eval = app.add_subcommand("eval", "Evaluate trained checkpoints on the holdout set");
  add_common(eval, eval_opts, true);
  std::string model_stem;
  std::vector<std::string> test_files;
  eval->add_option("--model", model_stem, "Checkpoint stem (path without .json/.bin)");
  eval->add_option("--test", test_files, "Test dataset file(s), one per task for multi-cost");
  auto* bench = app.add_subcommand("bench", "Run every strategy and seed and aggregate");
  add_common(bench, bench_opts, true);
  std::size_t jobs = 1;
  bench->add_option("--jobs", jobs, "Cells trained in parallel")->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      const ExperimentConfig config = resolve(gen_opts);
      mtpo::cmd_gen(config, config.out);
      std::printf("wrote %s (config hash %s)\n", config.out.string().c_str(),
                  config.data_hash().c_str());
      return 0;
    }
    if (train->parsed()) {
      const ExperimentConfig config = resolve(train_opts);
      bool diverged = false;
      for (auto strategy : config.resolved_strategies()) {
        for (auto seed : config.seeds) {
          const auto t = mtpo::cmd_train(config, config.out, strategy, seed);
          std::printf("%-14s seed %-3llu epochs %-5zu validation %.6g  %.2fs%s\n",
                      mtpo::to_string(strategy).c_str(), static_cast<unsigned long long>(seed),
                      t.epochs, t.final_validation, t.elapsed_seconds,
                      t.diverged ? "  DIVERGED" : "");
          if (t.diverged) {
            std::fprintf(stderr, "training diverged: %s (last good checkpoint kept)\n",
                         t.diagnostic.c_str());
            diverged = true;
          }
        }
      }
      return diverged ? 3 : 0;
    }
    if (eval->parsed()) {
      if (!model_stem.empty()) {
        if (test_files.empty()) throw mtpo::Error(mtpo::ErrorKind::kInvalidConfig, "--model needs --test");
        std::vector<std::filesystem::path> files(test_files.begin(), test_files.end());
        const auto rows = mtpo::eval_checkpoint(model_stem, files);
        print_rows(rows);
        return 0;
      }
      const ExperimentConfig config = resolve(eval_opts);
      for (auto strategy : config.resolved_strategies()) {
        for (auto seed : config.seeds) print_rows(mtpo::cmd_eval(config, config.out, strategy, seed));
      }
      return 0;
    }
    if (bench->parsed()) {
      const ExperimentConfig config = resolve(bench_opts);
      const auto report = mtpo::cmd_bench(config, jobs);
      std::ifstream summary(config.out / "summary.txt");
      std::cout << summary.rdbuf();
      if (report.failed_cells > 0) {
        std::fprintf(stderr, "%zu cell(s) failed; see %s\n", report.failed_cells,
                     (config.out / "results.csv").string().c_str());
      }
      return report.exit_code;
    }
  } catch (const mtpo::Error& e) {
    std::fprintf(stderr, "error (%s): %s\n", std::string(mtpo::to_string(e.kind())).c_str(), e.what());
    return exit_code(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
