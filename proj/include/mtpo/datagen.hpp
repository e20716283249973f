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

// Synthetic benchmark generation.
//
// Single-cost (graph routing): one cost vector over a complete graph is
// shared by several shortest-path tasks (restricted to a sparse connected
// edge subset) and several TSP tasks on node subsets. Costs are
//
//   c_j = euclid_j + ((1/sqrt(p)) (B x)_j + 3)^deg * eps_j,
//   eps_j ~ U(noise_low, noise_high),
//
// with B a Bernoulli(0.5) matrix and x ~ N(0, I).
//
// Multi-cost: each task draws its own features and uses its own mixing
// matrix rho * B_shared + (1 - rho) * B_task inside the same formula.

#ifndef MTPO_DATAGEN_HPP_
#define MTPO_DATAGEN_HPP_

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "json.hpp"
#include "mtpo/dataset.hpp"
#include "mtpo/predictor.hpp"
#include "mtpo/problems.hpp"

namespace mtpo {

struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;  // row-major

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  std::span<const double> row(std::size_t i) const {
    return {data.data() + i * cols, cols};
  }
  double& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
  bool operator==(const Matrix&) const = default;
};

struct GenConfig {
  std::size_t feature_dim = 10;
  int node_count = 10;
  int degree = 4;
  double noise_low = 0.5;
  double noise_high = 1.5;
  std::uint64_t seed = 0;
  PredictorMode mode = PredictorMode::kSingleCost;

  // Task layout.
  std::size_t sp_tasks = 2;
  std::size_t tsp_tasks = 2;
  std::size_t sp_edges = 20;
  std::size_t tsp_subset_min = 5;
  std::size_t tsp_subset_max = 7;
  // Multi-cost only.
  double relatedness = 0.5;

  std::size_t task_count() const { return sp_tasks + tsp_tasks; }
  void validate() const;
};

void to_json(nlohmann::json& j, const GenConfig& config);
void from_json(const nlohmann::json& j, GenConfig& config);

std::vector<Point> gen_coords(int node_count, std::uint64_t seed);

// n x p, i.i.d. N(0, 1).
Matrix gen_features(std::size_t n, std::size_t p, std::uint64_t seed);

// edge_count x p, i.i.d. Bernoulli(0.5) in {0, 1}.
Matrix gen_mixing_matrix(std::size_t edge_count, std::size_t p,
                         std::uint64_t seed);

// Polynomial part f(x)_j = ((1/sqrt(p)) (B x)_j + 3)^degree, no noise.
std::vector<double> polynomial_costs(std::span<const double> x, const Matrix& mixing,
                                     int degree);

CostVector gen_costs(std::span<const double> x, const Matrix& mixing,
                     const GraphSpec& graph, int degree, double noise_low,
                     double noise_high, std::mt19937_64& rng);

// Per-task costs from per-task features. With share_noise every task sees
// the same eps draws; otherwise each task draws its own.
std::vector<CostVector> gen_multicost(std::span<const std::vector<double>> xs,
                                      const Matrix& shared_mixing,
                                      std::span<const Matrix> task_mixing,
                                      double relatedness, const GraphSpec& graph,
                                      int degree, double noise_low,
                                      double noise_high, std::mt19937_64& rng,
                                      bool share_noise = false);

// Fills every sample's per-task (w*, z*) from its cost label. With
// strip_costs the result is a pure learning-from-solutions dataset.
Dataset derive_solution_labels(const Dataset& dataset, const GraphSpec& graph,
                               bool strip_costs = false);

// Graph, tasks and mixing matrices: everything that stays fixed while
// samples are redrawn.
struct Benchmark {
  GenConfig config;
  GraphSpec graph;
  std::vector<TaskSpec> tasks;
  Matrix mixing;                   // single-cost B, or B_shared
  std::vector<Matrix> task_mixing;  // multi-cost B_task, one per task
};

Benchmark make_benchmark(const GenConfig& config);

// Single-cost dataset with cost labels and derived solution labels for all
// benchmark tasks.
Dataset sample_single_cost(const Benchmark& bench, std::size_t n,
                           std::uint64_t seed);

// One dataset per task, each with that task only, equal sizes.
std::vector<Dataset> sample_multi_cost(const Benchmark& bench, std::size_t n,
                                       std::uint64_t seed);

}  // namespace mtpo

#endif  // MTPO_DATAGEN_HPP_
