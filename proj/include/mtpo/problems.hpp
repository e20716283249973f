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

// Optimization task families on a shared edge universe, and the exact
// argmin oracles every decision loss calls.
//
// A GraphSpec fixes the edge set; every cost vector and every decision
// vector is indexed by position in that edge list. Feasible regions are
// described implicitly by TaskSpec:
//
// * ShortestPath: a directed source -> target path. Undirected edges (i, j)
//   with i < j are oriented i -> j, which turns the graph into a DAG, so the
//   dynamic program below is exact for costs of either sign. An SP task may
//   restrict itself to a subset of the graph's edges (its support).
// * Tsp: a Hamiltonian cycle over a node subset, using the edges induced by
//   that subset. Solved exactly by Held-Karp.

#ifndef MTPO_PROBLEMS_HPP_
#define MTPO_PROBLEMS_HPP_

#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"

namespace mtpo {

struct Point {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point&) const = default;
};

struct Edge {
  int u = 0;
  int v = 0;
  auto operator<=>(const Edge&) const = default;
};

class GraphSpec {
 public:
  GraphSpec() = default;
  // Validates: u < v < node_count, no duplicates.
  GraphSpec(std::vector<Point> coords, std::vector<Edge> edges);

  int node_count() const { return static_cast<int>(coords_.size()); }
  std::size_t edge_count() const { return edges_.size(); }
  std::span<const Point> coords() const { return coords_; }
  std::span<const Edge> edges() const { return edges_; }
  const Edge& edge(std::size_t e) const { return edges_[e]; }

  // Position of the undirected edge {i, j} in cost vectors, in either order.
  std::optional<std::size_t> edge_index(int i, int j) const;
  std::size_t require_edge(int i, int j) const;

  double edge_length(std::size_t e) const;

  // FNV-1a over the canonical JSON form.
  std::uint64_t hash() const;

  bool operator==(const GraphSpec& other) const {
    return coords_ == other.coords_ && edges_ == other.edges_;
  }

 private:
  std::vector<Point> coords_;
  std::vector<Edge> edges_;
  std::vector<std::int32_t> lookup_;  // node_count^2, -1 when absent
};

GraphSpec build_complete_graph(std::vector<Point> coords);

// Spanning tree first (random attachment order), then uniform fill from the
// remaining complete-graph pairs. Node coordinates are kept.
GraphSpec subgraph_edges(const GraphSpec& graph, std::size_t edge_count,
                         std::uint64_t seed);

enum class TaskKind { kShortestPath, kTsp };

struct TaskSpec {
  TaskKind kind = TaskKind::kShortestPath;
  int source = -1;
  int target = -1;
  std::vector<int> subset;
  // Shortest path only: edges the path may use. Empty means every edge.
  std::vector<Edge> support;

  static TaskSpec shortest_path(int source, int target,
                                std::vector<Edge> support = {});
  static TaskSpec tsp(std::vector<int> subset);

  void validate(const GraphSpec& graph) const;
  std::string label() const;

  bool operator==(const TaskSpec&) const = default;
};

class CostVector {
 public:
  CostVector() = default;
  explicit CostVector(std::vector<double> values);
  static CostVector zeros(std::size_t n) {
    return CostVector(std::vector<double>(n, 0.0));
  }

  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  std::span<const double> values() const { return values_; }

  bool operator==(const CostVector&) const = default;

 private:
  std::vector<double> values_;
};

struct Solution {
  std::vector<std::uint8_t> selected;  // one 0/1 entry per graph edge
  double objective = 0.0;

  bool operator==(const Solution&) const = default;
};

// Positions (ascending) of the edges a task may select.
std::vector<std::size_t> task_support(const GraphSpec& graph,
                                      const TaskSpec& task);

// Largest TSP subset the Held-Karp table is allowed to allocate.
inline constexpr std::size_t kMaxTspSubset = 20;
inline constexpr int kMaxBruteForceSpNodes = 12;
inline constexpr std::size_t kMaxBruteForceTspSubset = 8;

// Ties: the DP relaxes out-edges in ascending edge position and only
// replaces a label on strict improvement.
Solution solve_shortest_path(const GraphSpec& graph, const TaskSpec& task,
                             const CostVector& cost);

// Ties: the tour starts at subset[0]; Held-Karp keeps the first predecessor
// (lowest subset position) reaching the minimum.
Solution solve_tsp(const GraphSpec& graph, const TaskSpec& task,
                   const CostVector& cost);

// Exhaustive enumeration. Ties go to the lexicographically smallest
// indicator vector.
Solution brute_force_solve(const GraphSpec& graph, const TaskSpec& task,
                           const CostVector& cost);

// Dispatches on task.kind to the exact solver.
Solution solve(const GraphSpec& graph, const TaskSpec& task,
               const CostVector& cost);

double solution_objective(const CostVector& cost, const Solution& solution);
double solution_objective(std::span<const double> cost,
                          std::span<const std::uint8_t> selected);

// Structural check: path source -> target inside the support, or a single
// Hamiltonian cycle on the subset.
bool is_feasible(const GraphSpec& graph, const TaskSpec& task,
                 std::span<const std::uint8_t> selected);

void to_json(nlohmann::json& j, const GraphSpec& graph);
void from_json(const nlohmann::json& j, GraphSpec& graph);
void to_json(nlohmann::json& j, const TaskSpec& task);
void from_json(const nlohmann::json& j, TaskSpec& task);

}  // namespace mtpo

#endif  // MTPO_PROBLEMS_HPP_
