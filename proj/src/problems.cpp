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

#include "mtpo/problems.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <string>

#include "mtpo/error.hpp"
#include "mtpo/util.hpp"

namespace mtpo {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_cost(const GraphSpec& graph, const CostVector& cost) {
  require(cost.size() == graph.edge_count(), ErrorKind::kInvalidInput,
          "cost vector has " + std::to_string(cost.size()) +
              " entries, graph has " + std::to_string(graph.edge_count()) +
              " edges");
}

Solution finish(const CostVector& cost, std::vector<std::uint8_t> selected) {
  Solution s;
  s.selected = std::move(selected);
  s.objective = solution_objective(cost, s);
  return s;
}

std::size_t find_root(std::vector<std::size_t>& parent, std::size_t i) {
  while (parent[i] != i) {
    parent[i] = parent[parent[i]];
    i = parent[i];
  }
  return i;
}

}  // namespace

GraphSpec::GraphSpec(std::vector<Point> coords, std::vector<Edge> edges)
    : coords_(std::move(coords)), edges_(std::move(edges)) {
  const int n = node_count();
  for (const Point& p : coords_) {
    require(std::isfinite(p.x) && std::isfinite(p.y), ErrorKind::kInvalidInput,
            "node coordinates must be finite");
  }
  lookup_.assign(static_cast<std::size_t>(n) * n, -1);
  for (std::size_t e = 0; e < edges_.size(); ++e) {
    const Edge& edge = edges_[e];
    require(0 <= edge.u && edge.u < edge.v && edge.v < n,
            ErrorKind::kInvalidInput,
            "edge (" + std::to_string(edge.u) + "," + std::to_string(edge.v) +
                ") violates 0 <= i < j < node_count");
    auto& slot = lookup_[static_cast<std::size_t>(edge.u) * n + edge.v];
    require(slot < 0, ErrorKind::kInvalidInput,
            "duplicate edge (" + std::to_string(edge.u) + "," +
                std::to_string(edge.v) + ")");
    slot = static_cast<std::int32_t>(e);
    lookup_[static_cast<std::size_t>(edge.v) * n + edge.u] = slot;
  }
}

std::optional<std::size_t> GraphSpec::edge_index(int i, int j) const {
  const int n = node_count();
  if (i < 0 || j < 0 || i >= n || j >= n || i == j) return std::nullopt;
  const std::int32_t e = lookup_[static_cast<std::size_t>(i) * n + j];
  if (e < 0) return std::nullopt;
  return static_cast<std::size_t>(e);
}

std::size_t GraphSpec::require_edge(int i, int j) const {
  auto e = edge_index(i, j);
  require(e.has_value(), ErrorKind::kInfeasibleTask,
          "edge (" + std::to_string(i) + "," + std::to_string(j) +
              ") is not in the graph");
  return *e;
}

double GraphSpec::edge_length(std::size_t e) const {
  const Point& a = coords_[edges_[e].u];
  const Point& b = coords_[edges_[e].v];
  return std::hypot(a.x - b.x, a.y - b.y);
}

std::uint64_t GraphSpec::hash() const {
  nlohmann::json j = *this;
  return fnv1a64(j.dump());
}

GraphSpec build_complete_graph(std::vector<Point> coords) {
  require(coords.size() >= 2, ErrorKind::kInvalidInput,
          "a complete graph needs at least 2 points");
  std::set<std::pair<double, double>> seen;
  for (const Point& p : coords) {
    require(seen.emplace(p.x, p.y).second, ErrorKind::kInvalidInput,
            "points must be distinct");
  }
  const int n = static_cast<int>(coords.size());
  std::vector<Edge> edges;
  edges.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) edges.push_back({i, j});
  }
  return GraphSpec(std::move(coords), std::move(edges));
}

GraphSpec subgraph_edges(const GraphSpec& graph, std::size_t edge_count,
                         std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(graph.node_count());
  require(n >= 1 && edge_count + 1 >= n, ErrorKind::kInfeasibleRequest,
          "need at least node_count - 1 = " + std::to_string(n - 1) +
              " edges to connect the graph, asked for " +
              std::to_string(edge_count));
  require(edge_count <= graph.edge_count(), ErrorKind::kInfeasibleRequest,
          "asked for " + std::to_string(edge_count) + " edges, graph has " +
              std::to_string(graph.edge_count()));

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(graph.edge_count());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  // Random spanning tree: Kruskal over a shuffled edge order.
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  std::vector<std::uint8_t> taken(graph.edge_count(), 0);
  std::size_t tree_edges = 0;
  for (std::size_t e : order) {
    std::size_t a = find_root(parent, graph.edge(e).u);
    std::size_t b = find_root(parent, graph.edge(e).v);
    if (a == b) continue;
    parent[a] = b;
    taken[e] = 1;
    ++tree_edges;
  }
  require(tree_edges + 1 == n, ErrorKind::kInfeasibleRequest,
          "source graph is not connected");

  std::vector<std::size_t> rest;
  for (std::size_t e : order) {
    if (!taken[e]) rest.push_back(e);
  }
  std::shuffle(rest.begin(), rest.end(), rng);
  for (std::size_t k = 0; k + tree_edges < edge_count; ++k) taken[rest[k]] = 1;

  std::vector<Edge> edges;
  for (std::size_t e = 0; e < graph.edge_count(); ++e) {
    if (taken[e]) edges.push_back(graph.edge(e));
  }
  std::sort(edges.begin(), edges.end());
  return GraphSpec(std::vector<Point>(graph.coords().begin(), graph.coords().end()),
                   std::move(edges));
}

TaskSpec TaskSpec::shortest_path(int source, int target,
                                 std::vector<Edge> support) {
  TaskSpec t;
  t.kind = TaskKind::kShortestPath;
  t.source = source;
  t.target = target;
  t.support = std::move(support);
  return t;
}

TaskSpec TaskSpec::tsp(std::vector<int> subset) {
  TaskSpec t;
  t.kind = TaskKind::kTsp;
  t.subset = std::move(subset);
  return t;
}

void TaskSpec::validate(const GraphSpec& graph) const {
  const int n = graph.node_count();
  if (kind == TaskKind::kShortestPath) {
    require(0 <= source && source < n && 0 <= target && target < n,
            ErrorKind::kInvalidInput, "shortest path endpoints out of range");
    require(source < target, ErrorKind::kInvalidInput,
            "shortest path needs source < target (DAG orientation)");
    for (const Edge& e : support) {
      require(graph.edge_index(e.u, e.v).has_value() && e.u < e.v,
              ErrorKind::kInvalidInput,
              "support edge (" + std::to_string(e.u) + "," +
                  std::to_string(e.v) + ") is not a graph edge");
    }
    return;
  }
  require(subset.size() >= 3, ErrorKind::kInvalidInput,
          "TSP subset needs at least 3 nodes");
  std::vector<int> sorted = subset;
  std::sort(sorted.begin(), sorted.end());
  require(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end(),
          ErrorKind::kInvalidInput, "TSP subset has duplicate nodes");
  require(sorted.front() >= 0 && sorted.back() < n, ErrorKind::kInvalidInput,
          "TSP subset node out of range");
}

std::string TaskSpec::label() const {
  if (kind == TaskKind::kShortestPath) {
    return "SP(" + std::to_string(source) + "->" + std::to_string(target) + ")";
  }
  return "TSP(" + std::to_string(subset.size()) + ")";
}

CostVector::CostVector(std::vector<double> values) : values_(std::move(values)) {
  for (std::size_t i = 0; i < values_.size(); ++i) {
    require(std::isfinite(values_[i]), ErrorKind::kInvalidInput,
            "cost entry " + std::to_string(i) + " is not finite");
  }
}

std::vector<std::size_t> task_support(const GraphSpec& graph,
                                      const TaskSpec& task) {
  std::vector<std::size_t> out;
  if (task.kind == TaskKind::kShortestPath) {
    if (task.support.empty()) {
      out.resize(graph.edge_count());
      std::iota(out.begin(), out.end(), 0);
      return out;
    }
    for (const Edge& e : task.support) out.push_back(graph.require_edge(e.u, e.v));
  } else {
    for (std::size_t a = 0; a < task.subset.size(); ++a) {
      for (std::size_t b = a + 1; b < task.subset.size(); ++b) {
        if (auto e = graph.edge_index(task.subset[a], task.subset[b])) {
          out.push_back(*e);
        }
      }
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

Solution solve_shortest_path(const GraphSpec& graph, const TaskSpec& task,
                             const CostVector& cost) {
  require(task.kind == TaskKind::kShortestPath, ErrorKind::kInvalidInput,
          "solve_shortest_path called on a non-SP task");
  task.validate(graph);
  check_cost(graph, cost);

  const auto n = static_cast<std::size_t>(graph.node_count());
  std::vector<std::vector<std::size_t>> out_edges(n);
  for (std::size_t e : task_support(graph, task)) {
    out_edges[graph.edge(e).u].push_back(e);
  }

  // Nodes are already a topological order of the low -> high orientation.
  std::vector<double> dist(n, kInf);
  std::vector<std::ptrdiff_t> via(n, -1);
  dist[task.source] = 0.0;
  for (int v = task.source; v < task.target; ++v) {
    if (dist[v] == kInf) continue;
    for (std::size_t e : out_edges[v]) {
      const int w = graph.edge(e).v;
      if (w > task.target) continue;
      const double d = dist[v] + cost[e];
      if (d < dist[w]) {
        dist[w] = d;
        via[w] = static_cast<std::ptrdiff_t>(e);
      }
    }
  }
  require(dist[task.target] < kInf, ErrorKind::kInfeasibleTask,
          "no directed path " + task.label());

  std::vector<std::uint8_t> selected(graph.edge_count(), 0);
  for (int v = task.target; v != task.source;) {
    const auto e = static_cast<std::size_t>(via[v]);
    selected[e] = 1;
    v = graph.edge(e).u;
  }
  return finish(cost, std::move(selected));
}

Solution solve_tsp(const GraphSpec& graph, const TaskSpec& task,
                   const CostVector& cost) {
  require(task.kind == TaskKind::kTsp, ErrorKind::kInvalidInput,
          "solve_tsp called on a non-TSP task");
  task.validate(graph);
  check_cost(graph, cost);
  const std::size_t k = task.subset.size();
  require(k <= kMaxTspSubset, ErrorKind::kInvalidInput,
          "TSP subset of " + std::to_string(k) + " exceeds the cap of " +
              std::to_string(kMaxTspSubset));

  std::vector<std::size_t> edge_of(k * k, 0);
  std::vector<double> w(k * k, 0.0);
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = 0; b < k; ++b) {
      if (a == b) continue;
      const std::size_t e = graph.require_edge(task.subset[a], task.subset[b]);
      edge_of[a * k + b] = e;
      w[a * k + b] = cost[e];
    }
  }

  // Node 0 is the fixed start; bit (j - 1) of a mask marks node j visited.
  const std::size_t m = k - 1;
  const std::size_t full = (std::size_t{1} << m) - 1;
  std::vector<double> best((full + 1) * m, kInf);
  std::vector<std::uint8_t> prev((full + 1) * m, 0);
  for (std::size_t j = 0; j < m; ++j) best[(std::size_t{1} << j) * m + j] = w[j + 1];
  for (std::size_t mask = 1; mask <= full; ++mask) {
    for (std::size_t j = 0; j < m; ++j) {
      if (!(mask & (std::size_t{1} << j))) continue;
      const std::size_t from = mask ^ (std::size_t{1} << j);
      if (from == 0) continue;
      double b = kInf;
      std::uint8_t arg = 0;
      for (std::size_t i = 0; i < m; ++i) {
        if (!(from & (std::size_t{1} << i))) continue;
        const double d = best[from * m + i] + w[(i + 1) * k + (j + 1)];
        if (d < b) {
          b = d;
          arg = static_cast<std::uint8_t>(i);
        }
      }
      best[mask * m + j] = b;
      prev[mask * m + j] = arg;
    }
  }
  double tour = kInf;
  std::size_t last = 0;
  for (std::size_t j = 0; j < m; ++j) {
    const double d = best[full * m + j] + w[(j + 1) * k];
    if (d < tour) {
      tour = d;
      last = j;
    }
  }

  std::vector<std::uint8_t> selected(graph.edge_count(), 0);
  selected[edge_of[(last + 1) * k]] = 1;
  std::size_t mask = full;
  std::size_t j = last;
  while (mask != (std::size_t{1} << j)) {
    const std::size_t i = prev[mask * m + j];
    selected[edge_of[(i + 1) * k + (j + 1)]] = 1;
    mask ^= std::size_t{1} << j;
    j = i;
  }
  selected[edge_of[j + 1]] = 1;
  return finish(cost, std::move(selected));
}

namespace {

struct BestSoFar {
  double objective = kInf;
  std::vector<std::uint8_t> selected;

  void offer(const CostVector& cost, std::vector<std::uint8_t>&& candidate) {
    const double obj = solution_objective(cost.values(), candidate);
    if (obj < objective || (obj == objective && candidate < selected)) {
      objective = obj;
      selected = std::move(candidate);
    }
  }
};

void enumerate_paths(const GraphSpec& graph,
                     const std::vector<std::vector<std::size_t>>& out_edges,
                     int v, int target, std::vector<std::uint8_t>& path,
                     const CostVector& cost, BestSoFar& best) {
  if (v == target) {
    best.offer(cost, std::vector<std::uint8_t>(path));
    return;
  }
  for (std::size_t e : out_edges[v]) {
    path[e] = 1;
    enumerate_paths(graph, out_edges, graph.edge(e).v, target, path, cost, best);
    path[e] = 0;
  }
}

}  // namespace

Solution brute_force_solve(const GraphSpec& graph, const TaskSpec& task,
                           const CostVector& cost) {
  task.validate(graph);
  check_cost(graph, cost);
  BestSoFar best;
  if (task.kind == TaskKind::kShortestPath) {
    require(graph.node_count() <= kMaxBruteForceSpNodes,
            ErrorKind::kOracleTooLarge,
            "brute force shortest path is limited to " +
                std::to_string(kMaxBruteForceSpNodes) + " nodes");
    std::vector<std::vector<std::size_t>> out_edges(graph.node_count());
    for (std::size_t e : task_support(graph, task)) {
      out_edges[graph.edge(e).u].push_back(e);
    }
    std::vector<std::uint8_t> path(graph.edge_count(), 0);
    enumerate_paths(graph, out_edges, task.source, task.target, path, cost, best);
    require(best.objective < kInf, ErrorKind::kInfeasibleTask,
            "no directed path " + task.label());
    return finish(cost, std::move(best.selected));
  }

  const std::size_t k = task.subset.size();
  require(k <= kMaxBruteForceTspSubset, ErrorKind::kOracleTooLarge,
          "brute force TSP is limited to " +
              std::to_string(kMaxBruteForceTspSubset) + " nodes");
  std::vector<std::size_t> perm(k - 1);
  std::iota(perm.begin(), perm.end(), 1);
  do {
    if (perm.front() > perm.back()) continue;  // each tour once per direction
    std::vector<std::uint8_t> selected(graph.edge_count(), 0);
    std::size_t at = 0;
    for (std::size_t next : perm) {
      selected[graph.require_edge(task.subset[at], task.subset[next])] = 1;
      at = next;
    }
    selected[graph.require_edge(task.subset[at], task.subset[0])] = 1;
    best.offer(cost, std::move(selected));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return finish(cost, std::move(best.selected));
}

Solution solve(const GraphSpec& graph, const TaskSpec& task,
               const CostVector& cost) {
  return task.kind == TaskKind::kShortestPath
             ? solve_shortest_path(graph, task, cost)
             : solve_tsp(graph, task, cost);
}

double solution_objective(std::span<const double> cost,
                          std::span<const std::uint8_t> selected) {
  require(cost.size() == selected.size(), ErrorKind::kInvalidInput,
          "cost and solution dimensions differ");
  double total = 0.0;
  for (std::size_t i = 0; i < cost.size(); ++i) {
    if (selected[i]) total += cost[i];
  }
  return total;
}

double solution_objective(const CostVector& cost, const Solution& solution) {
  return solution_objective(cost.values(), solution.selected);
}

bool is_feasible(const GraphSpec& graph, const TaskSpec& task,
                 std::span<const std::uint8_t> selected) {
  if (selected.size() != graph.edge_count()) return false;
  std::vector<std::uint8_t> allowed(graph.edge_count(), 0);
  for (std::size_t e : task_support(graph, task)) allowed[e] = 1;
  const auto n = static_cast<std::size_t>(graph.node_count());
  std::vector<std::vector<std::size_t>> incident(n);
  std::size_t chosen = 0;
  for (std::size_t e = 0; e < selected.size(); ++e) {
    if (selected[e] > 1) return false;
    if (!selected[e]) continue;
    if (!allowed[e]) return false;
    incident[graph.edge(e).u].push_back(e);
    incident[graph.edge(e).v].push_back(e);
    ++chosen;
  }

  if (task.kind == TaskKind::kShortestPath) {
    // Walk forward from the source along the unique selected out-edge.
    std::size_t steps = 0;
    int v = task.source;
    while (v != task.target) {
      std::ptrdiff_t next = -1;
      for (std::size_t e : incident[v]) {
        if (graph.edge(e).u == v) {
          if (next >= 0) return false;
          next = static_cast<std::ptrdiff_t>(e);
        }
      }
      if (next < 0) return false;
      v = graph.edge(static_cast<std::size_t>(next)).v;
      ++steps;
    }
    return steps == chosen;
  }

  const std::size_t k = task.subset.size();
  if (chosen != k) return false;
  for (int node : task.subset) {
    if (incident[node].size() != 2) return false;
  }
  std::size_t length = 0;
  int prev = -1;
  int v = task.subset[0];
  do {
    const std::size_t e0 = incident[v][0];
    const std::size_t e1 = incident[v][1];
    auto other = [&](std::size_t e) {
      return graph.edge(e).u == v ? graph.edge(e).v : graph.edge(e).u;
    };
    const int next = (other(e0) != prev) ? other(e0) : other(e1);
    prev = v;
    v = next;
    ++length;
  } while (v != task.subset[0] && length <= k);
  return length == k;
}

void to_json(nlohmann::json& j, const GraphSpec& graph) {
  nlohmann::json coords = nlohmann::json::array();
  for (const Point& p : graph.coords()) coords.push_back({p.x, p.y});
  nlohmann::json edges = nlohmann::json::array();
  for (const Edge& e : graph.edges()) edges.push_back({e.u, e.v});
  j = nlohmann::json{{"coords", std::move(coords)}, {"edges", std::move(edges)}};
}

void from_json(const nlohmann::json& j, GraphSpec& graph) {
  std::vector<Point> coords;
  for (const auto& p : j.at("coords")) {
    coords.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  }
  std::vector<Edge> edges;
  for (const auto& e : j.at("edges")) {
    edges.push_back({e.at(0).get<int>(), e.at(1).get<int>()});
  }
  graph = GraphSpec(std::move(coords), std::move(edges));
}

void to_json(nlohmann::json& j, const TaskSpec& task) {
  if (task.kind == TaskKind::kShortestPath) {
    j = nlohmann::json{{"kind", "shortest_path"},
                       {"source", task.source},
                       {"target", task.target}};
    if (!task.support.empty()) {
      nlohmann::json support = nlohmann::json::array();
      for (const Edge& e : task.support) support.push_back({e.u, e.v});
      j["support"] = std::move(support);
    }
  } else {
    j = nlohmann::json{{"kind", "tsp"}, {"subset", task.subset}};
  }
}

void from_json(const nlohmann::json& j, TaskSpec& task) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "shortest_path") {
    std::vector<Edge> support;
    if (j.contains("support")) {
      for (const auto& e : j.at("support")) {
        support.push_back({e.at(0).get<int>(), e.at(1).get<int>()});
      }
    }
    task = TaskSpec::shortest_path(j.at("source").get<int>(),
                                   j.at("target").get<int>(), std::move(support));
  } else if (kind == "tsp") {
    task = TaskSpec::tsp(j.at("subset").get<std::vector<int>>());
  } else {
    throw Error(ErrorKind::kInvalidInput, "unknown task kind '" + kind + "'");
  }
}

}  // namespace mtpo
