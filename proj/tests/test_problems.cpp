#include <cmath>
#include <random>
#include <set>

#include "doctest.h"
#include "mtpo/error.hpp"
#include "mtpo/problems.hpp"
#include "test_support.hpp"

using namespace mtpo;
using namespace mtpo::testing;

namespace {

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an mtpo::Error");
  return ErrorKind::kIo;
}

bool connected(const GraphSpec& g) {
  std::vector<int> parent(g.node_count());
  for (int i = 0; i < g.node_count(); ++i) parent[i] = i;
  std::function<int(int)> find = [&](int x) { return parent[x] == x ? x : parent[x] = find(parent[x]); };
  for (const Edge& e : g.edges()) parent[find(e.u)] = find(e.v);
  std::set<int> roots;
  for (int i = 0; i < g.node_count(); ++i) roots.insert(find(i));
  return roots.size() == 1;
}

}  // namespace

TEST_CASE("complete graph enumerates edges lexicographically") {
  const GraphSpec g3 = build_complete_graph({{0, 0}, {1, 0}, {0, 1}});
  REQUIRE(g3.edge_count() == 3);
  CHECK(g3.edge(0) == Edge{0, 1});
  CHECK(g3.edge(1) == Edge{0, 2});
  CHECK(g3.edge(2) == Edge{1, 2});

  const GraphSpec g4 = build_complete_graph(random_points(4, 1));
  CHECK(g4.edge_count() == 6);
  CHECK(g4.edge_index(2, 3) == 5u);
  CHECK(g4.edge_index(3, 2) == 5u);

  CHECK(build_complete_graph(random_points(30, 2)).edge_count() == 435);
  CHECK(kind_of([] { build_complete_graph({{0, 0}}); }) == ErrorKind::kInvalidInput);
}

TEST_CASE("graph rejects self loops, duplicates and reversed pairs") {
  const std::vector<Point> pts = {{0, 0}, {1, 0}, {0, 1}};
  CHECK(kind_of([&] { GraphSpec(pts, {{0, 0}}); }) == ErrorKind::kInvalidInput);
  CHECK(kind_of([&] { GraphSpec(pts, {{0, 1}, {0, 1}}); }) == ErrorKind::kInvalidInput);
  CHECK(kind_of([&] { GraphSpec(pts, {{1, 0}}); }) == ErrorKind::kInvalidInput);
  CHECK(kind_of([&] { GraphSpec(pts, {{0, 3}}); }) == ErrorKind::kInvalidInput);
}

TEST_CASE("subgraph sampling is connected, sized and deterministic") {
  const GraphSpec k30 = build_complete_graph(random_points(30, 3));
  const GraphSpec s54 = subgraph_edges(k30, 54, 0);
  CHECK(s54.edge_count() == 54);
  CHECK(connected(s54));

  const GraphSpec k4 = build_complete_graph(random_points(4, 4));
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const GraphSpec tree = subgraph_edges(k4, 3, seed);
    CHECK(tree.edge_count() == 3);
    CHECK(connected(tree));
  }

  const GraphSpec k10 = build_complete_graph(random_points(10, 5));
  CHECK(subgraph_edges(k10, 20, 7) == subgraph_edges(k10, 20, 7));
  CHECK(kind_of([&] { subgraph_edges(k10, 8, 0); }) == ErrorKind::kInfeasibleRequest);
}

TEST_CASE("shortest path on a three-node graph") {
  const GraphSpec g = build_complete_graph({{0, 0}, {1, 0}, {2, 0}});
  const TaskSpec t = TaskSpec::shortest_path(0, 2);
  // Edge order: (0,1), (0,2), (1,2).
  const Solution a = solve_shortest_path(g, t, CostVector({1.0, 3.0, 1.0}));
  CHECK(a.selected == std::vector<std::uint8_t>{1, 0, 1});
  CHECK(a.objective == 2.0);

  const Solution b = solve_shortest_path(g, t, CostVector({1.0, -5.0, 1.0}));
  CHECK(b.selected == std::vector<std::uint8_t>{0, 1, 0});
  CHECK(b.objective == -5.0);
}

TEST_CASE("shortest path errors") {
  const GraphSpec g = build_complete_graph({{0, 0}, {1, 0}, {2, 0}});
  CHECK(kind_of([&] { CostVector({1.0, std::nan(""), 1.0}); }) == ErrorKind::kInvalidInput);
  CHECK(kind_of([&] { TaskSpec::shortest_path(2, 0).validate(g); }) == ErrorKind::kInvalidInput);
  // Support without any route to the target.
  const TaskSpec cut = TaskSpec::shortest_path(0, 2, {{0, 1}});
  CHECK(kind_of([&] { solve_shortest_path(g, cut, CostVector({1, 1, 1})); }) ==
        ErrorKind::kInfeasibleTask);
}

TEST_CASE("single-edge shortest path returns that edge") {
  const GraphSpec g({{0, 0}, {1, 1}}, {{0, 1}});
  const TaskSpec t = TaskSpec::shortest_path(0, 1);
  const Solution s = brute_force_solve(g, t, CostVector({2.5}));
  CHECK(s.selected == std::vector<std::uint8_t>{1});
  CHECK(s.objective == 2.5);
}

TEST_CASE("unit square tour has objective 4") {
  const GraphSpec g = build_complete_graph({{0, 0}, {0, 1}, {1, 1}, {1, 0}});
  std::vector<double> c;
  for (std::size_t e = 0; e < g.edge_count(); ++e) c.push_back(g.edge_length(e));
  const Solution s = solve_tsp(g, TaskSpec::tsp({0, 1, 2, 3}), CostVector(c));
  CHECK(s.objective == doctest::Approx(4.0).epsilon(1e-12));
  // The diagonals (0,2) and (1,3) stay unused.
  CHECK(s.selected[*g.edge_index(0, 2)] == 0);
  CHECK(s.selected[*g.edge_index(1, 3)] == 0);
}

TEST_CASE("zero costs and triangles") {
  const GraphSpec g = build_complete_graph(random_points(6, 8));
  const Solution s = solve_tsp(g, TaskSpec::tsp({5, 1, 3, 0}), CostVector::zeros(g.edge_count()));
  CHECK(s.objective == 0.0);
  CHECK(is_feasible(g, TaskSpec::tsp({5, 1, 3, 0}), s.selected));

  std::mt19937_64 rng(9);
  const CostVector c = uniform_costs(g.edge_count(), -5, 5, rng);
  const TaskSpec tri = TaskSpec::tsp({1, 4, 2});
  const double expected = c[*g.edge_index(1, 4)] + c[*g.edge_index(2, 4)] + c[*g.edge_index(1, 2)];
  CHECK(brute_force_solve(g, tri, c).objective == doctest::Approx(expected).epsilon(1e-15));
  CHECK(solve_tsp(g, tri, c).objective == doctest::Approx(expected).epsilon(1e-15));
}

TEST_CASE("TSP size guards") {
  const GraphSpec g = build_complete_graph(random_points(22, 10));
  std::vector<int> big(21);
  for (int i = 0; i < 21; ++i) big[i] = i;
  CHECK(kind_of([&] { solve_tsp(g, TaskSpec::tsp(big), CostVector::zeros(g.edge_count())); }) ==
        ErrorKind::kInvalidInput);
  CHECK(kind_of([&] { TaskSpec::tsp({0, 1}).validate(g); }) == ErrorKind::kInvalidInput);
  CHECK(kind_of([&] { TaskSpec::tsp({0, 1, 1}).validate(g); }) == ErrorKind::kInvalidInput);
  const std::vector<int> nine = {0, 1, 2, 3, 4, 5, 6, 7, 8};
  CHECK(kind_of([&] { brute_force_solve(g, TaskSpec::tsp(nine), CostVector::zeros(g.edge_count())); }) ==
        ErrorKind::kOracleTooLarge);
  CHECK(kind_of([&] { brute_force_solve(g, TaskSpec::shortest_path(0, 5), CostVector::zeros(g.edge_count())); }) ==
        ErrorKind::kOracleTooLarge);

  // Missing induced edge.
  const GraphSpec sparse({{0, 0}, {1, 0}, {0, 1}}, {{0, 1}, {1, 2}});
  CHECK(kind_of([&] { solve_tsp(sparse, TaskSpec::tsp({0, 1, 2}), CostVector::zeros(2)); }) ==
        ErrorKind::kInfeasibleTask);
}

TEST_CASE("exact shortest path matches path enumeration on random DAGs") {
  std::mt19937_64 rng(11);
  for (int inst = 0; inst < 5; ++inst) {
    const GraphSpec full = build_complete_graph(random_points(8, 100 + inst));
    const GraphSpec g = subgraph_edges(full, 16, inst);
    // Pick endpoints that are joined under the orientation.
    TaskSpec t = TaskSpec::shortest_path(0, 7);
    if (!std::isfinite(enumerate_paths(g, t, CostVector::zeros(g.edge_count())))) continue;
    for (int draw = 0; draw < 100; ++draw) {
      const CostVector c = uniform_costs(g.edge_count(), -5, 5, rng);
      const Solution s = solve_shortest_path(g, t, c);
      CHECK(is_feasible(g, t, s.selected));
      CHECK(std::abs(s.objective - enumerate_paths(g, t, c)) <= 1e-9);
      CHECK(std::abs(s.objective - brute_force_solve(g, t, c).objective) <= 1e-9);
    }
  }
}

TEST_CASE("Held-Karp matches tour enumeration for subsets of 4 to 8") {
  std::mt19937_64 rng(12);
  const GraphSpec g = build_complete_graph(random_points(10, 13));
  for (std::size_t k = 4; k <= 8; ++k) {
    std::vector<int> nodes = {9, 2, 7, 0, 5, 3, 8, 1};
    nodes.resize(k);
    const TaskSpec t = TaskSpec::tsp(nodes);
    for (int draw = 0; draw < 20; ++draw) {
      const CostVector c = uniform_costs(g.edge_count(), -5, 5, rng);
      const Solution s = solve_tsp(g, t, c);
      CHECK(is_feasible(g, t, s.selected));
      CHECK(std::abs(s.objective - enumerate_tours(g, t, c)) <= 1e-9);
      CHECK(std::abs(s.objective - brute_force_solve(g, t, c).objective) <= 1e-9);
    }
  }
}

TEST_CASE("objective re-evaluation and dot product") {
  const GraphSpec g = build_complete_graph(random_points(7, 14));
  std::mt19937_64 rng(15);
  const CostVector c = uniform_costs(g.edge_count(), -5, 5, rng);
  const TaskSpec t = TaskSpec::tsp({0, 2, 4, 6});
  const Solution s = solve(g, t, c);
  CHECK(solution_objective(c, s) == s.objective);
  CHECK(solution_objective(CostVector::zeros(g.edge_count()), s) == 0.0);

  std::vector<double> onehot(g.edge_count(), 0.0);
  std::size_t used = 0;
  while (!s.selected[used]) ++used;
  onehot[used] = 1.0;
  CHECK(solution_objective(CostVector(onehot), s) == 1.0);
  CHECK_THROWS_AS(solution_objective(CostVector({1.0}), s), Error);
}

TEST_CASE("solvers are deterministic and feasibility checks reject broken paths") {
  const GraphSpec g = build_complete_graph(random_points(9, 16));
  const CostVector c = CostVector::zeros(g.edge_count());
  const TaskSpec sp = TaskSpec::shortest_path(1, 6);
  CHECK(solve(g, sp, c) == solve(g, sp, c));
  Solution s = solve(g, sp, c);
  CHECK(is_feasible(g, sp, s.selected));
  std::vector<std::uint8_t> none(g.edge_count(), 0);
  CHECK_FALSE(is_feasible(g, sp, none));
  std::vector<std::uint8_t> cycle(g.edge_count(), 0);
  cycle[*g.edge_index(0, 1)] = cycle[*g.edge_index(1, 2)] = 1;
  CHECK_FALSE(is_feasible(g, TaskSpec::tsp({0, 1, 2}), cycle));
  cycle[*g.edge_index(0, 2)] = 1;
  CHECK(is_feasible(g, TaskSpec::tsp({0, 1, 2}), cycle));
}

TEST_CASE("graph and task JSON round trip") {
  const GraphSpec g = subgraph_edges(build_complete_graph(random_points(6, 17)), 8, 1);
  const nlohmann::json j = g;
  CHECK(j.contains("coords"));
  CHECK(j.contains("edges"));
  CHECK(j.get<GraphSpec>() == g);
  CHECK(j.get<GraphSpec>().hash() == g.hash());

  const TaskSpec sp = TaskSpec::shortest_path(0, 4, {{0, 1}, {1, 4}});
  const TaskSpec tsp = TaskSpec::tsp({3, 0, 5});
  CHECK(nlohmann::json(sp).get<TaskSpec>() == sp);
  CHECK(nlohmann::json(tsp).get<TaskSpec>() == tsp);
  CHECK(nlohmann::json(tsp).at("kind") == "tsp");
}
