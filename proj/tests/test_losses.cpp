#include <cmath>
#include <random>

#include "doctest.h"
#include "mtpo/error.hpp"
#include "mtpo/losses.hpp"
#include "test_support.hpp"

using namespace mtpo;
using namespace mtpo::testing;

namespace {

// Edge order (0,1), (1,2), (0,2) so vectors read as path-then-shortcut.
GraphSpec three_node() { return GraphSpec({{0, 0}, {1, 0}, {2, 0}}, {{0, 1}, {1, 2}, {0, 2}}); }


// Regret recomputed from brute-force argmins only.
double brute_regret(const GraphSpec& g, const TaskSpec& t, const CostVector& c_hat,
                    const CostVector& c) {
  return solution_objective(c, brute_force_solve(g, t, c_hat)) - brute_force_solve(g, t, c).objective;
}

CostVector shifted(const CostVector& c, std::span<const double> dir, double step) {
  std::vector<double> v(c.values().begin(), c.values().end());
  for (std::size_t j = 0; j < v.size(); ++j) v[j] += step * dir[j];
  return CostVector(std::move(v));
}

}  // namespace

TEST_CASE("regret is zero for exact and positively scaled predictions") {
  const GraphSpec g = build_complete_graph(random_points(7, 1));
  std::mt19937_64 rng(2);
  const TaskSpec sp = TaskSpec::shortest_path(0, 6);
  const TaskSpec tsp = TaskSpec::tsp({0, 2, 3, 5, 6});
  for (int k = 0; k < 20; ++k) {
    const CostVector c = uniform_costs(g.edge_count(), 0.1, 5, rng);
    std::vector<double> doubled(c.values().begin(), c.values().end());
    for (double& v : doubled) v *= 2.0;
    for (const TaskSpec& t : {sp, tsp}) {
      CHECK(regret(g, t, c, c) == 0.0);
      CHECK(regret(g, t, CostVector(doubled), c) == doctest::Approx(0.0));
    }
  }
}

TEST_CASE("regret matches brute-force recomputation") {
  const GraphSpec g = build_complete_graph(random_points(7, 3));
  std::mt19937_64 rng(4);
  const TaskSpec sp = TaskSpec::shortest_path(1, 5);
  const TaskSpec tsp = TaskSpec::tsp({6, 1, 3, 4});
  for (int k = 0; k < 50; ++k) {
    const CostVector c = uniform_costs(g.edge_count(), -5, 5, rng);
    const CostVector c_hat = uniform_costs(g.edge_count(), -5, 5, rng);
    for (const TaskSpec& t : {sp, tsp}) {
      const double r = regret(g, t, c_hat, c);
      CHECK(r >= 0.0);
      CHECK(r == doctest::Approx(std::max(0.0, brute_regret(g, t, c_hat, c))).epsilon(1e-12));
    }
  }
}

TEST_CASE("SPO+ worked three-node example") {
  const GraphSpec g = three_node();
  const TaskSpec t = TaskSpec::shortest_path(0, 2);
  const CostVector c({1, 1, 3});
  const Solution w = solve(g, t, c);
  REQUIRE(w.objective == 2.0);
  int calls = 0;
  SolveFn counting = [&](const GraphSpec& gg, const TaskSpec& tt, const CostVector& cc) {
    ++calls;
    return solve(gg, tt, cc);
  };
  const LossOutput out = spo_plus(g, t, CostVector({1, 1, 0}), c, w, w.objective, counting);
  CHECK(calls == 1);
  CHECK(out.value == 5.0);
  CHECK(out.grad_cost == std::vector<double>{2, 2, -2});
}

TEST_CASE("SPO+ vanishes at the true cost") {
  const GraphSpec g = build_complete_graph(random_points(6, 5));
  std::mt19937_64 rng(6);
  for (const TaskSpec& t : {TaskSpec::shortest_path(0, 5), TaskSpec::tsp({1, 2, 4, 5})}) {
    const CostVector c = uniform_costs(g.edge_count(), -5, 5, rng);
    const Solution w = solve(g, t, c);
    const LossOutput out = spo_plus(g, t, c, c, w, w.objective);
    CHECK(out.value == doctest::Approx(0.0).epsilon(1e-12));
    for (double x : out.grad_cost) CHECK(x == 0.0);
  }
}

TEST_CASE("SPO+ upper-bounds regret and is convex along chords") {
  const GraphSpec g = build_complete_graph(random_points(7, 7));
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const TaskSpec tasks[] = {TaskSpec::shortest_path(0, 6), TaskSpec::tsp({0, 1, 3, 4, 6})};
  for (int k = 0; k < 200; ++k) {
    const TaskSpec& t = tasks[k % 2];
    const CostVector c = uniform_costs(g.edge_count(), -5, 5, rng);
    const Solution w = solve(g, t, c);
    const CostVector a = uniform_costs(g.edge_count(), -5, 5, rng);
    const CostVector b = uniform_costs(g.edge_count(), -5, 5, rng);
    const double va = spo_plus(g, t, a, c, w, w.objective).value;
    const double vb = spo_plus(g, t, b, c, w, w.objective).value;
    CHECK(va >= brute_regret(g, t, a, c) - 1e-9);

    const double s = unit(rng);
    std::vector<double> mix(a.size());
    for (std::size_t j = 0; j < mix.size(); ++j) mix[j] = s * a[j] + (1 - s) * b[j];
    const double vm = spo_plus(g, t, CostVector(mix), c, w, w.objective).value;
    CHECK(vm <= s * va + (1 - s) * vb + 1e-9);
  }
}

TEST_CASE("PFYL perturbations are reproducible and keyed by sample and counter") {
  PerturbationParams p{1.0, 3, 42};
  const auto a = draw_perturbations(10, p, 5, 7);
  CHECK(a == draw_perturbations(10, p, 5, 7));
  CHECK(a != draw_perturbations(10, p, 6, 7));
  CHECK(a != draw_perturbations(10, p, 5, 8));
  REQUIRE(a.size() == 3);
  CHECK(a[0].size() == 10);

  // Rough moments over a long stream.
  PerturbationParams big{1.0, 2000, 1};
  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  for (const auto& v : draw_perturbations(5, big, 0, 0)) {
    for (double x : v) {
      sum += x;
      sq += x * x;
      ++n;
    }
  }
  CHECK(std::abs(sum / n) < 0.05);
  CHECK(std::abs(sq / n - 1.0) < 0.05);
}

TEST_CASE("PFYL parameter validation") {
  CHECK_THROWS_AS((PerturbationParams{0.0, 1, 0}.validate()), Error);
  CHECK_THROWS_AS((PerturbationParams{1.0, 0, 0}.validate()), Error);
  CHECK_NOTHROW((PerturbationParams{1.0, 1, 0}.validate()));
}

TEST_CASE("PFYL gradient concentrates on a dominant optimum") {
  const GraphSpec g = three_node();
  const TaskSpec t = TaskSpec::shortest_path(0, 2);
  const Solution w = solve(g, t, CostVector({1, 1, 10}));
  const LossOutput out = pfyl(g, t, CostVector({1, 1, 10}), w, {0.01, 500, 3}, 0, 0);
  double norm = 0.0;
  for (double x : out.grad_cost) norm += x * x;
  CHECK(std::sqrt(norm) <= 0.05);
  CHECK(out == pfyl(g, t, CostVector({1, 1, 10}), w, {0.01, 500, 3}, 0, 0));
}

TEST_CASE("PFYL value has the returned gradient under frozen perturbations") {
  const GraphSpec g = build_complete_graph(random_points(7, 9));
  std::mt19937_64 rng(10);
  const TaskSpec t = TaskSpec::tsp({0, 2, 3, 5, 6});
  const CostVector c = uniform_costs(g.edge_count(), 0, 2, rng);
  const Solution w = solve(g, t, c);
  const CostVector c_hat = uniform_costs(g.edge_count(), 0, 2, rng);
  const auto xi = draw_perturbations(g.edge_count(), {1.0, 1000, 11}, 0, 0);
  const LossOutput out = pfyl_with_perturbations(g, t, c_hat, w, 1.0, xi);

  // Each averaged argmin coordinate w_j - grad_j lies in [0, 1].
  for (std::size_t j = 0; j < g.edge_count(); ++j) {
    const double avg = w.selected[j] - out.grad_cost[j];
    CHECK(avg >= -1e-12);
    CHECK(avg <= 1.0 + 1e-12);
  }

  const CostVector dir = uniform_costs(g.edge_count(), -1, 1, rng);
  const double h = 1e-6;
  const double fd = (pfyl_with_perturbations(g, t, shifted(c_hat, dir.values(), h), w, 1.0, xi).value -
                     pfyl_with_perturbations(g, t, shifted(c_hat, dir.values(), -h), w, 1.0, xi).value) /
                    (2 * h);
  double analytic = 0.0;
  for (std::size_t j = 0; j < g.edge_count(); ++j) analytic += out.grad_cost[j] * dir[j];
  CHECK(relative_error(fd, analytic) <= 1e-4);
}

TEST_CASE("PFYL value matches a direct recomputation") {
  const GraphSpec g = three_node();
  const TaskSpec t = TaskSpec::shortest_path(0, 2);
  const Solution w = solve(g, t, CostVector({1, 1, 3}));
  const std::vector<std::vector<double>> xi = {{0.5, -0.5, 0.0}, {0.0, 0.0, -4.0}};
  const LossOutput out = pfyl_with_perturbations(g, t, CostVector({1, 1, 3}), w, 1.0, xi);
  // Perturbed costs [1.5, 0.5, 3] -> path (2); [1, 1, -1] -> shortcut (-1).
  CHECK(out.value == doctest::Approx(2.0 - 0.5 * (2.0 + -1.0)));
  CHECK(out.grad_cost == std::vector<double>{0.5, 0.5, -0.5});
}

TEST_CASE("MSE value and gradient") {
  const std::vector<double> c = {1, 2, 3, 4};
  const LossOutput zero = mse(c, c);
  CHECK(zero.value == 0.0);
  CHECK(zero.grad_cost == std::vector<double>(4, 0.0));

  const std::vector<double> plus = {2, 3, 4, 5};
  const LossOutput one = mse(plus, c);
  CHECK(one.value == 4.0);
  CHECK(one.grad_cost == std::vector<double>(4, 2.0));

  const std::vector<std::size_t> support = {1, 3};
  const LossOutput part = mse(plus, c, support);
  CHECK(part.value == 2.0);
  CHECK(part.grad_cost == std::vector<double>{0, 2, 0, 2});

  CHECK_THROWS_AS(mse(std::vector<double>{1.0}, c), Error);

  std::mt19937_64 rng(12);
  const std::vector<CostVector> hats = {uniform_costs(4, -1, 1, rng), uniform_costs(4, -1, 1, rng)};
  const std::vector<CostVector> truth = {uniform_costs(4, -1, 1, rng), uniform_costs(4, -1, 1, rng)};
  const BatchLoss batch = mse(hats, truth);
  double expected = 0.0;
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 4; ++j) {
      const double d = hats[i][j] - truth[i][j];
      expected += d * d / 2.0;
      CHECK(batch.grad_cost[i][j] == doctest::Approx(2.0 * d / 2.0));
    }
  }
  CHECK(batch.value == doctest::Approx(expected));
}

TEST_CASE("losses report finite gradients for finite inputs") {
  const GraphSpec g = build_complete_graph(random_points(6, 13));
  std::mt19937_64 rng(14);
  const TaskSpec t = TaskSpec::tsp({0, 1, 2, 3, 4, 5});
  const CostVector c = uniform_costs(g.edge_count(), -1e6, 1e6, rng);
  const Solution w = solve(g, t, c);
  const CostVector c_hat = uniform_costs(g.edge_count(), -1e6, 1e6, rng);
  for (double x : spo_plus(g, t, c_hat, c, w, w.objective).grad_cost) CHECK(std::isfinite(x));
  for (double x : pfyl(g, t, c_hat, w, {1.0, 4, 0}, 0, 0).grad_cost) CHECK(std::isfinite(x));
}
