// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Criteria 6, 7 and 10 run the desk-scale benchmark.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>

#include "mtpo/datagen.hpp"
#include "mtpo/error.hpp"
#include "mtpo/experiment.hpp"
#include "mtpo/losses.hpp"
#include "mtpo/multitask.hpp"
#include "mtpo/predictor.hpp"
#include "mtpo/problems.hpp"
#include "mtpo/training.hpp"
#include "test_support.hpp"

using namespace mtpo;
using namespace mtpo::testing;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

int failures = 0;

void report(int id, bool ok, const std::string& detail) {
  std::printf("%s criterion %d: %s\n", ok ? "PASS" : "FAIL", id, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// ---------------------------------------------------------------------------

void solver_oracles() {
  const auto start = Clock::now();
  std::mt19937_64 rng(1);
  std::size_t checks = 0, bad = 0;
  // Shortest path on sparse and dense graphs of up to 12 nodes.
  for (int inst = 0; inst < 6; ++inst) {
    const int n = 6 + inst;
    const GraphSpec full = build_complete_graph(random_points(n, 10 + inst));
    const GraphSpec g = inst % 2 ? full : subgraph_edges(full, 2 * n + 2, inst);
    std::vector<TaskSpec> tasks;
    for (int s = 0; s < 2; ++s) {
      TaskSpec t = TaskSpec::shortest_path(s, n - 1 - s);
      if (std::isfinite(enumerate_paths(g, t, CostVector::zeros(g.edge_count())))) tasks.push_back(t);
    }
    for (const TaskSpec& t : tasks) {
      for (int draw = 0; draw < 100; ++draw) {
        const CostVector c = uniform_costs(g.edge_count(), -5, 5, rng);
        const Solution s = solve(g, t, c);
        const double truth = enumerate_paths(g, t, c);
        ++checks;
        if (!is_feasible(g, t, s.selected) || std::abs(s.objective - truth) > 1e-9 ||
            std::abs(s.objective - solution_objective(c, s)) > 1e-9) {
          ++bad;
        }
      }
    }
  }
  // Held-Karp on subsets of 4 to 8 nodes.
  const GraphSpec g = build_complete_graph(random_points(10, 3));
  for (std::size_t k = 4; k <= 8; ++k) {
    std::vector<int> nodes = {9, 2, 7, 0, 5, 3, 8, 1};
    nodes.resize(k);
    const TaskSpec t = TaskSpec::tsp(nodes);
    for (int draw = 0; draw < 100; ++draw) {
      const CostVector c = uniform_costs(g.edge_count(), -5, 5, rng);
      const Solution s = solve(g, t, c);
      ++checks;
      if (!is_feasible(g, t, s.selected) ||
          std::abs(s.objective - enumerate_tours(g, t, c)) > 1e-9) {
        ++bad;
      }
    }
  }
  const double secs = seconds_since(start);
  report(1, bad == 0 && secs < 30,
         fmt("%zu solver calls vs enumeration, %zu mismatches, %.1fs", checks, bad, secs));
}

void spo_plus_properties() {
  const auto start = Clock::now();
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const GraphSpec full = build_complete_graph(random_points(8, 4));
  const GraphSpec sparse = subgraph_edges(full, 16, 5);
  struct Instance {
    const GraphSpec* g;
    TaskSpec t;
  };
  std::vector<Instance> inst = {{&full, TaskSpec::shortest_path(0, 7)},
                                {&full, TaskSpec::tsp({0, 2, 3, 5, 7})},
                                {&full, TaskSpec::tsp({1, 2, 4, 6})}};
  if (std::isfinite(enumerate_paths(sparse, TaskSpec::shortest_path(0, 7),
                                    CostVector::zeros(sparse.edge_count())))) {
    inst.push_back({&sparse, TaskSpec::shortest_path(0, 7)});
  }
  std::size_t bound_bad = 0, zero_bad = 0, convex_bad = 0;
  for (int k = 0; k < 1000; ++k) {
    const Instance& in = inst[k % inst.size()];
    const GraphSpec& g = *in.g;
    const CostVector c = uniform_costs(g.edge_count(), -5, 5, rng);
    const Solution w = brute_force_solve(g, in.t, c);
    const CostVector c_hat = uniform_costs(g.edge_count(), -5, 5, rng);
    const double value = spo_plus(g, in.t, c_hat, c, w, w.objective).value;
    const double regret_bf =
        solution_objective(c, brute_force_solve(g, in.t, c_hat)) - w.objective;
    if (value < regret_bf - 1e-9) ++bound_bad;
    const LossOutput at_truth = spo_plus(g, in.t, c, c, w, w.objective);
    bool zero = std::abs(at_truth.value) <= 1e-9;
    for (double v : at_truth.grad_cost) zero = zero && v == 0.0;
    if (!zero) ++zero_bad;
  }
  for (int k = 0; k < 200; ++k) {
    const Instance& in = inst[k % inst.size()];
    const GraphSpec& g = *in.g;
    const CostVector c = uniform_costs(g.edge_count(), -5, 5, rng);
    const Solution w = solve(g, in.t, c);
    const CostVector a = uniform_costs(g.edge_count(), -5, 5, rng);
    const CostVector b = uniform_costs(g.edge_count(), -5, 5, rng);
    const double s = unit(rng);
    std::vector<double> mix(a.size());
    for (std::size_t j = 0; j < mix.size(); ++j) mix[j] = s * a[j] + (1 - s) * b[j];
    const double va = spo_plus(g, in.t, a, c, w, w.objective).value;
    const double vb = spo_plus(g, in.t, b, c, w, w.objective).value;
    const double vm = spo_plus(g, in.t, CostVector(mix), c, w, w.objective).value;
    if (vm > s * va + (1 - s) * vb + 1e-9) ++convex_bad;
  }
  const double secs = seconds_since(start);
  report(2, bound_bad + zero_bad + convex_bad == 0 && secs < 60,
         fmt("1000 triples: %zu below regret, %zu nonzero at truth; 200 chords: %zu "
             "non-convex; %.1fs",
             bound_bad, zero_bad, convex_bad, secs));
}

void pfyl_sanity() {
  const auto start = Clock::now();
  std::mt19937_64 rng(3);
  const GraphSpec g = build_complete_graph(random_points(8, 6));
  const TaskSpec tasks[] = {TaskSpec::tsp({0, 2, 3, 5, 7}), TaskSpec::shortest_path(0, 7)};
  double worst = 0.0;
  bool in_range = true;
  for (int k = 0; k < 10; ++k) {
    const TaskSpec& t = tasks[k % 2];
    const CostVector c = uniform_costs(g.edge_count(), 0, 2, rng);
    const Solution w = solve(g, t, c);
    const CostVector c_hat = uniform_costs(g.edge_count(), 0, 2, rng);
    const auto xi = draw_perturbations(g.edge_count(), {1.0, 1000, static_cast<std::uint64_t>(k)}, 0, 0);
    const LossOutput out = pfyl_with_perturbations(g, t, c_hat, w, 1.0, xi);
    for (std::size_t j = 0; j < g.edge_count(); ++j) {
      const double avg = w.selected[j] - out.grad_cost[j];
      in_range = in_range && avg >= -1e-12 && avg <= 1.0 + 1e-12;
    }
    const CostVector dir = uniform_costs(g.edge_count(), -1, 1, rng);
    auto value_at = [&](double step) {
      std::vector<double> v(c_hat.values().begin(), c_hat.values().end());
      for (std::size_t j = 0; j < v.size(); ++j) v[j] += step * dir[j];
      return pfyl_with_perturbations(g, t, CostVector(std::move(v)), w, 1.0, xi).value;
    };
    const double h = 1e-6;
    const double fd = (value_at(h) - value_at(-h)) / (2 * h);
    double analytic = 0.0;
    for (std::size_t j = 0; j < g.edge_count(); ++j) analytic += out.grad_cost[j] * dir[j];
    worst = std::max(worst, relative_error(fd, analytic));
  }
  const double secs = seconds_since(start);
  report(3, worst <= 1e-4 && in_range && secs < 120,
         fmt("M=1000 sigma=1: worst directional relative error %.2e, argmin average in "
             "[0,1]: %s, %.1fs",
             worst, in_range ? "yes" : "no", secs));
}

// Central differences of r . g(x) against backward(), over every parameter.
double gradient_check(PredictorParams p, std::optional<std::size_t> task, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> x(p.feature_dim), r(p.cost_dim);
  for (double& v : x) v = n(rng);
  for (double& v : r) v = n(rng);
  auto objective = [&](const PredictorParams& q) {
    const CostVector c = forward(q, x, task).cost;
    double s = 0.0;
    for (std::size_t j = 0; j < c.size(); ++j) s += r[j] * c[j];
    return s;
  };
  Gradients g = Gradients::zeros_like(p);
  ForwardResult f = forward(p, x, task);
  backward(p, f.tape, r, g);

  double worst = 0.0;
  auto compare = [&](std::vector<DenseLayer>& layers, std::vector<DenseLayer>& grads) {
    for (std::size_t l = 0; l < layers.size(); ++l) {
      auto probe = [&](std::vector<double>& values, const std::vector<double>& analytic) {
        for (std::size_t k = 0; k < values.size(); ++k) {
          const double keep = values[k], h = 1e-6;
          values[k] = keep + h;
          const double up = objective(p);
          values[k] = keep - h;
          const double down = objective(p);
          values[k] = keep;
          const double numeric = (up - down) / (2 * h);
          const double denom = std::max({std::abs(numeric), std::abs(analytic[k]), 1e-4});
          worst = std::max(worst, std::abs(numeric - analytic[k]) / denom);
        }
      };
      probe(layers[l].weights, grads[l].weights);
      probe(layers[l].bias, grads[l].bias);
    }
  };
  compare(p.shared, g.shared);
  for (std::size_t t = 0; t < p.heads.size(); ++t) compare(p.heads[t], g.heads[t]);
  return worst;
}

void predictor_gradients() {
  const double linear =
      gradient_check(init_params(10, 45, std::vector<std::size_t>{}, 1, PredictorMode::kSingleCost, 1),
                     std::nullopt, 2);
  const auto multi =
      init_params(6, 12, std::vector<std::size_t>{16, 8}, 3, PredictorMode::kMultiCost, 3);
  double heads = 0.0;
  for (std::size_t t = 0; t < 3; ++t) heads = std::max(heads, gradient_check(multi, t, 4 + t));
  report(4, linear < 1e-4 && heads < 1e-4,
         fmt("max relative error: single-cost linear %.2e, multi-cost shared+heads %.2e",
             linear, heads));
}

void gradnorm_invariants() {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 20.0);
  std::size_t updates = 0, bad = 0;
  for (std::size_t n : {2u, 3u, 4u, 8u, 12u}) {
    GradNormState s = GradNormState::uniform(n, 0.1, 0.05);
    for (int step = 0; step < 500; ++step) {
      std::vector<double> norms(n), losses(n);
      for (std::size_t k = 0; k < n; ++k) {
        norms[k] = u(rng);
        losses[k] = u(rng) + 0.1;
      }
      s = gradnorm_update(s, norms, losses);
      ++updates;
      double sum = 0.0;
      bool positive = true;
      for (double w : s.weights) {
        sum += w;
        positive = positive && w > 0.0;
      }
      if (sum != static_cast<double>(n) || !positive) ++bad;
    }
  }
  const std::vector<double> norms = {2.0, 1.0}, losses = {1.0, 1.0};
  const GradNormState e = gradnorm_update(GradNormState::uniform(2), norms, losses);
  const bool example = std::abs(e.weights[0] - 0.992481) < 5e-7 &&
                       std::abs(e.weights[1] - 1.007519) < 5e-7;
  report(5, bad == 0 && example,
         fmt("%zu updates, %zu with sum != T or a nonpositive weight; worked example "
             "(%.6f, %.6f)",
             updates, bad, e.weights[0], e.weights[1]));
}

// ---------------------------------------------------------------------------

ExperimentConfig desk_config(std::size_t n_train, const fs::path& out) {
  ExperimentConfig c;
  c.gen.node_count = 10;
  c.gen.sp_tasks = 2;
  c.gen.tsp_tasks = 2;
  c.gen.tsp_subset_min = 5;
  c.gen.tsp_subset_max = 7;
  c.loss = DecisionLoss::kSpoPlus;
  c.seeds = {0, 1, 2, 3, 4};
  c.n_train = n_train;
  c.n_test = 1000;
  c.out = out;
  return c;
}

// Seed-averaged mean normalized regret over tasks, per strategy.
std::map<std::string, double> strategy_means(const BenchReport& r) {
  std::map<std::string, std::pair<double, std::size_t>> acc;
  for (const ResultRow& row : r.rows) {
    auto& [sum, count] = acc[row.strategy];
    sum += row.normalized_regret;
    ++count;
  }
  std::map<std::string, double> out;
  for (const auto& [name, sc] : acc) out[name] = sc.first / static_cast<double>(sc.second);
  return out;
}

std::string means_line(const std::map<std::string, double>& m) {
  std::string s;
  for (Strategy st : kAllStrategies) {
    const auto it = m.find(to_string(st));
    if (it == m.end()) continue;
    s += fmt("%s%s=%.4f", s.empty() ? "" : " ", it->first.c_str(), it->second);
  }
  return s;
}

void trends(const fs::path& scratch) {
  const auto start = Clock::now();
  const BenchReport small = cmd_bench(desk_config(100, scratch / "n100"), 1);
  const double small_secs = seconds_since(start);
  const auto m100 = strategy_means(small);
  std::printf("  n_train=100 mean normalized regret: %s\n", means_line(m100).c_str());

  const double mse = m100.at("mse");
  std::string losers;
  for (const auto& [name, v] : m100) {
    if (name != "mse" && !(v < mse)) losers += (losers.empty() ? "" : ", ") + name;
  }
  const bool a = losers.empty() && small.failed_cells == 0;
  const bool b = m100.at("gradnorm+mse") <= m100.at("separated+mse");
  report(6, a && b && small_secs <= 900,
         fmt("(a) every end-to-end strategy below mse %.4f: %s; (b) gradnorm+mse %.4f <= "
             "separated+mse %.4f: %s; %.0fs",
             mse, a ? "yes" : ("no, not below: " + losers).c_str(), m100.at("gradnorm+mse"),
             m100.at("separated+mse"), b ? "yes" : "no", small_secs));

  const auto start_big = Clock::now();
  const BenchReport big = cmd_bench(desk_config(1000, scratch / "n1000"), 1);
  const auto m1000 = strategy_means(big);
  std::printf("  n_train=1000 mean normalized regret: %s\n", means_line(m1000).c_str());
  const double adv100 = m100.at("separated") - m100.at("gradnorm+mse");
  const double adv1000 = m1000.at("separated") - m1000.at("gradnorm+mse");
  report(7, adv100 > adv1000 && big.failed_cells == 0,
         fmt("separated minus gradnorm+mse: %.4f at n=100, %.4f at n=1000; %.0fs", adv100,
             adv1000, seconds_since(start_big)));

  const BenchReport again = cmd_bench(desk_config(100, scratch / "n100_again"), 1);
  (void)again;
  const std::string first = slurp(scratch / "n100" / "results.csv");
  const std::string second = slurp(scratch / "n100_again" / "results.csv");
  const bool same = !first.empty() && first == second &&
                    slurp(scratch / "n100" / "comparison.csv") ==
                        slurp(scratch / "n100_again" / "comparison.csv");
  report(10, same,
         fmt("two runs of the n_train=100 benchmark: results.csv %zu bytes, %s", first.size(),
             same ? "byte-identical" : "different"));
}

void solution_purity() {
  const ExperimentConfig base = desk_config(100, "unused");
  const Benchmark bench = make_benchmark(base.gen);
  const Dataset holdout = sample_single_cost(bench, 1000, 999);
  std::size_t better = 0;
  bool finite = true, untouched = true;
  std::string detail;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Dataset labeled = sample_single_cost(bench, 100, 100 + seed);
    const Dataset train = labeled.slice(0, 90), valid = labeled.slice(90, 100);
    const Dataset train_stripped = train.strip_costs(), valid_stripped = valid.strip_costs();
    TrainConfig c = base.train_config(Strategy::kComb, seed);
    c.strategy.loss = DecisionLoss::kPfyl;

    // Instrumented run on the cost-labeled rows: the counter must stay at zero.
    train_single_cost(bench.graph, train, valid_stripped, c);
    untouched = untouched && train.cost_reads() == 0;

    const TrainResult r = train_single_cost(bench.graph, train_stripped, valid_stripped, c);
    TrainConfig none = c;
    none.max_iterations = 0;
    const TrainResult init = train_single_cost(bench.graph, train_stripped, valid_stripped, none);
    const double trained = mean_metric(evaluate(r.model, bench.graph, std::span(&holdout, 1)));
    const double untrained = mean_metric(evaluate(init.model, bench.graph, std::span(&holdout, 1)));
    finite = finite && std::isfinite(trained) && !r.diverged;
    if (trained < untrained) ++better;
    detail += fmt("%s%.4f<%.4f", detail.empty() ? "" : " ", trained, untrained);
  }
  report(8, better == 5 && finite && untouched,
         fmt("PFYL comb on stripped data, trained vs untrained holdout regret per seed: %s; "
             "cost reads during training: %s",
             detail.c_str(), untouched ? "0" : "nonzero"));
}

void early_stopping() {
  EarlyStopState s;
  std::vector<double> metrics = {1.0, 1.0, 1.3, 1.0, 2.0, 1.1};
  std::size_t stopped_at = 0;
  for (std::size_t k = 0; k < metrics.size(); ++k) {
    auto [stop, next] = early_stop_check(s, metrics[k]);
    s = next;
    if (stop) {
      stopped_at = k;
      break;
    }
  }
  const bool sequence = stopped_at == 5;

  const ExperimentConfig base = desk_config(100, "unused");
  const Benchmark bench = make_benchmark(base.gen);
  const Dataset data = sample_single_cost(bench, 100, 7);
  bool capped = true;
  std::string detail;
  for (Strategy st : kAllStrategies) {
    TrainConfig c = base.train_config(st, 0);
    c.max_iterations = 23;
    c.patience = 1000;
    const TrainResult r = train_single_cost(bench.graph, data.slice(0, 90), data.slice(90, 100), c);
    const std::size_t models = r.model.members.size();
    capped = capped && r.iterations <= 23 * models;
    detail += fmt("%s%s=%zu/%zu", detail.empty() ? "" : " ", to_string(st).c_str(), r.iterations,
                  23 * models);
  }
  report(9, sequence && capped,
         fmt("1.0 then five non-improving epochs stops at non-improving epoch %zu; "
             "iterations vs cap: %s",
             stopped_at, detail.c_str()));
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path scratch =
      argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "mtpo_acceptance";
  fs::remove_all(scratch);
  fs::create_directories(scratch);
  const auto start = Clock::now();
  try {
    solver_oracles();
    spo_plus_properties();
    pfyl_sanity();
    predictor_gradients();
    gradnorm_invariants();
    trends(scratch);
    solution_purity();
    early_stopping();
  } catch (const std::exception& e) {
    std::printf("FAIL acceptance run aborted: %s\n", e.what());
    return 1;
  }
  std::printf("%d criterion check(s) failed; total %.0fs\n", failures, seconds_since(start));
  return failures == 0 ? 0 : 1;
}
