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

#include "mtpo/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mtpo/error.hpp"
#include "mtpo/util.hpp"

namespace mtpo {

namespace {

// Stream tags, so each random ingredient has its own generator.
enum Stream : std::uint64_t {
  kCoords = 1,
  kSubgraph,
  kSpPairs,
  kTspSubsets,
  kMixing,
  kTaskMixing,
  kFeatures,
  kNoise,
};

std::uint64_t stream_seed(std::uint64_t seed, Stream stream, std::uint64_t extra = 0) {
  return mix_keys({seed, stream, extra});
}

// Number of directed low -> high paths from s to t, saturating at 2.
int count_paths(const GraphSpec& graph, int s, int t) {
  std::vector<int> ways(graph.node_count(), 0);
  ways[s] = 1;
  for (int v = s; v < t; ++v) {
    if (!ways[v]) continue;
    for (const Edge& e : graph.edges()) {
      if (e.u == v && e.v <= t) ways[e.v] = std::min(2, ways[e.v] + ways[v]);
    }
  }
  return ways[t];
}

}  // namespace

void GenConfig::validate() const {
  require(feature_dim >= 1, ErrorKind::kInvalidConfig, "feature_dim must be >= 1");
  require(degree >= 1, ErrorKind::kInvalidConfig, "degree must be >= 1");
  require(node_count >= 3, ErrorKind::kInvalidConfig, "node_count must be >= 3");
  require(0.0 < noise_low && noise_low <= noise_high && std::isfinite(noise_high),
          ErrorKind::kInvalidConfig, "need 0 < noise_low <= noise_high");
  require(task_count() >= 1, ErrorKind::kInvalidConfig, "need at least one task");
  require(tsp_tasks == 0 || (3 <= tsp_subset_min && tsp_subset_min <= tsp_subset_max &&
                             tsp_subset_max <= static_cast<std::size_t>(node_count) &&
                             tsp_subset_max <= kMaxTspSubset),
          ErrorKind::kInvalidConfig, "TSP subset sizes out of range");
  require(0.0 <= relatedness && relatedness <= 1.0, ErrorKind::kInvalidConfig,
          "relatedness must lie in [0, 1]");
}

void to_json(nlohmann::json& j, const GenConfig& c) {
  j = nlohmann::json{{"feature_dim", c.feature_dim},
                     {"node_count", c.node_count},
                     {"degree", c.degree},
                     {"noise_low", c.noise_low},
                     {"noise_high", c.noise_high},
                     {"seed", c.seed},
                     {"mode", to_string(c.mode)},
                     {"sp_tasks", c.sp_tasks},
                     {"tsp_tasks", c.tsp_tasks},
                     {"sp_edges", c.sp_edges},
                     {"tsp_subset_min", c.tsp_subset_min},
                     {"tsp_subset_max", c.tsp_subset_max},
                     {"relatedness", c.relatedness}};
}

void from_json(const nlohmann::json& j, GenConfig& c) {
  GenConfig d;
  c.feature_dim = j.value("feature_dim", d.feature_dim);
  c.node_count = j.value("node_count", d.node_count);
  c.degree = j.value("degree", d.degree);
  c.noise_low = j.value("noise_low", d.noise_low);
  c.noise_high = j.value("noise_high", d.noise_high);
  c.seed = j.value("seed", d.seed);
  c.mode = parse_predictor_mode(j.value("mode", to_string(d.mode)));
  c.sp_tasks = j.value("sp_tasks", d.sp_tasks);
  c.tsp_tasks = j.value("tsp_tasks", d.tsp_tasks);
  c.sp_edges = j.value("sp_edges", d.sp_edges);
  c.tsp_subset_min = j.value("tsp_subset_min", d.tsp_subset_min);
  c.tsp_subset_max = j.value("tsp_subset_max", d.tsp_subset_max);
  c.relatedness = j.value("relatedness", d.relatedness);
}

std::vector<Point> gen_coords(int node_count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Point> coords(static_cast<std::size_t>(node_count));
  for (Point& p : coords) {
    p.x = u(rng);
    p.y = u(rng);
  }
  return coords;
}

Matrix gen_features(std::size_t n, std::size_t p, std::uint64_t seed) {
  require(n >= 1 && p >= 1, ErrorKind::kInvalidInput, "feature matrix needs n, p >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix x(n, p);
  for (double& v : x.data) v = normal(rng);
  return x;
}

Matrix gen_mixing_matrix(std::size_t edge_count, std::size_t p, std::uint64_t seed) {
  require(edge_count >= 1 && p >= 1, ErrorKind::kInvalidInput,
          "mixing matrix dims must be >= 1");
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(0.5);
  Matrix b(edge_count, p);
  for (double& v : b.data) v = coin(rng) ? 1.0 : 0.0;
  return b;
}

std::vector<double> polynomial_costs(std::span<const double> x, const Matrix& mixing,
                                     int degree) {
  require(x.size() == mixing.cols, ErrorKind::kInvalidInput,
          "feature length " + std::to_string(x.size()) + " differs from mixing width " +
              std::to_string(mixing.cols));
  const double scale = 1.0 / std::sqrt(static_cast<double>(x.size()));
  std::vector<double> f(mixing.rows);
  for (std::size_t j = 0; j < mixing.rows; ++j) {
    const auto row = mixing.row(j);
    const double bx = std::inner_product(row.begin(), row.end(), x.begin(), 0.0);
    f[j] = std::pow(scale * bx + 3.0, degree);
  }
  return f;
}

CostVector gen_costs(std::span<const double> x, const Matrix& mixing,
                     const GraphSpec& graph, int degree, double noise_low,
                     double noise_high, std::mt19937_64& rng) {
  require(mixing.rows == graph.edge_count(), ErrorKind::kInvalidInput,
          "mixing matrix has " + std::to_string(mixing.rows) + " rows, graph has " +
              std::to_string(graph.edge_count()) + " edges");
  require(0.0 < noise_low && noise_low <= noise_high, ErrorKind::kInvalidInput,
          "need 0 < noise_low <= noise_high");
  const auto f = polynomial_costs(x, mixing, degree);
  std::uniform_real_distribution<double> noise(noise_low, noise_high);
  std::vector<double> c(f.size());
  // Zero needs euclid = 0 and an exact polynomial root; redraw if it happens.
  for (int attempt = 0;; ++attempt) {
    bool positive = true;
    for (std::size_t j = 0; j < c.size(); ++j) {
      const double eps = noise_low == noise_high ? noise_low : noise(rng);
      c[j] = graph.edge_length(j) + f[j] * eps;
      positive = positive && c[j] > 0.0;
    }
    if (positive) break;
    require(attempt < 16, ErrorKind::kInvalidInput,
            "cost formula keeps producing non-positive costs");
  }
  return CostVector(std::move(c));
}

std::vector<CostVector> gen_multicost(std::span<const std::vector<double>> xs,
                                      const Matrix& shared_mixing,
                                      std::span<const Matrix> task_mixing,
                                      double relatedness, const GraphSpec& graph,
                                      int degree, double noise_low,
                                      double noise_high, std::mt19937_64& rng,
                                      bool share_noise) {
  require(xs.size() == task_mixing.size() && !xs.empty(), ErrorKind::kInvalidInput,
          "need one feature vector and one mixing matrix per task");
  require(0.0 <= relatedness && relatedness <= 1.0, ErrorKind::kInvalidInput,
          "relatedness must lie in [0, 1]");
  std::vector<CostVector> out;
  const std::mt19937_64 start = rng;
  for (std::size_t t = 0; t < xs.size(); ++t) {
    const Matrix& own = task_mixing[t];
    require(own.rows == shared_mixing.rows && own.cols == shared_mixing.cols,
            ErrorKind::kInvalidInput, "task mixing matrix shape mismatch");
    Matrix mixed(own.rows, own.cols);
    for (std::size_t k = 0; k < mixed.data.size(); ++k) {
      mixed.data[k] = relatedness * shared_mixing.data[k] + (1.0 - relatedness) * own.data[k];
    }
    if (share_noise) rng = start;
    out.push_back(gen_costs(xs[t], mixed, graph, degree, noise_low, noise_high, rng));
  }
  return out;
}

Dataset derive_solution_labels(const Dataset& dataset, const GraphSpec& graph,
                               bool strip_costs) {
  require(dataset.has_costs(), ErrorKind::kInvalidInput,
          "deriving solution labels needs cost labels");
  dataset.check_graph(graph);
  const auto& tasks = dataset.header().tasks;
  std::vector<Sample> rows = dataset.samples();
  parallel_for(rows.size(), solver_threads(), [&](std::size_t i) {
    rows[i].solutions.clear();
    for (std::size_t t = 0; t < tasks.size(); ++t) {
      try {
        rows[i].solutions.push_back(solve(graph, tasks[t], *rows[i].cost));
      } catch (const Error& e) {
        throw Error(e.kind(), "sample " + std::to_string(i) + ", task " +
                                  std::to_string(t) + ": " + e.what());
      }
    }
  });
  Dataset labeled(dataset.header(), std::move(rows));
  return strip_costs ? labeled.strip_costs() : labeled;
}

Benchmark make_benchmark(const GenConfig& config) {
  config.validate();
  Benchmark b;
  b.config = config;
  b.graph = build_complete_graph(gen_coords(config.node_count,
                                            stream_seed(config.seed, kCoords)));

  if (config.sp_tasks > 0) {
    const GraphSpec sparse =
        subgraph_edges(b.graph, config.sp_edges, stream_seed(config.seed, kSubgraph));
    // Prefer endpoint pairs with a real choice between at least two paths.
    std::vector<std::pair<int, int>> rich, poor;
    for (int s = 0; s < sparse.node_count(); ++s) {
      for (int t = s + 1; t < sparse.node_count(); ++t) {
        const int ways = count_paths(sparse, s, t);
        if (ways >= 2) rich.emplace_back(s, t);
        else if (ways == 1) poor.emplace_back(s, t);
      }
    }
    std::mt19937_64 rng(stream_seed(config.seed, kSpPairs));
    std::shuffle(rich.begin(), rich.end(), rng);
    std::shuffle(poor.begin(), poor.end(), rng);
    rich.insert(rich.end(), poor.begin(), poor.end());
    require(rich.size() >= config.sp_tasks, ErrorKind::kInfeasibleRequest,
            "sparse graph has only " + std::to_string(rich.size()) +
                " connected endpoint pairs");
    std::vector<Edge> support(sparse.edges().begin(), sparse.edges().end());
    for (std::size_t k = 0; k < config.sp_tasks; ++k) {
      b.tasks.push_back(TaskSpec::shortest_path(rich[k].first, rich[k].second, support));
    }
  }

  std::mt19937_64 rng(stream_seed(config.seed, kTspSubsets));
  std::vector<int> nodes(static_cast<std::size_t>(config.node_count));
  std::iota(nodes.begin(), nodes.end(), 0);
  for (std::size_t k = 0; k < config.tsp_tasks; ++k) {
    std::uniform_int_distribution<std::size_t> size(config.tsp_subset_min,
                                                     config.tsp_subset_max);
    const std::size_t n = size(rng);
    std::shuffle(nodes.begin(), nodes.end(), rng);
    std::vector<int> subset(nodes.begin(), nodes.begin() + static_cast<std::ptrdiff_t>(n));
    std::sort(subset.begin(), subset.end());
    b.tasks.push_back(TaskSpec::tsp(std::move(subset)));
  }
  for (const TaskSpec& t : b.tasks) t.validate(b.graph);

  const std::size_t d = b.graph.edge_count();
  b.mixing = gen_mixing_matrix(d, config.feature_dim, stream_seed(config.seed, kMixing));
  if (config.mode == PredictorMode::kMultiCost) {
    for (std::size_t t = 0; t < b.tasks.size(); ++t) {
      b.task_mixing.push_back(gen_mixing_matrix(
          d, config.feature_dim, stream_seed(config.seed, kTaskMixing, t)));
    }
  }
  return b;
}

namespace {

DatasetHeader make_header(const Benchmark& bench, std::vector<TaskSpec> tasks,
                          std::size_t n, std::uint64_t seed) {
  DatasetHeader h;
  h.label = LabelKind::kCost;
  h.feature_dim = bench.config.feature_dim;
  h.cost_dim = bench.graph.edge_count();
  h.graph_hash = bench.graph.hash();
  h.tasks = std::move(tasks);
  h.provenance = {{"gen", bench.config}, {"sample_seed", seed}, {"n", n}};
  return h;
}

}  // namespace

Dataset sample_single_cost(const Benchmark& bench, std::size_t n, std::uint64_t seed) {
  const GenConfig& cfg = bench.config;
  const Matrix x = gen_features(n, cfg.feature_dim, stream_seed(seed, kFeatures));
  std::mt19937_64 rng(stream_seed(seed, kNoise));
  std::vector<Sample> rows(n);
  for (std::size_t i = 0; i < n; ++i) {
    rows[i].features.assign(x.row(i).begin(), x.row(i).end());
    rows[i].cost = gen_costs(x.row(i), bench.mixing, bench.graph, cfg.degree,
                             cfg.noise_low, cfg.noise_high, rng);
    rows[i].solutions.assign(bench.tasks.size(), Solution{});
    for (auto& w : rows[i].solutions) w.selected.assign(bench.graph.edge_count(), 0);
  }
  Dataset raw(make_header(bench, bench.tasks, n, seed), std::move(rows));
  return derive_solution_labels(raw, bench.graph);
}

std::vector<Dataset> sample_multi_cost(const Benchmark& bench, std::size_t n,
                                       std::uint64_t seed) {
  const GenConfig& cfg = bench.config;
  require(bench.task_mixing.size() == bench.tasks.size(), ErrorKind::kInvalidConfig,
          "benchmark was not built in multi-cost mode");
  const std::size_t tasks = bench.tasks.size();
  std::vector<Matrix> x;
  for (std::size_t t = 0; t < tasks; ++t) {
    x.push_back(gen_features(n, cfg.feature_dim, stream_seed(seed, kFeatures, t)));
  }
  std::mt19937_64 rng(stream_seed(seed, kNoise));
  std::vector<std::vector<Sample>> rows(tasks, std::vector<Sample>(n));
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::vector<double>> xs;
    for (std::size_t t = 0; t < tasks; ++t) xs.emplace_back(x[t].row(i).begin(), x[t].row(i).end());
    auto costs = gen_multicost(xs, bench.mixing, bench.task_mixing, cfg.relatedness,
                               bench.graph, cfg.degree, cfg.noise_low, cfg.noise_high, rng);
    for (std::size_t t = 0; t < tasks; ++t) {
      Sample& s = rows[t][i];
      s.features = std::move(xs[t]);
      s.cost = std::move(costs[t]);
      s.solutions.push_back(Solution{std::vector<std::uint8_t>(bench.graph.edge_count(), 0), 0.0});
    }
  }
  std::vector<Dataset> out;
  for (std::size_t t = 0; t < tasks; ++t) {
    DatasetHeader h = make_header(bench, {bench.tasks[t]}, n, seed);
    h.provenance["task_index"] = t;
    out.push_back(derive_solution_labels(Dataset(std::move(h), std::move(rows[t])), bench.graph));
  }
  return out;
}

}  // namespace mtpo
