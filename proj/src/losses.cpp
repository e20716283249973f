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

#include "mtpo/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "mtpo/error.hpp"
#include "mtpo/util.hpp"

namespace mtpo {

namespace {

void check_dims(const GraphSpec& graph, const CostVector& a,
                const CostVector& b) {
  require(a.size() == graph.edge_count() && b.size() == graph.edge_count(),
          ErrorKind::kInvalidInput, "cost dimension does not match the graph");
}

// Uniform in (0, 1] from the top 53 bits.
double unit_open(std::uint64_t bits) {
  return (static_cast<double>(bits >> 11) + 1.0) * 0x1.0p-53;
}

}  // namespace

double regret(const GraphSpec& graph, const TaskSpec& task,
              const CostVector& c_hat, const CostVector& c_true,
              double z_true, const SolveFn& solver) {
  check_dims(graph, c_hat, c_true);
  const Solution w_hat = solver(graph, task, c_hat);
  return std::max(0.0, solution_objective(c_true, w_hat) - z_true);
}

double regret(const GraphSpec& graph, const TaskSpec& task,
              const CostVector& c_hat, const CostVector& c_true,
              const SolveFn& solver) {
  check_dims(graph, c_hat, c_true);
  const double z_true = solver(graph, task, c_true).objective;
  return regret(graph, task, c_hat, c_true, z_true, solver);
}

LossOutput spo_plus(const GraphSpec& graph, const TaskSpec& task,
                    const CostVector& c_hat, const CostVector& c_true,
                    const Solution& w_true, double z_true,
                    const SolveFn& solver) {
  check_dims(graph, c_hat, c_true);
  require(w_true.selected.size() == graph.edge_count(),
          ErrorKind::kInvalidInput, "true solution dimension mismatch");
  const std::size_t d = graph.edge_count();
  std::vector<double> modified(d);
  for (std::size_t j = 0; j < d; ++j) modified[j] = 2.0 * c_hat[j] - c_true[j];
  const CostVector modified_cost(std::move(modified));
  const Solution w_mod = solver(graph, task, modified_cost);

  LossOutput out;
  out.value = -w_mod.objective + 2.0 * solution_objective(c_hat, w_true) - z_true;
  out.grad_cost.resize(d);
  for (std::size_t j = 0; j < d; ++j) {
    out.grad_cost[j] =
        2.0 * (static_cast<double>(w_true.selected[j]) - w_mod.selected[j]);
  }
  return out;
}

void PerturbationParams::validate() const {
  require(sigma > 0.0 && std::isfinite(sigma), ErrorKind::kInvalidConfig,
          "perturbation sigma must be positive");
  require(samples >= 1, ErrorKind::kInvalidConfig,
          "perturbation samples must be >= 1");
}

std::vector<std::vector<double>> draw_perturbations(
    std::size_t dim, const PerturbationParams& params,
    std::uint64_t sample_index, std::uint64_t call_counter) {
  params.validate();
  std::vector<std::vector<double>> out(static_cast<std::size_t>(params.samples));
  for (std::size_t m = 0; m < out.size(); ++m) {
    const std::uint64_t key =
        mix_keys({params.rng_seed, sample_index, call_counter, m});
    auto& xi = out[m];
    xi.resize(dim);
    // Box-Muller, one pair of uniforms per pair of coordinates.
    for (std::size_t k = 0; k < dim; k += 2) {
      const double u1 = unit_open(mix_keys({key, 2 * k}));
      const double u2 = unit_open(mix_keys({key, 2 * k + 1}));
      const double r = std::sqrt(-2.0 * std::log(u1));
      const double theta = 2.0 * std::numbers::pi * u2;
      xi[k] = r * std::cos(theta);
      if (k + 1 < dim) xi[k + 1] = r * std::sin(theta);
    }
  }
  return out;
}

LossOutput pfyl_with_perturbations(
    const GraphSpec& graph, const TaskSpec& task, const CostVector& c_hat,
    const Solution& w_true, double sigma,
    std::span<const std::vector<double>> perturbations,
    const SolveFn& solver) {
  const std::size_t d = graph.edge_count();
  require(c_hat.size() == d && w_true.selected.size() == d,
          ErrorKind::kInvalidInput, "pfyl dimension mismatch");
  require(!perturbations.empty(), ErrorKind::kInvalidInput,
          "pfyl needs at least one perturbation");

  std::vector<double> mean_argmin(d, 0.0);
  double mean_min = 0.0;
  std::vector<double> perturbed(d);
  for (const auto& xi : perturbations) {
    require(xi.size() == d, ErrorKind::kInvalidInput,
            "perturbation dimension mismatch");
    for (std::size_t j = 0; j < d; ++j) perturbed[j] = c_hat[j] + sigma * xi[j];
    const Solution w = solver(graph, task, CostVector(perturbed));
    mean_min += w.objective;
    for (std::size_t j = 0; j < d; ++j) mean_argmin[j] += w.selected[j];
  }
  const double inv_m = 1.0 / static_cast<double>(perturbations.size());
  mean_min *= inv_m;

  LossOutput out;
  out.value = solution_objective(c_hat, w_true) - mean_min;
  out.grad_cost.resize(d);
  for (std::size_t j = 0; j < d; ++j) {
    out.grad_cost[j] = w_true.selected[j] - mean_argmin[j] * inv_m;
  }
  return out;
}

LossOutput pfyl(const GraphSpec& graph, const TaskSpec& task,
                const CostVector& c_hat, const Solution& w_true,
                const PerturbationParams& perturb, std::uint64_t sample_index,
                std::uint64_t call_counter, const SolveFn& solver) {
  const auto xi = draw_perturbations(graph.edge_count(), perturb, sample_index,
                                     call_counter);
  return pfyl_with_perturbations(graph, task, c_hat, w_true, perturb.sigma, xi,
                                 solver);
}

LossOutput mse(std::span<const double> c_hat, std::span<const double> c_true,
               std::span<const std::size_t> support) {
  require(c_hat.size() == c_true.size(), ErrorKind::kInvalidInput,
          "mse dimension mismatch: " + std::to_string(c_hat.size()) + " vs " +
              std::to_string(c_true.size()));
  LossOutput out;
  out.grad_cost.assign(c_hat.size(), 0.0);
  auto add = [&](std::size_t j) {
    const double diff = c_hat[j] - c_true[j];
    out.value += diff * diff;
    out.grad_cost[j] = 2.0 * diff;
  };
  if (support.empty()) {
    for (std::size_t j = 0; j < c_hat.size(); ++j) add(j);
  } else {
    for (std::size_t j : support) {
      require(j < c_hat.size(), ErrorKind::kInvalidInput,
              "mse support index out of range");
      add(j);
    }
  }
  return out;
}

BatchLoss mse(std::span<const CostVector> c_hat,
              std::span<const CostVector> c_true) {
  require(c_hat.size() == c_true.size() && !c_hat.empty(),
          ErrorKind::kInvalidInput, "mse batch size mismatch");
  const double inv_n = 1.0 / static_cast<double>(c_hat.size());
  BatchLoss out;
  out.grad_cost.reserve(c_hat.size());
  for (std::size_t i = 0; i < c_hat.size(); ++i) {
    LossOutput one = mse(c_hat[i].values(), c_true[i].values());
    out.value += one.value * inv_n;
    for (double& g : one.grad_cost) g *= inv_n;
    out.grad_cost.push_back(std::move(one.grad_cost));
  }
  return out;
}

}  // namespace mtpo
