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

// Decision losses. Each returns the loss value together with its gradient
// (or subgradient) with respect to the predicted cost vector, so the caller
// can push it back through the predictor.

#ifndef MTPO_LOSSES_HPP_
#define MTPO_LOSSES_HPP_

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "mtpo/problems.hpp"

namespace mtpo {

using SolveFn = std::function<Solution(const GraphSpec&, const TaskSpec&,
                                       const CostVector&)>;

struct LossOutput {
  double value = 0.0;
  std::vector<double> grad_cost;

  bool operator==(const LossOutput&) const = default;
};

// c_true^T w*(c_hat) - z*(c_true). Clamped at zero: the two objectives are
// summed over different edge sets and may differ by rounding when tied.
double regret(const GraphSpec& graph, const TaskSpec& task,
              const CostVector& c_hat, const CostVector& c_true,
              const SolveFn& solver = solve);

// Same, with the true optimum already known.
double regret(const GraphSpec& graph, const TaskSpec& task,
              const CostVector& c_hat, const CostVector& c_true,
              double z_true, const SolveFn& solver = solve);

// SPO+ loss  -min_w (2c_hat - c)^T w + 2 c_hat^T w*_c - z*_c  and its
// subgradient 2 (w*_c - w*_{2c_hat - c}). One solver call.
LossOutput spo_plus(const GraphSpec& graph, const TaskSpec& task,
                    const CostVector& c_hat, const CostVector& c_true,
                    const Solution& w_true, double z_true,
                    const SolveFn& solver = solve);

struct PerturbationParams {
  double sigma = 1.0;
  int samples = 1;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

// M standard-Gaussian vectors of length dim. Draw k of perturbation m is a
// pure function of (rng_seed, sample_index, call_counter, m, k), so batches
// can be evaluated in any order or in parallel.
std::vector<std::vector<double>> draw_perturbations(
    std::size_t dim, const PerturbationParams& params,
    std::uint64_t sample_index, std::uint64_t call_counter);

// Perturbed Fenchel-Young loss with a given set of perturbations xi_m:
//   value = c_hat^T w* - (1/M) sum_m min_w (c_hat + sigma xi_m)^T w
//   grad  = w* - (1/M) sum_m argmin_w (c_hat + sigma xi_m)^T w
// The value omits the constant -Omega(w*), so values are only comparable
// for the same label w*.
LossOutput pfyl_with_perturbations(
    const GraphSpec& graph, const TaskSpec& task, const CostVector& c_hat,
    const Solution& w_true, double sigma,
    std::span<const std::vector<double>> perturbations,
    const SolveFn& solver = solve);

LossOutput pfyl(const GraphSpec& graph, const TaskSpec& task,
                const CostVector& c_hat, const Solution& w_true,
                const PerturbationParams& perturb, std::uint64_t sample_index,
                std::uint64_t call_counter, const SolveFn& solver = solve);

// Squared error of one sample, ||c_hat - c||^2, with gradient 2 (c_hat - c).
// When `support` is non-empty only those coordinates enter the loss.
LossOutput mse(std::span<const double> c_hat, std::span<const double> c_true,
               std::span<const std::size_t> support = {});

struct BatchLoss {
  double value = 0.0;
  std::vector<std::vector<double>> grad_cost;  // one per sample
};

// (1/n) sum_i ||c_hat_i - c_i||^2; per-sample gradient 2 (c_hat_i - c_i) / n.
BatchLoss mse(std::span<const CostVector> c_hat,
              std::span<const CostVector> c_true);

}  // namespace mtpo

#endif  // MTPO_LOSSES_HPP_
