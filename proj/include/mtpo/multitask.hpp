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

// Multi-task loss weighting: the seven training strategies, adaptive
// GradNorm weights and patience-based early stopping.
//
//   strategy        loss per model
//   mse             l_MSE(c, c_hat)                       (two-stage)
//   separated       l_dec(c_hat^t) for each task t, one model per task
//   separated+mse   l_dec(c_hat^t) + l_MSE(c^t, c_hat^t), one model per task
//   comb            sum_t l_dec^t
//   comb+mse        sum_t l_dec^t + sum_t l_MSE^t
//   gradnorm        sum_t u_t l_dec^t
//   gradnorm+mse    sum_t u_t l_dec^t + sum_t u_{T+t} l_MSE^t
//
// The fixed-weight "+mse" variants scale the MSE terms by mse_weight.

#ifndef MTPO_MULTITASK_HPP_
#define MTPO_MULTITASK_HPP_

#include <array>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mtpo/losses.hpp"

namespace mtpo {

enum class Strategy {
  kMse,
  kSeparated,
  kSeparatedMse,
  kComb,
  kCombMse,
  kGradNorm,
  kGradNormMse,
};

inline constexpr std::array<Strategy, 7> kAllStrategies = {
    Strategy::kMse,      Strategy::kSeparated, Strategy::kSeparatedMse,
    Strategy::kComb,     Strategy::kCombMse,   Strategy::kGradNorm,
    Strategy::kGradNormMse};

std::string to_string(Strategy strategy);
Strategy parse_strategy(const std::string& text);

bool uses_mse(Strategy s);         // has MSE terms (mse or any "+mse")
bool uses_decision(Strategy s);    // everything but mse
bool is_separated(Strategy s);
bool is_gradnorm(Strategy s);

enum class DecisionLoss { kSpoPlus, kPfyl };
std::string to_string(DecisionLoss loss);
DecisionLoss parse_decision_loss(const std::string& text);

struct StrategyConfig {
  Strategy strategy = Strategy::kComb;
  DecisionLoss loss = DecisionLoss::kSpoPlus;
  double mse_weight = 1.0;

  // PFYL learns from solutions, so it cannot be paired with any MSE term.
  void validate() const;
};

struct GradNormState {
  std::vector<double> weights;
  std::vector<double> initial_losses;  // empty until the first update
  double alpha = 0.1;
  double weight_lr = 0.005;

  static GradNormState uniform(std::size_t terms, double alpha = 0.1,
                               double weight_lr = 0.005);
  std::size_t term_count() const { return weights.size(); }
};

// One step of the weight update. grad_norms[k] is ||grad_W l_k|| for the
// unweighted term k at the monitored layer; losses[k] its current value.
//   G_k = u_k n_k,  r_k = (L_k / L0_k) / mean_j(L_j / L0_j),
//   target_k = mean(G) r_k^alpha (held constant),
//   u_k -= weight_lr * sign(G_k - target_k) n_k,
// then u is floored at 1e-6 and rescaled so that sum u = term count.
// A non-positive initial loss is replaced by |L| + 1e-12 for the rates.
GradNormState gradnorm_update(const GradNormState& state,
                              std::span<const double> grad_norms,
                              std::span<const double> losses);

struct CombinedLoss {
  double value = 0.0;
  std::vector<double> term_values;              // decision terms, then MSE
  std::vector<double> term_weights;             // weight applied to each term
  std::vector<std::vector<double>> task_grads;  // d value / d c_hat^t
};

// decision: one LossOutput per task (empty for mse). mse_terms: one per task
// for "+mse" variants, one or more for mse, empty otherwise. weights: the
// GradNorm state for gradnorm variants (T or 2T terms), null otherwise.
CombinedLoss combine_losses(const StrategyConfig& config,
                            std::span<const LossOutput> decision,
                            std::span<const LossOutput> mse_terms,
                            const GradNormState* weights = nullptr);

struct EarlyStopState {
  std::size_t patience = 5;
  double best = std::numeric_limits<double>::infinity();
  std::size_t since_improvement = 0;
};

// Improvement means strictly lower. Returns true once patience
// non-improving metrics have been seen in a row.
std::pair<bool, EarlyStopState> early_stop_check(const EarlyStopState& state,
                                                 double metric);

}  // namespace mtpo

#endif  // MTPO_MULTITASK_HPP_
