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

#include "mtpo/multitask.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mtpo/error.hpp"

namespace mtpo {

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::kMse: return "mse";
    case Strategy::kSeparated: return "separated";
    case Strategy::kSeparatedMse: return "separated+mse";
    case Strategy::kComb: return "comb";
    case Strategy::kCombMse: return "comb+mse";
    case Strategy::kGradNorm: return "gradnorm";
    case Strategy::kGradNormMse: return "gradnorm+mse";
  }
  return "?";
}

Strategy parse_strategy(const std::string& text) {
  for (Strategy s : kAllStrategies) {
    if (to_string(s) == text) return s;
  }
  throw Error(ErrorKind::kInvalidConfig, "unknown strategy '" + text + "'");
}

bool uses_mse(Strategy s) {
  return s == Strategy::kMse || s == Strategy::kSeparatedMse ||
         s == Strategy::kCombMse || s == Strategy::kGradNormMse;
}

bool uses_decision(Strategy s) { return s != Strategy::kMse; }

bool is_separated(Strategy s) {
  return s == Strategy::kSeparated || s == Strategy::kSeparatedMse;
}

bool is_gradnorm(Strategy s) {
  return s == Strategy::kGradNorm || s == Strategy::kGradNormMse;
}

std::string to_string(DecisionLoss loss) {
  return loss == DecisionLoss::kSpoPlus ? "spo+" : "pfyl";
}

DecisionLoss parse_decision_loss(const std::string& text) {
  if (text == "spo+" || text == "spo_plus" || text == "spoplus") return DecisionLoss::kSpoPlus;
  if (text == "pfyl") return DecisionLoss::kPfyl;
  throw Error(ErrorKind::kInvalidConfig, "unknown decision loss '" + text + "'");
}

void StrategyConfig::validate() const {
  require(!(loss == DecisionLoss::kPfyl && uses_mse(strategy)),
          ErrorKind::kInvalidConfig,
          "strategy '" + to_string(strategy) +
              "' needs cost labels, which PFYL (learning from solutions) does not use");
  require(mse_weight >= 0.0 && std::isfinite(mse_weight), ErrorKind::kInvalidConfig,
          "mse_weight must be a nonnegative number");
}

GradNormState GradNormState::uniform(std::size_t terms, double alpha,
                                     double weight_lr) {
  require(terms >= 1 && terms <= 4096, ErrorKind::kInvalidConfig,
          "GradNorm needs between 1 and 4096 terms");
  require(weight_lr > 0.0, ErrorKind::kInvalidConfig, "GradNorm weight_lr must be > 0");
  GradNormState s;
  s.weights.assign(terms, 1.0);
  s.alpha = alpha;
  s.weight_lr = weight_lr;
  return s;
}

GradNormState gradnorm_update(const GradNormState& state,
                              std::span<const double> grad_norms,
                              std::span<const double> losses) {
  const std::size_t n = state.term_count();
  require(grad_norms.size() == n && losses.size() == n, ErrorKind::kInvalidInput,
          "GradNorm term count mismatch");
  for (std::size_t k = 0; k < n; ++k) {
    require(std::isfinite(grad_norms[k]) && grad_norms[k] >= 0.0 &&
                std::isfinite(losses[k]),
            ErrorKind::kTrainingDiverged, "non-finite GradNorm input");
  }
  GradNormState next = state;
  if (next.initial_losses.empty()) next.initial_losses.assign(losses.begin(), losses.end());

  constexpr double kTiny = 1e-12;
  std::vector<double> g(n), rate(n);
  for (std::size_t k = 0; k < n; ++k) {
    g[k] = state.weights[k] * grad_norms[k];
    double l0 = next.initial_losses[k];
    if (l0 <= 0.0) l0 = std::abs(l0) + kTiny;
    rate[k] = losses[k] / l0;
  }
  const double g_mean = std::accumulate(g.begin(), g.end(), 0.0) / static_cast<double>(n);
  const double rate_mean =
      std::accumulate(rate.begin(), rate.end(), 0.0) / static_cast<double>(n);

  std::vector<double> u(n);
  for (std::size_t k = 0; k < n; ++k) {
    // Relative inverse training rate; all ones when the rates are degenerate.
    const double r = rate_mean > 0.0 ? std::max(rate[k] / rate_mean, 0.0) : 1.0;
    const double target = g_mean * std::pow(r, state.alpha);
    const double diff = g[k] - target;
    const double sign = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
    u[k] = std::max(state.weights[k] - state.weight_lr * sign * grad_norms[k], 1e-6);
  }
  const double total = std::accumulate(u.begin(), u.end(), 0.0);
  const double scale = static_cast<double>(n) / total;
  for (double& w : u) w *= scale;
  // Snap to a 2^-40 grid so every partial sum is exact, then hand the
  // rounding residual to the largest weight: sum u == n holds bit for bit.
  const double grid = std::ldexp(1.0, -40);
  for (double& w : u) w = std::max(std::round(w / grid), 1.0) * grid;
  *std::max_element(u.begin(), u.end()) +=
      static_cast<double>(n) - std::accumulate(u.begin(), u.end(), 0.0);
  next.weights = std::move(u);
  return next;
}

CombinedLoss combine_losses(const StrategyConfig& config,
                            std::span<const LossOutput> decision,
                            std::span<const LossOutput> mse_terms,
                            const GradNormState* weights) {
  config.validate();
  const Strategy s = config.strategy;
  if (s == Strategy::kMse) {
    require(decision.empty() && !mse_terms.empty(), ErrorKind::kInvalidConfig,
            "mse strategy takes MSE terms only");
  } else {
    require(!decision.empty(), ErrorKind::kInvalidConfig,
            "strategy '" + to_string(s) + "' needs decision losses");
    require(uses_mse(s) ? mse_terms.size() == decision.size() : mse_terms.empty(),
            ErrorKind::kInvalidConfig,
            "strategy '" + to_string(s) + "' got the wrong number of MSE terms");
  }
  const std::size_t tasks = decision.size();
  if (is_gradnorm(s)) {
    require(weights != nullptr &&
                weights->term_count() == tasks + mse_terms.size(),
            ErrorKind::kInvalidConfig, "GradNorm weights missing or mis-sized");
  } else {
    require(weights == nullptr, ErrorKind::kInvalidConfig,
            "adaptive weights given to a fixed-weight strategy");
  }

  CombinedLoss out;
  for (std::size_t t = 0; t < tasks; ++t) {
    out.term_values.push_back(decision[t].value);
    out.term_weights.push_back(weights ? weights->weights[t] : 1.0);
  }
  for (std::size_t t = 0; t < mse_terms.size(); ++t) {
    out.term_values.push_back(mse_terms[t].value);
    double w = 1.0;
    if (weights) w = weights->weights[tasks + t];
    else if (s != Strategy::kMse) w = config.mse_weight;
    out.term_weights.push_back(w);
  }

  auto accumulate_into = [](std::vector<double>& dst, const LossOutput& term, double w) {
    if (dst.empty()) dst.assign(term.grad_cost.size(), 0.0);
    require(dst.size() == term.grad_cost.size(), ErrorKind::kInvalidInput,
            "loss gradients for one task differ in length");
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += w * term.grad_cost[j];
  };
  out.task_grads.resize(s == Strategy::kMse ? mse_terms.size() : tasks);
  for (std::size_t t = 0; t < tasks; ++t) {
    accumulate_into(out.task_grads[t], decision[t], out.term_weights[t]);
  }
  for (std::size_t t = 0; t < mse_terms.size(); ++t) {
    accumulate_into(out.task_grads[t], mse_terms[t], out.term_weights[tasks + t]);
  }
  for (std::size_t k = 0; k < out.term_values.size(); ++k) {
    out.value += out.term_weights[k] * out.term_values[k];
  }
  return out;
}

std::pair<bool, EarlyStopState> early_stop_check(const EarlyStopState& state,
                                                 double metric) {
  require(std::isfinite(metric), ErrorKind::kTrainingDiverged,
          "early-stopping metric is not finite");
  EarlyStopState next = state;
  if (metric < next.best) {
    next.best = metric;
    next.since_improvement = 0;
  } else {
    ++next.since_improvement;
  }
  return {next.since_improvement >= next.patience, next};
}

}  // namespace mtpo
