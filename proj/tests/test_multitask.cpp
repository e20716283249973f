#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "mtpo/error.hpp"
#include "mtpo/multitask.hpp"

using namespace mtpo;

namespace {

LossOutput term(double value, std::vector<double> grad) { return {value, std::move(grad)}; }

LossOutput random_term(std::size_t d, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  LossOutput out{std::abs(n(rng)), std::vector<double>(d)};
  for (double& g : out.grad_cost) g = n(rng);
  return out;
}

StrategyConfig config(Strategy s, double mse_weight = 1.0) {
  StrategyConfig c;
  c.strategy = s;
  c.mse_weight = mse_weight;
  return c;
}

bool throws_kind(auto&& fn, ErrorKind kind) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind() == kind;
  }
  return false;
}

}  // namespace

TEST_CASE("comb adds the task losses") {
  std::vector<LossOutput> dec = {term(1.0, {1, 0}), term(2.0, {0, 1})};
  const CombinedLoss out = combine_losses(config(Strategy::kComb), dec, {});
  CHECK(out.value == doctest::Approx(3.0));
  CHECK(out.task_grads[0] == std::vector<double>{1, 0});
  CHECK(out.task_grads[1] == std::vector<double>{0, 1});
}

TEST_CASE("gradnorm weights the task losses") {
  std::vector<LossOutput> dec = {term(1.0, {1}), term(2.0, {1})};
  GradNormState w = GradNormState::uniform(2);
  w.weights = {1.5, 0.5};
  const CombinedLoss out = combine_losses(config(Strategy::kGradNorm), dec, {}, &w);
  CHECK(out.value == doctest::Approx(2.5));
  CHECK(out.task_grads[0][0] == doctest::Approx(1.5));
  CHECK(out.task_grads[1][0] == doctest::Approx(0.5));
}

TEST_CASE("comb+mse adds the MSE term") {
  std::vector<LossOutput> dec = {term(3.0, {0})};
  std::vector<LossOutput> mse = {term(0.25, {0})};
  CHECK(combine_losses(config(Strategy::kCombMse), dec, mse).value == doctest::Approx(3.25));
  CHECK(combine_losses(config(Strategy::kCombMse, 2.0), dec, mse).value ==
        doctest::Approx(3.5));
}

TEST_CASE("every strategy matches the hand-expanded weighted sum") {
  std::mt19937_64 rng(11);
  const std::size_t tasks = 3, d = 5;
  for (Strategy s : kAllStrategies) {
    for (int rep = 0; rep < 10; ++rep) {
      std::vector<LossOutput> dec, mse;
      if (s != Strategy::kMse) {
        for (std::size_t t = 0; t < tasks; ++t) dec.push_back(random_term(d, rng));
      }
      if (uses_mse(s)) {
        for (std::size_t t = 0; t < tasks; ++t) mse.push_back(random_term(d, rng));
      }
      std::optional<GradNormState> w;
      if (is_gradnorm(s)) {
        w = GradNormState::uniform(dec.size() + mse.size());
        std::uniform_real_distribution<double> u(0.1, 2.0);
        for (double& x : w->weights) x = u(rng);
      }
      const double mse_weight = 0.7;
      const CombinedLoss out =
          combine_losses(config(s, mse_weight), dec, mse, w ? &*w : nullptr);

      double value = 0.0;
      std::vector<std::vector<double>> grads(tasks, std::vector<double>(d, 0.0));
      for (std::size_t t = 0; t < dec.size(); ++t) {
        const double u = w ? w->weights[t] : 1.0;
        value += u * dec[t].value;
        for (std::size_t j = 0; j < d; ++j) grads[t][j] += u * dec[t].grad_cost[j];
      }
      for (std::size_t t = 0; t < mse.size(); ++t) {
        double u = s == Strategy::kMse ? 1.0 : mse_weight;
        if (w) u = w->weights[dec.size() + t];
        value += u * mse[t].value;
        for (std::size_t j = 0; j < d; ++j) grads[t][j] += u * mse[t].grad_cost[j];
      }
      CHECK(std::abs(out.value - value) <= 1e-12);
      REQUIRE(out.task_grads.size() == tasks);
      for (std::size_t t = 0; t < tasks; ++t) {
        for (std::size_t j = 0; j < d; ++j) {
          CHECK(std::abs(out.task_grads[t][j] - grads[t][j]) <= 1e-12);
        }
      }
    }
  }
}

TEST_CASE("combine_losses rejects mismatched inputs") {
  std::vector<LossOutput> dec = {term(1.0, {1})};
  std::vector<LossOutput> mse = {term(1.0, {1})};
  GradNormState w = GradNormState::uniform(1);
  CHECK(throws_kind([&] { combine_losses(config(Strategy::kComb), dec, mse); },
                    ErrorKind::kInvalidConfig));
  CHECK(throws_kind([&] { combine_losses(config(Strategy::kCombMse), dec, {}); },
                    ErrorKind::kInvalidConfig));
  CHECK(throws_kind([&] { combine_losses(config(Strategy::kGradNorm), dec, {}); },
                    ErrorKind::kInvalidConfig));
  CHECK(throws_kind([&] { combine_losses(config(Strategy::kComb), dec, {}, &w); },
                    ErrorKind::kInvalidConfig));
  CHECK(throws_kind([&] { combine_losses(config(Strategy::kGradNormMse), dec, mse, &w); },
                    ErrorKind::kInvalidConfig));
  CHECK(throws_kind([&] { combine_losses(config(Strategy::kMse), dec, mse); },
                    ErrorKind::kInvalidConfig));
  CHECK(throws_kind([&] { combine_losses(config(Strategy::kComb), {}, {}); },
                    ErrorKind::kInvalidConfig));
}

TEST_CASE("gradnorm step on two terms") {
  const GradNormState s = GradNormState::uniform(2);
  const std::vector<double> norms = {2.0, 1.0}, losses = {1.0, 1.0};
  const GradNormState next = gradnorm_update(s, norms, losses);
  CHECK(next.weights[0] == doctest::Approx(0.99 * 2.0 / 1.995).epsilon(1e-9));
  CHECK(next.weights[1] == doctest::Approx(1.005 * 2.0 / 1.995).epsilon(1e-9));
  CHECK(next.weights[0] == doctest::Approx(0.992481).epsilon(1e-6));
  CHECK(next.weights[1] == doctest::Approx(1.007519).epsilon(1e-6));
  CHECK(next.initial_losses == losses);
}

TEST_CASE("gradnorm leaves a symmetric state unchanged") {
  GradNormState s = GradNormState::uniform(4);
  const std::vector<double> norms(4, 0.7), losses(4, 2.0);
  for (int k = 0; k < 5; ++k) s = gradnorm_update(s, norms, losses);
  for (double w : s.weights) CHECK(w == 1.0);
}

TEST_CASE("gradnorm weights always sum to the term count") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 50.0);
  for (std::size_t n : {1u, 2u, 3u, 6u}) {
    GradNormState s = GradNormState::uniform(n, 0.1, 0.5);
    for (int step = 0; step < 200; ++step) {
      std::vector<double> norms(n), losses(n);
      for (std::size_t k = 0; k < n; ++k) {
        norms[k] = u(rng);
        losses[k] = u(rng) - 5.0;
      }
      s = gradnorm_update(s, norms, losses);
      CHECK(std::accumulate(s.weights.begin(), s.weights.end(), 0.0) ==
            static_cast<double>(n));
      for (double w : s.weights) CHECK(w > 0.0);
    }
  }
}

TEST_CASE("gradnorm tolerates a nonpositive initial loss and rejects bad input") {
  GradNormState s = GradNormState::uniform(2);
  const std::vector<double> norms = {1.0, 3.0}, zero = {0.0, -1.0};
  s = gradnorm_update(s, norms, zero);
  const std::vector<double> losses = {0.5, 0.5};
  s = gradnorm_update(s, norms, losses);
  for (double w : s.weights) CHECK(std::isfinite(w));
  const std::vector<double> nan = {NAN, 1.0};
  CHECK(throws_kind([&] { gradnorm_update(s, nan, losses); }, ErrorKind::kTrainingDiverged));
  const std::vector<double> three = {1.0, 1.0, 1.0};
  CHECK(throws_kind([&] { gradnorm_update(s, three, losses); }, ErrorKind::kInvalidInput));
}

TEST_CASE("early stopping on improving metrics never stops") {
  EarlyStopState s;
  for (double m : {1.0, 0.9, 0.8}) {
    auto [stop, next] = early_stop_check(s, m);
    CHECK_FALSE(stop);
    s = next;
  }
  CHECK(s.best == 0.8);
}

TEST_CASE("early stopping after five flat epochs") {
  EarlyStopState s;
  std::vector<double> metrics = {1.0, 1.0, 1.2, 1.0, 3.0, 1.0};
  for (std::size_t k = 0; k < metrics.size(); ++k) {
    auto [stop, next] = early_stop_check(s, metrics[k]);
    CHECK(stop == (k == metrics.size() - 1));
    s = next;
  }
}

TEST_CASE("early stopping counter resets on improvement") {
  EarlyStopState s;
  std::vector<double> metrics = {1.0, 1.1, 0.9, 1.0, 1.0, 0.95, 0.9, 2.0};
  bool stopped = false;
  for (std::size_t k = 0; k < metrics.size(); ++k) {
    auto [stop, next] = early_stop_check(s, metrics[k]);
    CHECK(stop == (k == metrics.size() - 1));
    stopped = stop;
    s = next;
  }
  CHECK(stopped);
  CHECK(s.best == 0.9);
  CHECK(throws_kind([&] { early_stop_check(s, NAN); }, ErrorKind::kTrainingDiverged));
}

TEST_CASE("strategy names round trip") {
  for (Strategy s : kAllStrategies) CHECK(parse_strategy(to_string(s)) == s);
  CHECK(throws_kind([] { parse_strategy("uncertainty"); }, ErrorKind::kInvalidConfig));
  CHECK(parse_decision_loss("spo+") == DecisionLoss::kSpoPlus);
  CHECK(parse_decision_loss("pfyl") == DecisionLoss::kPfyl);
  CHECK(throws_kind([] { parse_decision_loss("nce"); }, ErrorKind::kInvalidConfig));
}

TEST_CASE("PFYL cannot be paired with MSE terms") {
  for (Strategy s : kAllStrategies) {
    StrategyConfig c = config(s);
    c.loss = DecisionLoss::kPfyl;
    if (uses_mse(s)) {
      CHECK(throws_kind([&] { c.validate(); }, ErrorKind::kInvalidConfig));
    } else {
      CHECK_NOTHROW(c.validate());
    }
  }
  StrategyConfig c = config(Strategy::kCombMse, -1.0);
  CHECK(throws_kind([&] { c.validate(); }, ErrorKind::kInvalidConfig));
}
