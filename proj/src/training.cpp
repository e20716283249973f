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

#include "mtpo/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "mtpo/error.hpp"
#include "mtpo/util.hpp"

namespace mtpo {

namespace {

using Clock = std::chrono::steady_clock;

enum class TermKind { kDecision, kTaskMse, kFullMse };

struct Term {
  TermKind kind;
  std::size_t task;  // global task index
  std::string name;
};

// Read-only training view of one task. costs is null when learning from
// solutions, and then nothing in the loop can reach a cost label.
struct TaskView {
  const TaskSpec* spec = nullptr;
  const std::vector<std::vector<double>>* features = nullptr;
  const std::vector<std::vector<Solution>>* solutions = nullptr;
  std::size_t column = 0;
  const std::vector<CostVector>* costs = nullptr;
  std::vector<std::size_t> support;
};

struct Member {
  std::vector<std::size_t> tasks;  // global indices, in head order
  std::vector<Term> terms;
};

bool needs_cost_labels(const StrategyConfig& s) {
  return s.loss == DecisionLoss::kSpoPlus || uses_mse(s.strategy);
}

bool params_finite(const PredictorParams& p) {
  auto ok = [](const DenseLayer& l) {
    return std::all_of(l.weights.begin(), l.weights.end(), [](double v) { return std::isfinite(v); }) &&
           std::all_of(l.bias.begin(), l.bias.end(), [](double v) { return std::isfinite(v); });
  };
  for (const auto& l : p.shared) {
    if (!ok(l)) return false;
  }
  for (const auto& h : p.heads) {
    for (const auto& l : h) {
      if (!ok(l)) return false;
    }
  }
  return true;
}

std::vector<Member> plan_members(Strategy s, std::size_t tasks, PredictorMode mode) {
  auto decision = [](std::size_t t) {
    return Term{TermKind::kDecision, t, "decision[" + std::to_string(t) + "]"};
  };
  auto task_mse = [](std::size_t t) {
    return Term{TermKind::kTaskMse, t, "mse[" + std::to_string(t) + "]"};
  };
  std::vector<Member> members;
  if (is_separated(s)) {
    for (std::size_t t = 0; t < tasks; ++t) {
      Member m;
      m.tasks = {t};
      m.terms.push_back(decision(t));
      if (s == Strategy::kSeparatedMse) m.terms.push_back(task_mse(t));
      members.push_back(std::move(m));
    }
    return members;
  }
  Member m;
  m.tasks.resize(tasks);
  std::iota(m.tasks.begin(), m.tasks.end(), 0);
  if (s == Strategy::kMse) {
    // Single-cost regresses the one shared vector; multi-cost each head.
    if (mode == PredictorMode::kSingleCost) {
      m.terms.push_back({TermKind::kFullMse, 0, "mse"});
    } else {
      for (std::size_t t = 0; t < tasks; ++t) {
        m.terms.push_back({TermKind::kFullMse, t, "mse[" + std::to_string(t) + "]"});
      }
    }
  } else {
    for (std::size_t t = 0; t < tasks; ++t) m.terms.push_back(decision(t));
    if (uses_mse(s)) {
      for (std::size_t t = 0; t < tasks; ++t) m.terms.push_back(task_mse(t));
    }
  }
  members.push_back(std::move(m));
  return members;
}

// Per-task metric core shared by validation and evaluation.
template <typename Predict>
TaskMetrics task_metrics(const Predict& predict, const GraphSpec& graph,
                         const Dataset& data, std::size_t column,
                         std::size_t task_index) {
  const TaskSpec& spec = data.header().tasks[column];
  const std::size_t n = data.size();
  const bool costs = data.has_costs();
  std::vector<double> regret(n, 0.0), z(n, 0.0), sq(n, 0.0), miss(n, 0.0);
  parallel_for(n, solver_threads(), [&](std::size_t i) {
    const CostVector c_hat = predict(data.features(i));
    const Solution w_hat = solve(graph, spec, c_hat);
    const Solution& w_true = data.solution(i, column);
    if (costs) {
      const CostVector& c = data.cost(i);
      z[i] = w_true.objective;
      regret[i] = std::max(0.0, solution_objective(c, w_hat) - z[i]);
      for (std::size_t j = 0; j < c.size(); ++j) {
        const double diff = c_hat[j] - c[j];
        sq[i] += diff * diff;
      }
    } else {
      double diff = 0.0, size = 0.0;
      for (std::size_t j = 0; j < w_hat.selected.size(); ++j) {
        diff += w_hat.selected[j] != w_true.selected[j];
        size += w_true.selected[j];
      }
      miss[i] = size > 0.0 ? diff / (2.0 * size) : 0.0;
    }
  });
  TaskMetrics m;
  m.task = task_index;
  m.samples = n;
  if (n == 0) return m;
  if (costs) {
    double total = 0.0, total_z = 0.0, total_sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      total += regret[i];
      total_z += std::abs(z[i]);
      total_sq += sq[i];
    }
    m.regret = total;
    m.normalized_regret = total_z > 0.0 ? total / total_z : total;
    m.cost_mse = total_sq / static_cast<double>(n);
  } else {
    m.mismatch = std::accumulate(miss.begin(), miss.end(), 0.0) / static_cast<double>(n);
  }
  return m;
}

const Dataset& dataset_for(std::span<const Dataset> data, PredictorMode mode,
                           std::size_t task) {
  return mode == PredictorMode::kSingleCost ? data[0] : data[task];
}

std::size_t column_for(PredictorMode mode, std::size_t task) {
  return mode == PredictorMode::kSingleCost ? task : 0;
}

struct TrainContext {
  const GraphSpec& graph;
  const TrainConfig& config;
  PredictorMode mode;
  std::vector<TaskView> views;  // per global task
  std::size_t sample_count;
  std::span<const Dataset> valid;
  double scale = 1.0;
};

PredictorParams starting_params(const TrainConfig& cfg, std::size_t p, std::size_t d,
                                std::size_t heads, PredictorMode mode, std::uint64_t seed) {
  if (!cfg.initial_params) return init_params(p, d, cfg.hidden, heads, mode, seed);
  const PredictorParams& params = *cfg.initial_params;
  params.validate();
  require(params.mode == mode && params.feature_dim == p && params.cost_dim == d &&
              (mode == PredictorMode::kSingleCost || params.task_count() == heads),
          ErrorKind::kInvalidConfig, "initial parameters do not fit the training data");
  return params;
}

struct MemberOutcome {
  PredictorParams params;
  std::size_t epochs = 0;
  std::size_t iterations = 0;
  double best_metric = std::numeric_limits<double>::infinity();
  bool diverged = false;
  std::string diagnostic;
};

MemberOutcome train_member(const TrainContext& ctx, const Member& member,
                           std::size_t member_index, double elapsed_offset,
                           std::vector<HistoryRow>& history) {
  const TrainConfig& cfg = ctx.config;
  const StrategyConfig& strategy = cfg.strategy;
  const std::size_t p = ctx.views[member.tasks[0]].features->front().size();
  const std::size_t d = ctx.graph.edge_count();
  const std::size_t heads = ctx.mode == PredictorMode::kMultiCost ? member.tasks.size() : 1;
  const std::uint64_t member_seed = mix_keys({cfg.seed, member_index});

  PredictorParams params = starting_params(cfg, p, d, heads, ctx.mode, member_seed);
  OptimizerState opt = make_optimizer(cfg.optimizer, cfg.learning_rate);
  std::optional<GradNormState> gradnorm;
  if (is_gradnorm(strategy.strategy)) {
    gradnorm = GradNormState::uniform(member.terms.size(), cfg.gradnorm_alpha, cfg.gradnorm_lr);
  }
  EarlyStopState early{cfg.patience};

  // Local position of each global task inside this member.
  std::vector<std::size_t> local(ctx.views.size(), 0);
  for (std::size_t k = 0; k < member.tasks.size(); ++k) local[member.tasks[k]] = k;
  const bool shared_forward = ctx.mode == PredictorMode::kSingleCost;
  const std::size_t slots = shared_forward ? 1 : member.tasks.size();
  auto slot_of = [&](std::size_t task) { return shared_forward ? 0 : local[task]; };

  std::vector<Term> decision_terms, mse_terms;
  for (const Term& term : member.terms) {
    (term.kind == TermKind::kDecision ? decision_terms : mse_terms).push_back(term);
  }
  // combine_losses orders terms as decision then MSE; so does member.terms.
  std::vector<std::size_t> combined_task;  // task of each combined gradient
  if (strategy.strategy == Strategy::kMse) {
    for (const Term& term : mse_terms) combined_task.push_back(term.task);
  } else {
    for (const Term& term : decision_terms) combined_task.push_back(term.task);
  }

  MemberOutcome out;
  out.params = params;
  const auto start = Clock::now();
  std::vector<std::size_t> order(ctx.sample_count);
  std::iota(order.begin(), order.end(), 0);

  auto validation = [&](const PredictorParams& current) {
    std::vector<TaskMetrics> metrics;
    for (std::size_t t : member.tasks) {
      const Dataset& data = dataset_for(ctx.valid, ctx.mode, t);
      std::optional<std::size_t> head;
      if (!shared_forward) head = local[t];
      auto predict = [&](std::span<const double> x) { return forward(current, x, head).cost; };
      metrics.push_back(task_metrics(predict, ctx.graph, data, column_for(ctx.mode, t), t));
    }
    return mean_metric(metrics);
  };
  const bool monitor_valid = cfg.monitor == Monitor::kValidationRegret &&
                             !ctx.valid.empty() &&
                             dataset_for(ctx.valid, ctx.mode, member.tasks[0]).size() > 0;

  try {
    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
      if (out.iterations >= cfg.max_iterations) break;
      std::mt19937_64 shuffle_rng(mix_keys({cfg.seed, 0x5f5f, epoch}));
      std::shuffle(order.begin(), order.end(), shuffle_rng);

      std::vector<double> term_sums(member.terms.size(), 0.0);
      std::vector<double> last_weights(member.terms.size(), 1.0);
      double loss_sum = 0.0;
      std::size_t batches = 0;
      for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
        if (out.iterations >= cfg.max_iterations) break;
        const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
        const std::size_t batch = end - begin;
        const double inv_batch = 1.0 / static_cast<double>(batch);

        std::vector<std::vector<ForwardResult>> fw(batch);
        std::vector<CombinedLoss> combined(batch);
        std::vector<std::vector<LossOutput>> raw(batch);  // per term, unweighted
        parallel_for(batch, solver_threads(), [&](std::size_t b) {
          const std::size_t i = order[begin + b];
          for (std::size_t s = 0; s < slots; ++s) {
            const TaskView& v = ctx.views[member.tasks[s]];
            std::optional<std::size_t> head;
            if (!shared_forward) head = s;
            fw[b].push_back(forward(params, (*v.features)[i], head));
          }
          std::vector<LossOutput> dec, mse_out;
          for (const Term& term : member.terms) {
            const TaskView& v = ctx.views[term.task];
            const CostVector& c_hat = fw[b][slot_of(term.task)].cost;
            const Solution& w_true = (*v.solutions)[i][v.column];
            LossOutput l;
            switch (term.kind) {
              case TermKind::kDecision:
                if (strategy.loss == DecisionLoss::kSpoPlus) {
                  l = spo_plus(ctx.graph, *v.spec, c_hat, (*v.costs)[i], w_true,
                               w_true.objective);
                } else {
                  PerturbationParams pp{cfg.pfyl_sigma, cfg.pfyl_samples,
                                        mix_keys({cfg.seed, member_index, term.task})};
                  l = pfyl(ctx.graph, *v.spec, c_hat, w_true, pp, i, out.iterations);
                }
                dec.push_back(l);
                break;
              case TermKind::kTaskMse:
                l = mse(c_hat.values(), (*v.costs)[i].values(), v.support);
                mse_out.push_back(l);
                break;
              case TermKind::kFullMse:
                l = mse(c_hat.values(), (*v.costs)[i].values());
                mse_out.push_back(l);
                break;
            }
            raw[b].push_back(std::move(l));
          }
          combined[b] = combine_losses(strategy, dec, mse_out,
                                       gradnorm ? &*gradnorm : nullptr);
        });

        std::vector<double> term_values(member.terms.size(), 0.0);
        double batch_value = 0.0;
        for (std::size_t b = 0; b < batch; ++b) {
          batch_value += combined[b].value * inv_batch;
          for (std::size_t k = 0; k < term_values.size(); ++k) {
            term_values[k] += combined[b].term_values[k] * inv_batch;
          }
        }
        require(std::isfinite(batch_value), ErrorKind::kTrainingDiverged,
                "non-finite training loss");

        // GradNorm looks at each unweighted term's gradient on the last
        // shared layer; tapes are copied because backward consumes them.
        std::vector<double> norms;
        if (gradnorm) {
          for (std::size_t k = 0; k < member.terms.size(); ++k) {
            Gradients g = Gradients::zeros_like(params);
            std::vector<double> upstream(d);
            for (std::size_t b = 0; b < batch; ++b) {
              const auto& grad = raw[b][k].grad_cost;
              for (std::size_t j = 0; j < d; ++j) upstream[j] = grad[j] * inv_batch;
              Tape tape = fw[b][slot_of(member.terms[k].task)].tape;
              backward(params, tape, upstream, g);
            }
            norms.push_back(frobenius_norm(g.shared.back()));
          }
        }

        Gradients total = Gradients::zeros_like(params);
        for (std::size_t b = 0; b < batch; ++b) {
          std::vector<std::vector<double>> upstream(slots, std::vector<double>(d, 0.0));
          for (std::size_t k = 0; k < combined[b].task_grads.size(); ++k) {
            auto& dst = upstream[slot_of(combined_task[k])];
            const auto& src = combined[b].task_grads[k];
            for (std::size_t j = 0; j < d; ++j) dst[j] += src[j] * inv_batch;
          }
          for (std::size_t s = 0; s < slots; ++s) backward(params, fw[b][s].tape, upstream[s], total);
        }
        apply_update(opt, params, total);
        require(params_finite(params), ErrorKind::kTrainingDiverged,
                "parameters became non-finite");
        if (gradnorm) *gradnorm = gradnorm_update(*gradnorm, norms, term_values);
        ++out.iterations;

        for (std::size_t k = 0; k < term_sums.size(); ++k) term_sums[k] += term_values[k];
        last_weights = gradnorm ? gradnorm->weights : combined.front().term_weights;
        loss_sum += batch_value;
        ++batches;
      }
      if (batches == 0) break;
      ++out.epochs;

      const double metric = monitor_valid ? validation(params)
                                          : loss_sum / static_cast<double>(batches);
      const double elapsed =
          elapsed_offset + std::chrono::duration<double>(Clock::now() - start).count();
      for (std::size_t k = 0; k < member.terms.size(); ++k) {
        history.push_back({member_index, epoch, member.terms[k].name,
                           term_sums[k] / static_cast<double>(batches), last_weights[k],
                           metric, elapsed});
      }
      if (metric < out.best_metric) {
        out.best_metric = metric;
        out.params = params;
      }
      auto [stop, next] = early_stop_check(early, metric);
      early = next;
      if (stop) break;
    }
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::kTrainingDiverged) throw;
    out.diverged = true;
    out.diagnostic = e.what();
  }
  return out;
}

TrainResult run_members(const TrainContext& ctx, std::size_t task_count) {
  const TrainConfig& cfg = ctx.config;
  const auto members = plan_members(cfg.strategy.strategy, task_count, ctx.mode);
  TrainResult result;
  result.model.mode = ctx.mode;
  result.model.member_of_task.assign(task_count, 0);
  result.model.head_of_task.assign(task_count, std::nullopt);
  result.model.output_scale.assign(members.size(), ctx.scale);
  for (std::size_t m = 0; m < members.size(); ++m) {
    for (std::size_t k = 0; k < members[m].tasks.size(); ++k) {
      const std::size_t t = members[m].tasks[k];
      result.model.member_of_task[t] = m;
      if (ctx.mode == PredictorMode::kMultiCost) result.model.head_of_task[t] = k;
    }
  }
  for (std::size_t m = 0; m < members.size(); ++m) {
    MemberOutcome o = train_member(ctx, members[m], m, result.elapsed_seconds, result.history);
    result.model.members.push_back(std::move(o.params));
    result.epochs += o.epochs;
    result.iterations += o.iterations;
    result.best_metric.push_back(o.best_metric);
    result.elapsed_seconds = result.history.empty() ? result.elapsed_seconds
                                                    : result.history.back().elapsed_seconds;
    if (o.diverged) {
      result.diverged = true;
      result.diagnostic = "model " + std::to_string(m) + ": " + o.diagnostic;
      // Remaining members keep their initialization.
      for (std::size_t r = m + 1; r < members.size(); ++r) {
        const std::size_t heads =
            ctx.mode == PredictorMode::kMultiCost ? members[r].tasks.size() : 1;
        result.model.members.push_back(starting_params(
            cfg, ctx.views[0].features->front().size(), ctx.graph.edge_count(), heads,
            ctx.mode, mix_keys({cfg.seed, r})));
      }
      break;
    }
  }
  return result;
}

TaskView make_view(const TaskSpec& spec, const GraphSpec& graph, std::size_t column,
                   const std::optional<CostLabels>& cost_data,
                   const std::optional<SolutionLabels>& sol_data) {
  TaskView v;
  v.spec = &spec;
  v.column = column;
  v.support = task_support(graph, spec);
  if (cost_data) {
    v.features = &cost_data->features;
    v.solutions = &cost_data->solutions;
    v.costs = &cost_data->costs;
  } else {
    v.features = &sol_data->features;
    v.solutions = &sol_data->solutions;
  }
  return v;
}

TrainResult empty_result(const TrainConfig& cfg, PredictorMode mode, std::size_t p,
                         std::size_t d, std::size_t tasks) {
  TrainResult r;
  r.model.mode = mode;
  const auto members = plan_members(cfg.strategy.strategy, tasks, mode);
  r.model.member_of_task.assign(tasks, 0);
  r.model.head_of_task.assign(tasks, std::nullopt);
  r.model.output_scale.assign(members.size(), cfg.cost_scale.value_or(1.0));
  for (std::size_t m = 0; m < members.size(); ++m) {
    const std::size_t heads = mode == PredictorMode::kMultiCost ? members[m].tasks.size() : 1;
    r.model.members.push_back(
        starting_params(cfg, p, d, heads, mode, mix_keys({cfg.seed, m})));
    for (std::size_t k = 0; k < members[m].tasks.size(); ++k) {
      r.model.member_of_task[members[m].tasks[k]] = m;
      if (mode == PredictorMode::kMultiCost) r.model.head_of_task[members[m].tasks[k]] = k;
    }
  }
  return r;
}

// Divides cost labels and stored objectives by the configured scale, or by
// the mean cost entry when none is configured.
double rescale_labels(std::span<CostLabels*> labels, std::optional<double> configured) {
  double scale = configured.value_or(0.0);
  if (!configured) {
    double total = 0.0;
    std::size_t count = 0;
    for (const CostLabels* l : labels) {
      for (const CostVector& c : l->costs) {
        for (double v : c.values()) total += std::abs(v);
        count += c.size();
      }
    }
    scale = count > 0 && total > 0.0 ? total / static_cast<double>(count) : 1.0;
  }
  if (scale == 1.0) return scale;
  for (CostLabels* l : labels) {
    for (CostVector& c : l->costs) {
      std::vector<double> v(c.values().begin(), c.values().end());
      for (double& x : v) x /= scale;
      c = CostVector(std::move(v));
    }
    for (auto& row : l->solutions) {
      for (Solution& w : row) w.objective /= scale;
    }
  }
  return scale;
}

}  // namespace

std::string to_string(Monitor monitor) {
  return monitor == Monitor::kValidationRegret ? "val_regret" : "train_loss";
}

Monitor parse_monitor(const std::string& text) {
  if (text == "val_regret") return Monitor::kValidationRegret;
  if (text == "train_loss") return Monitor::kTrainingLoss;
  throw Error(ErrorKind::kInvalidConfig, "unknown monitor '" + text + "'");
}

void TrainConfig::validate(PredictorMode mode) const {
  strategy.validate();
  require(learning_rate > 0.0 && std::isfinite(learning_rate), ErrorKind::kInvalidConfig,
          "learning rate must be positive");
  require(batch_size >= 1, ErrorKind::kInvalidConfig, "batch size must be >= 1");
  require(pfyl_samples >= 1 && pfyl_sigma > 0.0, ErrorKind::kInvalidConfig,
          "PFYL needs samples >= 1 and sigma > 0");
  require(gradnorm_lr > 0.0, ErrorKind::kInvalidConfig, "GradNorm learning rate must be > 0");
  require(!cost_scale || (*cost_scale > 0.0 && std::isfinite(*cost_scale)),
          ErrorKind::kInvalidConfig, "cost scale must be positive");
  require(mode == PredictorMode::kSingleCost || !hidden.empty(), ErrorKind::kInvalidConfig,
          "multi-cost training needs at least one shared hidden layer");
}

CostVector Ensemble::predict(std::span<const double> x, std::size_t task) const {
  require(task < member_of_task.size(), ErrorKind::kInvalidInput,
          "task " + std::to_string(task) + " out of range");
  const std::size_t m = member_of_task[task];
  CostVector c = forward(members[m], x, head_of_task[task]).cost;
  if (m >= output_scale.size() || output_scale[m] == 1.0) return c;
  std::vector<double> v(c.values().begin(), c.values().end());
  for (double& e : v) e *= output_scale[m];
  return CostVector(std::move(v));
}

void save_ensemble(const Ensemble& model, const std::filesystem::path& stem,
                   const nlohmann::json& extra) {
  nlohmann::json members = nlohmann::json::array();
  std::vector<double> blob;
  for (const auto& m : model.members) {
    members.push_back(params_manifest(m));
    append_params_blob(m, blob);
  }
  nlohmann::json heads = nlohmann::json::array();
  for (const auto& h : model.head_of_task) {
    heads.push_back(h ? nlohmann::json(*h) : nlohmann::json(nullptr));
  }
  nlohmann::json manifest = {{"format", "mtpo-ensemble"},
                             {"mode", to_string(model.mode)},
                             {"member_of_task", model.member_of_task},
                             {"head_of_task", std::move(heads)},
                             {"output_scale", model.output_scale},
                             {"members", std::move(members)},
                             {"blob", stem.filename().string() + ".bin"},
                             {"extra", extra}};
  write_blob(stem.string() + ".bin", blob);
  std::ofstream out(stem.string() + ".json", std::ios::trunc);
  require(out.good(), ErrorKind::kIo, "cannot write " + stem.string() + ".json");
  out << manifest.dump(2) << '\n';
}

Ensemble load_ensemble(const std::filesystem::path& stem, nlohmann::json* extra) {
  std::ifstream in(stem.string() + ".json");
  require(in.good(), ErrorKind::kIo, "cannot read " + stem.string() + ".json");
  const auto manifest = nlohmann::json::parse(in);
  require(manifest.value("format", "") == "mtpo-ensemble", ErrorKind::kInvalidInput,
          stem.string() + ".json is not an ensemble checkpoint");
  const auto blob = read_blob(stem.parent_path() / manifest.at("blob").get<std::string>());
  Ensemble e;
  e.mode = parse_predictor_mode(manifest.at("mode").get<std::string>());
  e.member_of_task = manifest.at("member_of_task").get<std::vector<std::size_t>>();
  for (const auto& h : manifest.at("head_of_task")) {
    e.head_of_task.push_back(h.is_null() ? std::nullopt
                                         : std::optional<std::size_t>(h.get<std::size_t>()));
  }
  e.output_scale = manifest.value("output_scale", std::vector<double>{});
  std::size_t offset = 0;
  for (const auto& m : manifest.at("members")) {
    e.members.push_back(params_from_manifest(m, blob, offset));
  }
  require(offset == blob.size(), ErrorKind::kInvalidInput,
          "ensemble blob is longer than its manifest");
  e.output_scale.resize(e.members.size(), 1.0);
  require(e.head_of_task.size() == e.member_of_task.size(), ErrorKind::kInvalidInput,
          "ensemble routing tables differ in length");
  for (std::size_t m : e.member_of_task) {
    require(m < e.members.size(), ErrorKind::kInvalidInput, "ensemble routes to a missing model");
  }
  if (extra) *extra = manifest.value("extra", nlohmann::json::object());
  return e;
}

TrainResult train_single_cost(const GraphSpec& graph, const Dataset& train,
                              const Dataset& valid, const TrainConfig& config) {
  config.validate(PredictorMode::kSingleCost);
  train.check_graph(graph);
  const auto& tasks = train.header().tasks;
  require(!tasks.empty(), ErrorKind::kInvalidInput, "training dataset lists no tasks");
  require(valid.size() == 0 || valid.header().tasks == tasks, ErrorKind::kInvalidInput,
          "validation tasks differ from training tasks");
  const bool costs = needs_cost_labels(config.strategy);
  require(!costs || train.has_costs(), ErrorKind::kInvalidConfig,
          "strategy '" + to_string(config.strategy.strategy) + "' with " +
              to_string(config.strategy.loss) + " needs cost labels");
  if (train.size() == 0 || config.max_epochs == 0 || config.max_iterations == 0) {
    return empty_result(config, PredictorMode::kSingleCost, train.header().feature_dim,
                        graph.edge_count(), tasks.size());
  }

  std::optional<CostLabels> cost_data;
  std::optional<SolutionLabels> sol_data;
  if (costs) cost_data = train.cost_labels();
  else sol_data = train.solution_labels();

  double scale = config.cost_scale.value_or(1.0);
  if (cost_data) {
    CostLabels* ptr = &*cost_data;
    scale = rescale_labels(std::span(&ptr, 1), config.cost_scale);
  }
  std::span<const Dataset> valid_span(&valid, valid.size() > 0 ? 1 : 0);
  TrainContext ctx{graph, config, PredictorMode::kSingleCost, {}, train.size(), valid_span,
                   scale};
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    ctx.views.push_back(make_view(tasks[t], graph, t, cost_data, sol_data));
  }
  return run_members(ctx, tasks.size());
}

TrainResult train_multi_cost(const GraphSpec& graph, std::span<const Dataset> train,
                             std::span<const Dataset> valid, const TrainConfig& config) {
  config.validate(PredictorMode::kMultiCost);
  require(!train.empty(), ErrorKind::kInvalidInput, "need one dataset per task");
  require(valid.empty() || valid.size() == train.size(), ErrorKind::kInvalidInput,
          "need one validation dataset per task");
  const std::size_t n = train[0].size();
  for (const Dataset& d : train) {
    d.check_graph(graph);
    require(d.header().tasks.size() == 1, ErrorKind::kInvalidInput,
            "multi-cost datasets hold exactly one task each");
    require(d.size() == n, ErrorKind::kInvalidInput,
            "multi-cost datasets must have equal sizes");
  }
  const bool costs = needs_cost_labels(config.strategy);
  for (const Dataset& d : train) {
    require(!costs || d.has_costs(), ErrorKind::kInvalidConfig,
            "strategy '" + to_string(config.strategy.strategy) + "' with " +
                to_string(config.strategy.loss) + " needs cost labels");
  }
  if (n == 0 || config.max_epochs == 0 || config.max_iterations == 0) {
    return empty_result(config, PredictorMode::kMultiCost, train[0].header().feature_dim,
                        graph.edge_count(), train.size());
  }

  std::vector<std::optional<CostLabels>> cost_data(train.size());
  std::vector<std::optional<SolutionLabels>> sol_data(train.size());
  for (std::size_t t = 0; t < train.size(); ++t) {
    if (costs) cost_data[t] = train[t].cost_labels();
    else sol_data[t] = train[t].solution_labels();
  }
  double scale = config.cost_scale.value_or(1.0);
  if (costs) {
    std::vector<CostLabels*> ptrs;
    for (auto& c : cost_data) ptrs.push_back(&*c);
    scale = rescale_labels(ptrs, config.cost_scale);
  }
  std::span<const Dataset> valid_span =
      !valid.empty() && valid[0].size() > 0 ? valid : std::span<const Dataset>{};
  TrainContext ctx{graph, config, PredictorMode::kMultiCost, {}, n, valid_span, scale};
  for (std::size_t t = 0; t < train.size(); ++t) {
    ctx.views.push_back(
        make_view(train[t].header().tasks[0], graph, 0, cost_data[t], sol_data[t]));
  }
  return run_members(ctx, train.size());
}

std::vector<TaskMetrics> evaluate(const Ensemble& model, const GraphSpec& graph,
                                  std::span<const Dataset> test) {
  const std::size_t tasks = model.task_count();
  if (model.mode == PredictorMode::kSingleCost) {
    require(test.size() == 1 && test[0].header().tasks.size() == tasks,
            ErrorKind::kInvalidInput, "single-cost evaluation takes one dataset with every task");
  } else {
    require(test.size() == tasks, ErrorKind::kInvalidInput,
            "multi-cost evaluation takes one dataset per task");
  }
  std::vector<TaskMetrics> out;
  for (std::size_t t = 0; t < tasks; ++t) {
    const Dataset& data = dataset_for(test, model.mode, t);
    data.check_graph(graph);
    require(data.header().feature_dim == model.members[model.member_of_task[t]].feature_dim,
            ErrorKind::kInvalidInput, "feature dimension differs from the model");
    auto predict = [&](std::span<const double> x) { return model.predict(x, t); };
    out.push_back(task_metrics(predict, graph, data, column_for(model.mode, t), t));
  }
  return out;
}

double mean_metric(std::span<const TaskMetrics> metrics) {
  if (metrics.empty()) return 0.0;
  double total = 0.0;
  for (const TaskMetrics& m : metrics) {
    total += m.normalized_regret ? *m.normalized_regret : m.mismatch.value_or(0.0);
  }
  return total / static_cast<double>(metrics.size());
}

void write_history_csv(std::span<const HistoryRow> rows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorKind::kIo, "cannot write " + path.string());
  out << "epoch,term,loss,weight,val_regret,elapsed_seconds\r\n";
  for (const HistoryRow& r : rows) {
    out << r.epoch << ',' << r.term << ',' << format_double(r.loss) << ','
        << format_double(r.weight) << ',' << format_double(r.val_metric) << ','
        << format_double(r.elapsed_seconds) << "\r\n";
  }
  require(out.good(), ErrorKind::kIo, "failed writing " + path.string());
}

}  // namespace mtpo
