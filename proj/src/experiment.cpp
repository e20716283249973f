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

#include "mtpo/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "mtpo/error.hpp"
#include "mtpo/util.hpp"

namespace mtpo {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kSplitStream = 0x73706c6974;
constexpr std::uint64_t kHoldoutStream = 0x686f6c64;

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  require(j.is_object(), ErrorKind::kInvalidConfig, where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    require(allowed.count(key) > 0, ErrorKind::kInvalidConfig,
            "unknown key '" + key + "' in " + where);
  }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kInvalidConfig, std::string("bad value for '") + key + "': " + e.what());
  }
}

std::string csv_field(const std::string& text) {
  if (text.find_first_of(",\"\r\n") == std::string::npos) return text;
  std::string out = "\"";
  for (char c : text) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

std::string opt_double(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string();
}

void write_json(const json& j, const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorKind::kIo, "cannot write " + path.string());
  out << j.dump(2) << '\n';
  require(out.good(), ErrorKind::kIo, "failed writing " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::kIo, "cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kInvalidInput, path.string() + ": " + e.what());
  }
}

void make_dirs(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec, ErrorKind::kIo, "cannot create " + dir.string() + ": " + ec.message());
}

bool multi(const ExperimentConfig& c) { return c.gen.mode == PredictorMode::kMultiCost; }

std::vector<fs::path> split_files(const fs::path& dir, const std::string& split,
                                  const ExperimentConfig& c) {
  if (!multi(c)) return {dir / (split + ".csv")};
  std::vector<fs::path> out;
  for (std::size_t t = 0; t < c.gen.task_count(); ++t) {
    out.push_back(dir / (split + "_" + std::to_string(t) + ".csv"));
  }
  return out;
}

void stamp(Dataset& d, const std::string& hash, const std::string& split,
           std::optional<std::uint64_t> seed) {
  auto& p = d.mutable_header().provenance;
  p["config_hash"] = hash;
  p["split"] = split;
  if (seed) p["seed"] = *seed;
}

std::vector<Dataset> draw(const Benchmark& bench, std::size_t n, std::uint64_t seed) {
  if (bench.config.mode == PredictorMode::kSingleCost) {
    return {sample_single_cost(bench, n, seed)};
  }
  return sample_multi_cost(bench, n, seed);
}

GraphSpec load_graph(const fs::path& root, const std::string& hash) {
  const json j = read_json(root / "graph.json");
  require(j.value("config_hash", "") == hash, ErrorKind::kStaleData,
          (root / "graph.json").string() + " was generated from a different config; run gen again");
  return j.at("graph").get<GraphSpec>();
}

std::vector<Dataset> load_files(const std::vector<fs::path>& files, const GraphSpec& graph,
                                const std::string& hash) {
  std::vector<Dataset> out;
  for (const fs::path& f : files) {
    Dataset d = load_dataset(f, &graph);
    const std::string got = d.header().provenance.value("config_hash", "");
    require(got == hash, ErrorKind::kStaleData,
            f.string() + " has config hash '" + got + "', expected '" + hash + "'");
    out.push_back(std::move(d));
  }
  return out;
}

double sample_std(const std::vector<double>& v, double mean) {
  if (v.size() < 2) return 0.0;
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::nan("");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

void ExperimentConfig::validate() const {
  gen.validate();
  require(!seeds.empty(), ErrorKind::kInvalidConfig, "seeds must not be empty");
  require(n_test >= 1, ErrorKind::kInvalidConfig, "n_test must be >= 1");
  require(train_fraction > 0.0 && valid_fraction >= 0.0 &&
              train_fraction + valid_fraction <= 1.0 + 1e-12,
          ErrorKind::kInvalidConfig, "split fractions must be positive and sum to at most 1");
  for (std::size_t n : sweep_n_train.empty() ? std::vector<std::size_t>{n_train} : sweep_n_train) {
    require(static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n))) >= 1,
            ErrorKind::kInvalidConfig, "n_train " + std::to_string(n) + " leaves no training rows");
  }
  for (std::size_t t : sweep_task_count) {
    require(t >= 1, ErrorKind::kInvalidConfig, "task_count sweep values must be >= 1");
  }
  const auto list = resolved_strategies();
  require(!list.empty(), ErrorKind::kInvalidConfig, "no strategy to run");
  for (Strategy s : list) {
    StrategyConfig{s, loss, mse_weight}.validate();
    if (labels == LabelKind::kSolution) {
      require(loss == DecisionLoss::kPfyl && !uses_mse(s), ErrorKind::kInvalidConfig,
              "strategy '" + to_string(s) + "' with " + to_string(loss) +
                  " needs cost labels but labels are 'solution'");
    }
    train_config(s, seeds.front()).validate(gen.mode);
  }
}

std::vector<Strategy> ExperimentConfig::resolved_strategies() const {
  if (!strategies.empty()) return strategies;
  std::vector<Strategy> out;
  for (Strategy s : kAllStrategies) {
    if (loss == DecisionLoss::kPfyl && uses_mse(s)) continue;
    out.push_back(s);
  }
  return out;
}

TrainConfig ExperimentConfig::train_config(Strategy strategy, std::uint64_t seed) const {
  TrainConfig t = train;
  t.strategy = StrategyConfig{strategy, loss, mse_weight};
  t.seed = seed;
  if (gen.mode == PredictorMode::kMultiCost && t.hidden.empty()) t.hidden = {32};
  return t;
}

std::string ExperimentConfig::data_hash() const {
  const json j = {{"gen", gen},
                  {"n_train", n_train},
                  {"n_test", n_test},
                  {"train_fraction", train_fraction},
                  {"valid_fraction", valid_fraction},
                  {"labels", to_string(labels)}};
  return hex64(fnv1a64(j.dump()));
}

void to_json(json& j, const ExperimentConfig& c) {
  json strategies = json::array();
  for (Strategy s : c.strategies) strategies.push_back(to_string(s));
  const TrainConfig& t = c.train;
  j = {{"gen", c.gen},
       {"strategies", strategies},
       {"loss", to_string(c.loss)},
       {"mse_weight", c.mse_weight},
       {"labels", to_string(c.labels)},
       {"seeds", c.seeds},
       {"n_train", c.n_train},
       {"n_test", c.n_test},
       {"train_fraction", c.train_fraction},
       {"valid_fraction", c.valid_fraction},
       {"sweep", {{"n_train", c.sweep_n_train}, {"task_count", c.sweep_task_count}}},
       {"out", c.out.string()},
       {"pfyl", {{"samples", t.pfyl_samples}, {"sigma", t.pfyl_sigma}}},
       {"train",
        {{"optimizer", to_string(t.optimizer)},
         {"learning_rate", t.learning_rate},
         {"batch_size", t.batch_size},
         {"max_iterations", t.max_iterations},
         {"max_epochs", t.max_epochs},
         {"patience", t.patience},
         {"monitor", to_string(t.monitor)},
         {"hidden", t.hidden},
         {"gradnorm_alpha", t.gradnorm_alpha},
         {"gradnorm_lr", t.gradnorm_lr},
         {"cost_scale", t.cost_scale ? json(*t.cost_scale) : json("auto")}}}};
}

void from_json(const json& j, ExperimentConfig& c) {
  check_keys(j,
             {"gen", "strategies", "loss", "mse_weight", "labels", "seeds", "n_train", "n_test",
              "train_fraction", "valid_fraction", "sweep", "out", "pfyl", "train"},
             "config");
  c = ExperimentConfig{};
  try {
    if (j.contains("gen")) {
      check_keys(j.at("gen"),
                 {"feature_dim", "node_count", "degree", "noise_low", "noise_high", "seed", "mode",
                  "sp_tasks", "tsp_tasks", "sp_edges", "tsp_subset_min", "tsp_subset_max",
                  "relatedness"},
                 "gen");
      c.gen = j.at("gen").get<GenConfig>();
    }
    if (j.contains("strategies")) {
      c.strategies.clear();
      for (const auto& s : j.at("strategies")) c.strategies.push_back(parse_strategy(s.get<std::string>()));
    }
    if (j.contains("loss")) c.loss = parse_decision_loss(j.at("loss").get<std::string>());
    if (j.contains("labels")) c.labels = parse_label_kind(j.at("labels").get<std::string>());
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kInvalidConfig, e.what());
  } catch (const Error& e) {
    throw Error(ErrorKind::kInvalidConfig, e.what());
  }
  c.mse_weight = get_or(j, "mse_weight", c.mse_weight);
  c.seeds = get_or(j, "seeds", c.seeds);
  c.n_train = get_or(j, "n_train", c.n_train);
  c.n_test = get_or(j, "n_test", c.n_test);
  c.train_fraction = get_or(j, "train_fraction", c.train_fraction);
  c.valid_fraction = get_or(j, "valid_fraction", c.valid_fraction);
  c.out = get_or<std::string>(j, "out", c.out.string());
  if (j.contains("sweep")) {
    const json& s = j.at("sweep");
    check_keys(s, {"n_train", "task_count"}, "sweep");
    c.sweep_n_train = get_or(s, "n_train", c.sweep_n_train);
    c.sweep_task_count = get_or(s, "task_count", c.sweep_task_count);
  }
  TrainConfig& t = c.train;
  if (j.contains("pfyl")) {
    const json& p = j.at("pfyl");
    check_keys(p, {"samples", "sigma"}, "pfyl");
    t.pfyl_samples = get_or(p, "samples", t.pfyl_samples);
    t.pfyl_sigma = get_or(p, "sigma", t.pfyl_sigma);
  }
  if (j.contains("train")) {
    const json& r = j.at("train");
    check_keys(r,
               {"optimizer", "learning_rate", "batch_size", "max_iterations", "max_epochs",
                "patience", "monitor", "hidden", "gradnorm_alpha", "gradnorm_lr", "cost_scale"},
               "train");
    try {
      if (r.contains("optimizer")) t.optimizer = parse_optimizer(r.at("optimizer").get<std::string>());
      if (r.contains("monitor")) t.monitor = parse_monitor(r.at("monitor").get<std::string>());
    } catch (const Error& e) {
      throw Error(ErrorKind::kInvalidConfig, e.what());
    }
    t.learning_rate = get_or(r, "learning_rate", t.learning_rate);
    t.batch_size = get_or(r, "batch_size", t.batch_size);
    t.max_iterations = get_or(r, "max_iterations", t.max_iterations);
    t.max_epochs = get_or(r, "max_epochs", t.max_epochs);
    t.patience = get_or(r, "patience", t.patience);
    t.hidden = get_or(r, "hidden", t.hidden);
    t.gradnorm_alpha = get_or(r, "gradnorm_alpha", t.gradnorm_alpha);
    t.gradnorm_lr = get_or(r, "gradnorm_lr", t.gradnorm_lr);
    if (r.contains("cost_scale")) {
      const json& s = r.at("cost_scale");
      if (s.is_string()) {
        require(s.get<std::string>() == "auto", ErrorKind::kInvalidConfig,
                "cost_scale must be \"auto\" or a positive number");
        t.cost_scale.reset();
      } else {
        t.cost_scale = get_or<double>(r, "cost_scale", 1.0);
      }
    }
  }
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::kInvalidConfig, "cannot read config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kInvalidConfig, path.string() + ": " + e.what());
  }
  return j.get<ExperimentConfig>();
}

void write_results_csv(const std::vector<ResultRow>& rows, const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorKind::kIo, "cannot write " + path.string());
  out << "n_train,task_count,strategy,seed,task,task_label,regret,normalized_regret,cost_mse,"
         "epochs,status\r\n";
  for (const ResultRow& r : rows) {
    out << r.n_train << ',' << r.task_count << ',' << csv_field(r.strategy) << ',' << r.seed
        << ',' << r.task << ',' << csv_field(r.task_label) << ',' << format_double(r.regret)
        << ',' << format_double(r.normalized_regret) << ',' << opt_double(r.cost_mse) << ','
        << r.epochs << ',' << csv_field(r.status) << "\r\n";
  }
  require(out.good(), ErrorKind::kIo, "failed writing " + path.string());
}

void write_timing_csv(const std::vector<ResultRow>& rows, const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorKind::kIo, "cannot write " + path.string());
  out << "n_train,task_count,strategy,seed,epochs,elapsed_seconds\r\n";
  std::set<std::tuple<std::size_t, std::size_t, std::string, std::uint64_t>> seen;
  for (const ResultRow& r : rows) {
    if (!seen.insert({r.n_train, r.task_count, r.strategy, r.seed}).second) continue;
    out << r.n_train << ',' << r.task_count << ',' << csv_field(r.strategy) << ',' << r.seed
        << ',' << r.epochs << ',' << format_double(r.elapsed_seconds) << "\r\n";
  }
  require(out.good(), ErrorKind::kIo, "failed writing " + path.string());
}

fs::path seed_dir(const fs::path& root, std::uint64_t seed) {
  return root / "data" / ("seed_" + std::to_string(seed));
}

fs::path run_dir(const fs::path& root, Strategy strategy, std::uint64_t seed) {
  return root / "runs" / to_string(strategy) / ("seed_" + std::to_string(seed));
}

void cmd_gen(const ExperimentConfig& config, const fs::path& root) {
  config.validate();
  const std::string hash = config.data_hash();
  const Benchmark bench = make_benchmark(config.gen);
  make_dirs(root / "data");

  json echo = config;
  echo["data_hash"] = hash;
  write_json(echo, root / "config.json");
  write_json({{"graph", bench.graph},
              {"graph_hash", hex64(bench.graph.hash())},
              {"config_hash", hash}},
             root / "graph.json");
  for (std::size_t t = 0; t < bench.tasks.size(); ++t) {
    write_json({{"task", bench.tasks[t]},
                {"index", t},
                {"label", bench.tasks[t].label()},
                {"config_hash", hash}},
               root / ("task_" + std::to_string(t) + ".json"));
  }

  auto holdout = draw(bench, config.n_test, mix_keys({config.gen.seed, kHoldoutStream}));
  const auto holdout_files = split_files(root / "data", "holdout", config);
  for (std::size_t k = 0; k < holdout.size(); ++k) {
    stamp(holdout[k], hash, "holdout", std::nullopt);
    save_dataset(holdout[k], holdout_files[k]);
  }

  const std::size_t n = config.n_train;
  const auto n_fit = static_cast<std::size_t>(std::llround(config.train_fraction * static_cast<double>(n)));
  const auto n_valid = std::min(
      n - n_fit, static_cast<std::size_t>(std::llround(config.valid_fraction * static_cast<double>(n))));
  const std::size_t cuts[] = {0, n_fit, n_fit + n_valid, n};
  const char* names[] = {"train", "valid", "test"};
  for (std::uint64_t seed : config.seeds) {
    const fs::path dir = seed_dir(root, seed);
    make_dirs(dir);
    const auto all = draw(bench, n, mix_keys({config.gen.seed, seed, kSplitStream}));
    for (int s = 0; s < 3; ++s) {
      const auto files = split_files(dir, names[s], config);
      for (std::size_t k = 0; k < all.size(); ++k) {
        Dataset part = all[k].slice(cuts[s], cuts[s + 1]);
        if (config.labels == LabelKind::kSolution) part = part.strip_costs();
        stamp(part, hash, names[s], seed);
        save_dataset(part, files[k]);
      }
    }
  }
}

TrainOutcome cmd_train(const ExperimentConfig& config, const fs::path& root, Strategy strategy,
                       std::uint64_t seed) {
  config.validate();
  const std::string hash = config.data_hash();
  const GraphSpec graph = load_graph(root, hash);
  const fs::path dir = seed_dir(root, seed);
  const auto train = load_files(split_files(dir, "train", config), graph, hash);
  const auto valid = load_files(split_files(dir, "valid", config), graph, hash);
  const TrainConfig tc = config.train_config(strategy, seed);

  const TrainResult r = multi(config) ? train_multi_cost(graph, train, valid, tc)
                                      : train_single_cost(graph, train[0], valid[0], tc);
  TrainOutcome out;
  out.diverged = r.diverged;
  out.diagnostic = r.diagnostic;
  out.epochs = r.epochs;
  out.elapsed_seconds = r.elapsed_seconds;
  const auto metrics = evaluate(r.model, graph, valid);
  out.final_validation = mean_metric(metrics);

  const fs::path rdir = run_dir(root, strategy, seed);
  make_dirs(rdir);
  const json extra = {{"config_hash", hash},
                      {"graph", graph},
                      {"strategy", to_string(strategy)},
                      {"loss", to_string(config.loss)},
                      {"seed", seed},
                      {"n_train", config.n_train},
                      {"task_count", config.gen.task_count()},
                      {"epochs", r.epochs},
                      {"iterations", r.iterations},
                      {"elapsed_seconds", r.elapsed_seconds},
                      {"diverged", r.diverged}};
  save_ensemble(r.model, rdir / "model", extra);
  write_history_csv(r.history, rdir / "history.csv");
  const bool costs = valid.front().has_costs();
  write_json({{"strategy", to_string(strategy)},
              {"loss", to_string(config.loss)},
              {"seed", seed},
              {"config_hash", hash},
              {"final_validation", out.final_validation},
              {"validation_metric", costs ? "normalized_regret" : "mismatch"},
              {"best_metric", r.best_metric},
              {"epochs", r.epochs},
              {"iterations", r.iterations},
              {"elapsed_seconds", r.elapsed_seconds},
              {"diverged", r.diverged},
              {"diagnostic", r.diagnostic}},
             rdir / "summary.json");
  return out;
}

std::vector<ResultRow> eval_checkpoint(const fs::path& model_stem,
                                       const std::vector<fs::path>& test_files) {
  json extra;
  const Ensemble model = load_ensemble(model_stem, &extra);
  const std::string hash = extra.value("config_hash", "");
  const GraphSpec graph = extra.at("graph").get<GraphSpec>();
  const auto test = load_files(test_files, graph, hash);
  for (const Dataset& d : test) {
    require(d.has_costs(), ErrorKind::kInvalidInput, "evaluation needs cost labels for regret");
  }
  const auto metrics = evaluate(model, graph, test);
  std::vector<ResultRow> rows;
  for (const TaskMetrics& m : metrics) {
    ResultRow r;
    r.n_train = extra.value("n_train", std::size_t{0});
    r.task_count = model.task_count();
    r.strategy = extra.value("strategy", "");
    r.seed = extra.value("seed", std::uint64_t{0});
    r.task = m.task;
    const Dataset& d = model.mode == PredictorMode::kSingleCost ? test[0] : test[m.task];
    r.task_label = d.header().tasks[model.mode == PredictorMode::kSingleCost ? m.task : 0].label();
    r.regret = m.regret.value_or(std::nan(""));
    r.normalized_regret = m.normalized_regret.value_or(std::nan(""));
    r.cost_mse = m.cost_mse;
    r.epochs = extra.value("epochs", std::size_t{0});
    r.elapsed_seconds = extra.value("elapsed_seconds", 0.0);
    if (extra.value("diverged", false)) r.status = "diverged";
    if (!std::isfinite(r.regret) || !std::isfinite(r.normalized_regret) ||
        (r.cost_mse && !std::isfinite(*r.cost_mse))) {
      r.status = "non-finite metric";
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<ResultRow> cmd_eval(const ExperimentConfig& config, const fs::path& root,
                                Strategy strategy, std::uint64_t seed) {
  config.validate();
  const fs::path rdir = run_dir(root, strategy, seed);
  json extra;
  load_ensemble(rdir / "model", &extra);
  require(extra.value("config_hash", "") == config.data_hash(), ErrorKind::kStaleData,
          (rdir / "model.json").string() + " was trained on data from a different config");
  auto rows = eval_checkpoint(rdir / "model", split_files(root / "data", "holdout", config));
  write_results_csv(rows, rdir / "results.csv");
  return rows;
}

namespace {

struct SweepPoint {
  ExperimentConfig config;
  fs::path root;
};

std::vector<SweepPoint> sweep_points(const ExperimentConfig& base) {
  const bool sweeping = !base.sweep_n_train.empty() || !base.sweep_task_count.empty();
  const auto ns = base.sweep_n_train.empty() ? std::vector<std::size_t>{base.n_train}
                                             : base.sweep_n_train;
  std::vector<std::optional<std::size_t>> ts;
  if (base.sweep_task_count.empty()) ts.push_back(std::nullopt);
  for (std::size_t t : base.sweep_task_count) ts.push_back(t);
  std::vector<SweepPoint> out;
  for (std::size_t n : ns) {
    for (const auto& t : ts) {
      SweepPoint p{base, base.out};
      p.config.n_train = n;
      p.config.sweep_n_train.clear();
      p.config.sweep_task_count.clear();
      if (t) {
        // Task-count sweeps alternate shortest-path and TSP tasks.
        p.config.gen.sp_tasks = *t - *t / 2;
        p.config.gen.tsp_tasks = *t / 2;
      }
      if (sweeping) {
        p.root = base.out / ("n" + std::to_string(n) + "_t" +
                             std::to_string(p.config.gen.task_count()));
      }
      out.push_back(std::move(p));
    }
  }
  return out;
}

void write_comparison(const std::vector<ResultRow>& rows, const std::vector<Strategy>& order,
                      const fs::path& csv_path, const fs::path& summary_path) {
  struct Key {
    std::size_t n;
    std::size_t t;
    std::size_t strategy;
    bool operator<(const Key& o) const {
      return std::tie(n, t, strategy) < std::tie(o.n, o.t, o.strategy);
    }
  };
  auto index_of = [&](const std::string& name) {
    for (std::size_t i = 0; i < order.size(); ++i) {
      if (to_string(order[i]) == name) return i;
    }
    return order.size();
  };
  // [key][task] -> per-seed values; task == SIZE_MAX is the task mean.
  struct Acc {
    std::vector<double> nreg, reg, mse, secs;
    std::string label;
    std::size_t failed = 0;
  };
  std::map<Key, std::map<std::size_t, Acc>> acc;
  std::map<std::tuple<Key, std::uint64_t>, std::vector<double>> per_seed;
  std::map<std::tuple<Key, std::uint64_t>, double> seed_secs;
  for (const ResultRow& r : rows) {
    const Key k{r.n_train, r.task_count, index_of(r.strategy)};
    Acc& a = acc[k][r.task];
    a.label = r.task_label;
    if (r.status != "ok") {
      ++a.failed;
      continue;
    }
    a.nreg.push_back(r.normalized_regret);
    a.reg.push_back(r.regret);
    if (r.cost_mse) a.mse.push_back(*r.cost_mse);
    per_seed[{k, r.seed}].push_back(r.normalized_regret);
    seed_secs[{k, r.seed}] = r.elapsed_seconds;
  }
  std::map<Key, Acc> overall;
  for (const auto& [ks, values] : per_seed) {
    Acc& a = overall[std::get<0>(ks)];
    a.nreg.push_back(mean_of(values));
    a.secs.push_back(seed_secs[ks]);
  }

  std::ofstream csv(csv_path, std::ios::binary | std::ios::trunc);
  require(csv.good(), ErrorKind::kIo, "cannot write " + csv_path.string());
  csv << "n_train,task_count,strategy,task,task_label,runs,failed,mean_normalized_regret,"
         "std_normalized_regret,mean_regret,std_regret,mean_cost_mse,std_cost_mse\r\n";
  std::ostringstream txt;
  for (const auto& [k, tasks] : acc) {
    const std::string name = k.strategy < order.size() ? to_string(order[k.strategy]) : "?";
    for (const auto& [task, a] : tasks) {
      const double mn = mean_of(a.nreg), mr = mean_of(a.reg);
      csv << k.n << ',' << k.t << ',' << csv_field(name) << ',' << task << ','
          << csv_field(a.label) << ',' << a.nreg.size() << ',' << a.failed << ','
          << format_double(mn) << ',' << format_double(sample_std(a.nreg, mn)) << ','
          << format_double(mr) << ',' << format_double(sample_std(a.reg, mr)) << ',';
      if (!a.mse.empty()) {
        const double mm = mean_of(a.mse);
        csv << format_double(mm) << ',' << format_double(sample_std(a.mse, mm));
      } else {
        csv << ',';
      }
      csv << "\r\n";
    }
    const Acc& o = overall[k];
    const double mo = mean_of(o.nreg);
    csv << k.n << ',' << k.t << ',' << csv_field(name) << ",mean,all tasks," << o.nreg.size()
        << ',' << tasks.begin()->second.failed << ',' << format_double(mo) << ','
        << format_double(sample_std(o.nreg, mo)) << ",,,,\r\n";
  }
  require(csv.good(), ErrorKind::kIo, "failed writing " + csv_path.string());

  // Human-readable table, one block per sweep point.
  std::size_t last_n = SIZE_MAX, last_t = SIZE_MAX;
  char line[512];
  for (const auto& [k, tasks] : acc) {
    if (k.n != last_n || k.t != last_t) {
      txt << (last_n == SIZE_MAX ? "" : "\n") << "n_train=" << k.n << " tasks=" << k.t
          << "  (normalized regret, mean +- std over seeds)\n";
      std::snprintf(line, sizeof line, "%-15s", "strategy");
      txt << line;
      for (const auto& [task, a] : tasks) {
        std::snprintf(line, sizeof line, " %-19s", a.label.c_str());
        txt << line;
      }
      std::snprintf(line, sizeof line, " %-19s %10s\n", "mean", "train s");
      txt << line;
      last_n = k.n;
      last_t = k.t;
    }
    const std::string name = k.strategy < order.size() ? to_string(order[k.strategy]) : "?";
    std::snprintf(line, sizeof line, "%-15s", name.c_str());
    txt << line;
    for (const auto& [task, a] : tasks) {
      const double m = mean_of(a.nreg);
      std::snprintf(line, sizeof line, " %8.4f +- %-7.4f", m, sample_std(a.nreg, m));
      txt << line;
    }
    const Acc& o = overall[k];
    const double mo = mean_of(o.nreg);
    std::snprintf(line, sizeof line, " %8.4f +- %-7.4f %10.2f\n", mo, sample_std(o.nreg, mo),
                  mean_of(o.secs));
    txt << line;
  }
  std::ofstream sum(summary_path, std::ios::binary | std::ios::trunc);
  require(sum.good(), ErrorKind::kIo, "cannot write " + summary_path.string());
  sum << txt.str();
}

}  // namespace

BenchReport cmd_bench(const ExperimentConfig& config, std::size_t jobs) {
  config.validate();
  const auto points = sweep_points(config);
  const auto strategies = config.resolved_strategies();
  for (const SweepPoint& p : points) cmd_gen(p.config, p.root);

  struct Cell {
    std::size_t point;
    Strategy strategy;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (std::size_t p = 0; p < points.size(); ++p) {
    for (Strategy s : strategies) {
      for (std::uint64_t seed : config.seeds) cells.push_back({p, s, seed});
    }
  }
  std::vector<std::vector<ResultRow>> cell_rows(cells.size());
  std::vector<bool> failed(cells.size(), false);
  parallel_for(cells.size(), std::max<std::size_t>(1, jobs), [&](std::size_t i) {
    const Cell& c = cells[i];
    const SweepPoint& p = points[c.point];
    try {
      const TrainOutcome t = cmd_train(p.config, p.root, c.strategy, c.seed);
      auto rows = cmd_eval(p.config, p.root, c.strategy, c.seed);
      for (ResultRow& r : rows) {
        r.elapsed_seconds = t.elapsed_seconds;
        if (r.status != "ok") failed[i] = true;
      }
      cell_rows[i] = std::move(rows);
    } catch (const std::exception& e) {
      failed[i] = true;
      ResultRow r;
      r.n_train = p.config.n_train;
      r.task_count = p.config.gen.task_count();
      r.strategy = to_string(c.strategy);
      r.seed = c.seed;
      r.task_label = "-";
      r.regret = r.normalized_regret = std::nan("");
      r.status = std::string("failed: ") + e.what();
      cell_rows[i] = {r};
    }
  });

  BenchReport report;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    report.failed_cells += failed[i];
    report.rows.insert(report.rows.end(), cell_rows[i].begin(), cell_rows[i].end());
  }
  make_dirs(config.out);
  write_results_csv(report.rows, config.out / "results.csv");
  write_timing_csv(report.rows, config.out / "timing.csv");
  write_comparison(report.rows, strategies, config.out / "comparison.csv",
                   config.out / "summary.txt");
  report.exit_code = report.failed_cells > 0 ? 4 : 0;
  return report;
}

}  // namespace mtpo
