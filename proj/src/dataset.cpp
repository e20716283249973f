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

#include "mtpo/dataset.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "mtpo/error.hpp"
#include "mtpo/util.hpp"

namespace mtpo {

std::string to_string(LabelKind kind) {
  return kind == LabelKind::kCost ? "cost" : "solution";
}

LabelKind parse_label_kind(const std::string& text) {
  if (text == "cost") return LabelKind::kCost;
  if (text == "solution") return LabelKind::kSolution;
  throw Error(ErrorKind::kInvalidInput, "unknown label kind '" + text + "'");
}

Dataset::Dataset(DatasetHeader header, std::vector<Sample> samples)
    : header_(std::move(header)), samples_(std::move(samples)) {
  const std::size_t tasks = header_.tasks.size();
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    const Sample& s = samples_[i];
    const std::string where = "sample " + std::to_string(i);
    require(s.features.size() == header_.feature_dim, ErrorKind::kInvalidInput,
            where + ": feature dimension mismatch");
    require(s.cost.has_value() == has_costs(), ErrorKind::kInvalidInput,
            where + ": label kind differs from the header");
    require(!s.cost || s.cost->size() == header_.cost_dim,
            ErrorKind::kInvalidInput, where + ": cost dimension mismatch");
    require(s.solutions.size() == tasks, ErrorKind::kInvalidInput,
            where + ": expected one solution per task");
    for (const Solution& w : s.solutions) {
      require(w.selected.size() == header_.cost_dim, ErrorKind::kInvalidInput,
              where + ": solution dimension mismatch");
    }
  }
}

Dataset::Dataset(const Dataset& other)
    : header_(other.header_), samples_(other.samples_) {}

Dataset& Dataset::operator=(const Dataset& other) {
  header_ = other.header_;
  samples_ = other.samples_;
  cost_reads_.store(0);
  return *this;
}

const CostVector& Dataset::cost(std::size_t i) const {
  require(has_costs(), ErrorKind::kInvalidState,
          "dataset carries solution labels only");
  ++cost_reads_;
  return *samples_[i].cost;
}

SolutionLabels Dataset::solution_labels() const {
  SolutionLabels out;
  out.features.reserve(size());
  out.solutions.reserve(size());
  for (const Sample& s : samples_) {
    out.features.push_back(s.features);
    out.solutions.push_back(s.solutions);
  }
  return out;
}

CostLabels Dataset::cost_labels() const {
  CostLabels out;
  for (std::size_t i = 0; i < size(); ++i) {
    out.features.push_back(samples_[i].features);
    out.costs.push_back(cost(i));
    out.solutions.push_back(samples_[i].solutions);
  }
  return out;
}

Dataset Dataset::slice(std::size_t begin, std::size_t end) const {
  require(begin <= end && end <= size(), ErrorKind::kInvalidInput,
          "dataset slice out of range");
  return Dataset(header_, std::vector<Sample>(samples_.begin() + begin,
                                              samples_.begin() + end));
}

Dataset Dataset::strip_costs() const {
  DatasetHeader header = header_;
  header.label = LabelKind::kSolution;
  std::vector<Sample> rows;
  rows.reserve(size());
  for (const Sample& s : samples_) {
    Sample r;
    r.features = s.features;
    for (const Solution& w : s.solutions) r.solutions.push_back({w.selected, 0.0});
    rows.push_back(std::move(r));
  }
  return Dataset(std::move(header), std::move(rows));
}

void Dataset::check_graph(const GraphSpec& graph) const {
  require(header_.graph_hash == graph.hash(), ErrorKind::kStaleData,
          "dataset was generated for graph " + hex64(header_.graph_hash) +
              ", got " + hex64(graph.hash()));
  require(header_.cost_dim == graph.edge_count(), ErrorKind::kInvalidInput,
          "dataset cost dimension differs from the graph");
}

void Dataset::validate(const GraphSpec& graph, bool check_optimality) const {
  check_graph(graph);
  for (const TaskSpec& task : header_.tasks) task.validate(graph);
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    const Sample& s = samples_[i];
    for (std::size_t t = 0; t < header_.tasks.size(); ++t) {
      const std::string where =
          "sample " + std::to_string(i) + ", task " + std::to_string(t);
      require(is_feasible(graph, header_.tasks[t], s.solutions[t].selected),
              ErrorKind::kInvalidInput, where + ": stored solution is infeasible");
      if (!s.cost) continue;
      const double z = solution_objective(*s.cost, s.solutions[t]);
      require(z == s.solutions[t].objective, ErrorKind::kInvalidInput,
              where + ": stored objective differs from c^T w");
      if (check_optimality) {
        const double best = solve(graph, header_.tasks[t], *s.cost).objective;
        require(z <= best + 1e-9 * (1.0 + std::abs(best)),
                ErrorKind::kInvalidInput, where + ": stored solution is not optimal");
      }
    }
  }
}

namespace {

nlohmann::json header_json(const DatasetHeader& h) {
  return {{"format", "mtpo-dataset"},
          {"version", 1},
          {"label", to_string(h.label)},
          {"feature_dim", h.feature_dim},
          {"cost_dim", h.cost_dim},
          {"graph_hash", hex64(h.graph_hash)},
          {"tasks", h.tasks},
          {"provenance", h.provenance}};
}

DatasetHeader parse_header(const nlohmann::json& j) {
  require(j.value("format", "") == "mtpo-dataset", ErrorKind::kInvalidInput,
          "not an mtpo dataset file");
  DatasetHeader h;
  h.label = parse_label_kind(j.at("label").get<std::string>());
  h.feature_dim = j.at("feature_dim").get<std::size_t>();
  h.cost_dim = j.at("cost_dim").get<std::size_t>();
  h.graph_hash = std::stoull(j.at("graph_hash").get<std::string>(), nullptr, 16);
  h.tasks = j.at("tasks").get<std::vector<TaskSpec>>();
  h.provenance = j.value("provenance", nlohmann::json::object());
  return h;
}

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    cells.push_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

}  // namespace

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorKind::kIo, "cannot write " + path.string());
  const DatasetHeader& h = dataset.header();
  out << header_json(h).dump() << "\r\n";

  std::vector<std::string> columns;
  for (std::size_t k = 0; k < h.feature_dim; ++k) columns.push_back("x_" + std::to_string(k));
  if (dataset.has_costs()) {
    for (std::size_t j = 0; j < h.cost_dim; ++j) columns.push_back("c_" + std::to_string(j));
  }
  for (std::size_t t = 0; t < h.tasks.size(); ++t) {
    for (std::size_t j = 0; j < h.cost_dim; ++j) {
      columns.push_back("w" + std::to_string(t) + "_" + std::to_string(j));
    }
    if (dataset.has_costs()) columns.push_back("z" + std::to_string(t));
  }
  for (std::size_t c = 0; c < columns.size(); ++c) out << (c ? "," : "") << columns[c];
  out << "\r\n";

  for (const Sample& s : dataset.samples()) {
    std::string row;
    auto cell = [&row](const std::string& v) {
      if (!row.empty()) row += ',';
      row += v;
    };
    for (double x : s.features) cell(format_double(x));
    if (s.cost) {
      for (double c : s.cost->values()) cell(format_double(c));
    }
    for (const Solution& w : s.solutions) {
      for (std::uint8_t b : w.selected) cell(b ? "1" : "0");
      if (s.cost) cell(format_double(w.objective));
    }
    out << row << "\r\n";
  }
  require(out.good(), ErrorKind::kIo, "failed writing " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path, const GraphSpec* graph) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::kIo, "cannot read " + path.string());
  auto next_line = [&in](std::string& line) {
    if (!std::getline(in, line)) return false;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  };
  std::string line;
  require(next_line(line), ErrorKind::kInvalidInput, path.string() + " is empty");
  DatasetHeader h = parse_header(nlohmann::json::parse(line));
  require(next_line(line), ErrorKind::kInvalidInput,
          path.string() + " has no column row");
  const bool costs = h.label == LabelKind::kCost;
  const std::size_t p = h.feature_dim;
  const std::size_t d = h.cost_dim;
  const std::size_t per_task = d + (costs ? 1 : 0);
  const std::size_t width = p + (costs ? d : 0) + h.tasks.size() * per_task;
  require(split_csv(line).size() == width, ErrorKind::kInvalidInput,
          path.string() + ": column row does not match the header");

  std::vector<Sample> samples;
  while (next_line(line)) {
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    require(cells.size() == width, ErrorKind::kInvalidInput,
            path.string() + ": row " + std::to_string(samples.size()) +
                " has " + std::to_string(cells.size()) + " cells, expected " +
                std::to_string(width));
    Sample s;
    std::size_t at = 0;
    for (std::size_t k = 0; k < p; ++k) s.features.push_back(parse_double(cells[at++]));
    if (costs) {
      std::vector<double> c(d);
      for (double& v : c) v = parse_double(cells[at++]);
      s.cost = CostVector(std::move(c));
    }
    for (std::size_t t = 0; t < h.tasks.size(); ++t) {
      Solution w;
      w.selected.resize(d);
      for (auto& b : w.selected) {
        const auto cellv = cells[at++];
        require(cellv == "0" || cellv == "1", ErrorKind::kInvalidInput,
                path.string() + ": solution entries must be 0 or 1");
        b = cellv == "1";
      }
      if (costs) w.objective = parse_double(cells[at++]);
      s.solutions.push_back(std::move(w));
    }
    samples.push_back(std::move(s));
  }
  Dataset dataset(std::move(h), std::move(samples));
  if (graph) dataset.validate(*graph, /*check_optimality=*/true);
  return dataset;
}

}  // namespace mtpo
