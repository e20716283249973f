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

// Labeled datasets: features plus either cost labels (learning from costs)
// or optimal-solution labels only (learning from solutions).
//
// File layout: line 1 is a one-line JSON header, line 2 the CSV column row,
// then one CSV row per sample. Columns are x_0..x_{p-1}, then c_0..c_{d-1}
// when costs are present, then for each task t the indicator columns
// w<t>_0..w<t>_{d-1} and, with costs, the optimal value z<t>. Reals are
// written with 17 significant digits so a load reproduces them exactly.

#ifndef MTPO_DATASET_HPP_
#define MTPO_DATASET_HPP_

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mtpo/problems.hpp"

namespace mtpo {

enum class LabelKind { kCost, kSolution };
std::string to_string(LabelKind kind);
LabelKind parse_label_kind(const std::string& text);

struct Sample {
  std::vector<double> features;
  std::optional<CostVector> cost;
  // One per dataset task. objective is only meaningful with a cost label.
  std::vector<Solution> solutions;

  bool operator==(const Sample&) const = default;
};

struct DatasetHeader {
  LabelKind label = LabelKind::kCost;
  std::size_t feature_dim = 0;
  std::size_t cost_dim = 0;
  std::uint64_t graph_hash = 0;
  std::vector<TaskSpec> tasks;
  nlohmann::json provenance = nlohmann::json::object();

  bool operator==(const DatasetHeader&) const = default;
};

// Training view for learning from solutions. It has no cost field at all,
// so a training loop that only receives this type cannot read c.
struct SolutionLabels {
  std::vector<std::vector<double>> features;
  std::vector<std::vector<Solution>> solutions;  // [sample][task]
};

// Training view for learning from costs: c plus the derived (w*, z*).
struct CostLabels {
  std::vector<std::vector<double>> features;
  std::vector<CostVector> costs;
  std::vector<std::vector<Solution>> solutions;  // [sample][task]
};

class Dataset {
 public:
  Dataset() = default;
  Dataset(DatasetHeader header, std::vector<Sample> samples);
  Dataset(const Dataset& other);
  Dataset& operator=(const Dataset& other);

  const DatasetHeader& header() const { return header_; }
  DatasetHeader& mutable_header() { return header_; }
  std::size_t size() const { return samples_.size(); }
  bool has_costs() const { return header_.label == LabelKind::kCost; }

  std::span<const double> features(std::size_t i) const {
    return samples_[i].features;
  }
  const Solution& solution(std::size_t i, std::size_t task) const {
    return samples_[i].solutions[task];
  }
  // Counted; see cost_reads().
  const CostVector& cost(std::size_t i) const;
  std::uint64_t cost_reads() const { return cost_reads_.load(); }

  SolutionLabels solution_labels() const;
  CostLabels cost_labels() const;

  // Rows [begin, end) as a new dataset with the same header.
  Dataset slice(std::size_t begin, std::size_t end) const;
  // Pure learning-from-solutions copy: cost columns and z values dropped.
  Dataset strip_costs() const;

  void check_graph(const GraphSpec& graph) const;
  // Label kind, dimensions, and structural feasibility of every stored
  // solution; with costs, also optimality against the exact solver.
  void validate(const GraphSpec& graph, bool check_optimality) const;

  // Raw rows; bypasses the cost-read counter (serialization, tests).
  const std::vector<Sample>& samples() const { return samples_; }

  bool operator==(const Dataset& other) const {
    return header_ == other.header_ && samples_ == other.samples_;
  }

 private:
  DatasetHeader header_;
  std::vector<Sample> samples_;
  mutable std::atomic<std::uint64_t> cost_reads_{0};
};

void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
// With a graph, the header hash and every label are validated on load.
Dataset load_dataset(const std::filesystem::path& path,
                     const GraphSpec* graph = nullptr);

}  // namespace mtpo

#endif  // MTPO_DATASET_HPP_
