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

// Shared-bottom feed-forward cost predictor with hand-written forward and
// backward passes.
//
// Single-cost mode: every layer is shared and the network outputs one cost
// vector used by all tasks. Multi-cost mode: hidden layers are shared and
// each task owns an output head. The output activation is always softplus,
// so predicted costs are positive.

#ifndef MTPO_PREDICTOR_HPP_
#define MTPO_PREDICTOR_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "mtpo/problems.hpp"

namespace mtpo {

enum class Activation { kIdentity, kRelu, kSoftplus };
enum class PredictorMode { kSingleCost, kMultiCost };

std::string to_string(Activation activation);
std::string to_string(PredictorMode mode);
Activation parse_activation(const std::string& text);
PredictorMode parse_predictor_mode(const std::string& text);

// max(z, 0) + log1p(exp(-|z|)); never overflows.
double softplus(double z);
double sigmoid(double z);

// y = act(W x + b), W stored row-major (out x in).
struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> weights;
  std::vector<double> bias;
  Activation activation = Activation::kIdentity;

  bool operator==(const DenseLayer&) const = default;
};

struct PredictorParams {
  PredictorMode mode = PredictorMode::kSingleCost;
  std::size_t feature_dim = 0;
  std::size_t cost_dim = 0;
  std::vector<DenseLayer> shared;
  std::vector<std::vector<DenseLayer>> heads;
  // Bumped by every optimizer step; tapes recorded earlier become stale.
  std::uint64_t generation = 0;

  std::size_t task_count() const { return heads.size(); }
  std::size_t parameter_count() const;
  void validate() const;

  // Same layers and weights; the generation counter is bookkeeping only.
  bool same_weights(const PredictorParams& other) const {
    return mode == other.mode && feature_dim == other.feature_dim &&
           cost_dim == other.cost_dim && shared == other.shared &&
           heads == other.heads;
  }
};

// Layer gradients share DenseLayer's shape; activations are unused.
struct Gradients {
  std::vector<DenseLayer> shared;
  std::vector<std::vector<DenseLayer>> heads;

  static Gradients zeros_like(const PredictorParams& params);
  void add_scaled(const Gradients& other, double scale);
  void scale(double factor);
  bool all_finite() const;
};

double frobenius_norm(const DenseLayer& layer_grad);

PredictorParams init_params(std::size_t feature_dim, std::size_t cost_dim,
                            std::span<const std::size_t> hidden_dims,
                            std::size_t task_count, PredictorMode mode,
                            std::uint64_t seed);

// Activations of one forward pass.
struct Tape {
  std::uint64_t generation = 0;
  std::optional<std::size_t> task;
  std::vector<double> input;
  std::vector<std::vector<double>> pre;   // per layer, before activation
  std::vector<std::vector<double>> post;  // per layer, after activation
  bool consumed = false;
};

struct ForwardResult {
  CostVector cost;
  Tape tape;
};

// task is required in multi-cost mode and forbidden in single-cost mode.
ForwardResult forward(const PredictorParams& params, std::span<const double> x,
                      std::optional<std::size_t> task = std::nullopt);

// Accumulates d(loss)/d(params) into grads given d(loss)/d(cost). Marks the
// tape consumed; a consumed tape or one from an older generation is
// rejected with kInvalidState.
void backward(const PredictorParams& params, Tape& tape,
              std::span<const double> grad_cost, Gradients& grads);

enum class OptimizerKind { kSgd, kAdam };
std::string to_string(OptimizerKind kind);
OptimizerKind parse_optimizer(const std::string& text);

struct OptimizerState {
  OptimizerKind kind = OptimizerKind::kSgd;
  double learning_rate = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step = 0;
  std::optional<Gradients> first_moment;
  std::optional<Gradients> second_moment;
};

OptimizerState make_optimizer(OptimizerKind kind, double learning_rate);

// Throws kTrainingDiverged if any gradient entry is non-finite; params are
// left untouched in that case.
void apply_update(OptimizerState& optimizer, PredictorParams& params,
                  const Gradients& grads);

// Checkpoint layout: a JSON manifest of layer shapes and activations plus a
// flat little-endian fp64 blob (per layer: weights row-major, then bias).
nlohmann::json params_manifest(const PredictorParams& params);
void append_params_blob(const PredictorParams& params, std::vector<double>& blob);
PredictorParams params_from_manifest(const nlohmann::json& manifest,
                                     std::span<const double> blob,
                                     std::size_t& offset);

void write_blob(const std::filesystem::path& path, std::span<const double> values);
std::vector<double> read_blob(const std::filesystem::path& path);

// Writes <stem>.json and <stem>.bin.
void save_checkpoint(const PredictorParams& params,
                     const std::filesystem::path& stem);
PredictorParams load_checkpoint(const std::filesystem::path& stem);

}  // namespace mtpo

#endif  // MTPO_PREDICTOR_HPP_
