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

#include "mtpo/predictor.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>

#include "mtpo/error.hpp"

namespace mtpo {

namespace {

double activate(Activation a, double z) {
  switch (a) {
    case Activation::kIdentity: return z;
    case Activation::kRelu: return z > 0.0 ? z : 0.0;
    case Activation::kSoftplus: return softplus(z);
  }
  return z;
}

double activation_slope(Activation a, double z) {
  switch (a) {
    case Activation::kIdentity: return 1.0;
    case Activation::kRelu: return z > 0.0 ? 1.0 : 0.0;
    case Activation::kSoftplus: return sigmoid(z);
  }
  return 1.0;
}

DenseLayer make_layer(std::size_t in, std::size_t out, Activation activation) {
  DenseLayer layer;
  layer.in = in;
  layer.out = out;
  layer.weights.assign(in * out, 0.0);
  layer.bias.assign(out, 0.0);
  layer.activation = activation;
  return layer;
}

// The layer chain evaluated for one task.
std::vector<const DenseLayer*> chain(const PredictorParams& params,
                                     std::optional<std::size_t> task) {
  std::vector<const DenseLayer*> layers;
  for (const auto& l : params.shared) layers.push_back(&l);
  if (task) {
    for (const auto& l : params.heads[*task]) layers.push_back(&l);
  }
  return layers;
}

void check_task(const PredictorParams& params, std::optional<std::size_t> task) {
  if (params.mode == PredictorMode::kSingleCost) {
    require(!task.has_value(), ErrorKind::kInvalidInput,
            "single-cost predictor takes no task id");
  } else {
    require(task.has_value(), ErrorKind::kInvalidInput,
            "multi-cost predictor needs a task id");
    require(*task < params.heads.size(), ErrorKind::kInvalidInput,
            "task id " + std::to_string(*task) + " out of range");
  }
}

// Visits matching layers of two structurally identical layer sets.
template <typename A, typename B, typename Fn>
void zip_layers(A& a, B& b, Fn&& fn) {
  for (std::size_t i = 0; i < a.shared.size(); ++i) fn(a.shared[i], b.shared[i]);
  for (std::size_t t = 0; t < a.heads.size(); ++t) {
    for (std::size_t i = 0; i < a.heads[t].size(); ++i) {
      fn(a.heads[t][i], b.heads[t][i]);
    }
  }
}

}  // namespace

std::string to_string(Activation activation) {
  switch (activation) {
    case Activation::kIdentity: return "identity";
    case Activation::kRelu: return "relu";
    case Activation::kSoftplus: return "softplus";
  }
  return "identity";
}

std::string to_string(PredictorMode mode) {
  return mode == PredictorMode::kSingleCost ? "single-cost" : "multi-cost";
}

Activation parse_activation(const std::string& text) {
  if (text == "identity") return Activation::kIdentity;
  if (text == "relu") return Activation::kRelu;
  if (text == "softplus") return Activation::kSoftplus;
  throw Error(ErrorKind::kInvalidInput, "unknown activation '" + text + "'");
}

PredictorMode parse_predictor_mode(const std::string& text) {
  if (text == "single-cost") return PredictorMode::kSingleCost;
  if (text == "multi-cost") return PredictorMode::kMultiCost;
  throw Error(ErrorKind::kInvalidInput, "unknown predictor mode '" + text + "'");
}

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

std::size_t PredictorParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : shared) n += l.weights.size() + l.bias.size();
  for (const auto& head : heads) {
    for (const auto& l : head) n += l.weights.size() + l.bias.size();
  }
  return n;
}

void PredictorParams::validate() const {
  require(feature_dim >= 1 && cost_dim >= 1, ErrorKind::kInvalidInput,
          "predictor dims must be >= 1");
  if (mode == PredictorMode::kSingleCost) {
    require(heads.empty() && !shared.empty(), ErrorKind::kInvalidInput,
            "single-cost predictor has only shared layers");
  } else {
    require(!heads.empty(), ErrorKind::kInvalidInput,
            "multi-cost predictor needs at least one head");
  }
  auto check_chain = [&](std::span<const DenseLayer* const> layers) {
    std::size_t width = feature_dim;
    for (const DenseLayer* l : layers) {
      require(l->in == width && l->weights.size() == l->in * l->out &&
                  l->bias.size() == l->out,
              ErrorKind::kInvalidInput, "predictor layer shapes do not chain");
      width = l->out;
    }
    require(width == cost_dim, ErrorKind::kInvalidInput,
            "predictor output width differs from cost_dim");
    require(layers.back()->activation == Activation::kSoftplus,
            ErrorKind::kInvalidInput, "output activation must be softplus");
  };
  if (mode == PredictorMode::kSingleCost) {
    check_chain(chain(*this, std::nullopt));
  } else {
    for (std::size_t t = 0; t < heads.size(); ++t) {
      require(!heads[t].empty(), ErrorKind::kInvalidInput, "empty task head");
      check_chain(chain(*this, t));
    }
  }
}

Gradients Gradients::zeros_like(const PredictorParams& params) {
  Gradients g;
  auto zero = [](const DenseLayer& l) { return make_layer(l.in, l.out, l.activation); };
  for (const auto& l : params.shared) g.shared.push_back(zero(l));
  for (const auto& head : params.heads) {
    auto& out = g.heads.emplace_back();
    for (const auto& l : head) out.push_back(zero(l));
  }
  return g;
}

void Gradients::add_scaled(const Gradients& other, double scale) {
  zip_layers(*this, other, [scale](DenseLayer& a, const DenseLayer& b) {
    for (std::size_t i = 0; i < a.weights.size(); ++i) a.weights[i] += scale * b.weights[i];
    for (std::size_t i = 0; i < a.bias.size(); ++i) a.bias[i] += scale * b.bias[i];
  });
}

void Gradients::scale(double factor) {
  zip_layers(*this, *this, [factor](DenseLayer& a, const DenseLayer&) {
    for (double& w : a.weights) w *= factor;
    for (double& b : a.bias) b *= factor;
  });
}

bool Gradients::all_finite() const {
  bool ok = true;
  zip_layers(*this, *this, [&ok](const DenseLayer& a, const DenseLayer&) {
    for (double w : a.weights) ok = ok && std::isfinite(w);
    for (double b : a.bias) ok = ok && std::isfinite(b);
  });
  return ok;
}

double frobenius_norm(const DenseLayer& layer_grad) {
  double s = 0.0;
  for (double w : layer_grad.weights) s += w * w;
  return std::sqrt(s);
}

PredictorParams init_params(std::size_t feature_dim, std::size_t cost_dim,
                            std::span<const std::size_t> hidden_dims,
                            std::size_t task_count, PredictorMode mode,
                            std::uint64_t seed) {
  require(feature_dim >= 1 && cost_dim >= 1 && task_count >= 1,
          ErrorKind::kInvalidInput, "predictor dims and task count must be >= 1");
  for (std::size_t h : hidden_dims) {
    require(h >= 1, ErrorKind::kInvalidInput, "hidden widths must be >= 1");
  }
  require(mode == PredictorMode::kSingleCost || !hidden_dims.empty(),
          ErrorKind::kInvalidInput,
          "multi-cost predictor needs at least one shared hidden layer");

  std::mt19937_64 rng(seed);
  auto init = [&rng](DenseLayer& l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(l.in));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (double& w : l.weights) w = u(rng);
    for (double& b : l.bias) b = u(rng);
  };

  PredictorParams p;
  p.mode = mode;
  p.feature_dim = feature_dim;
  p.cost_dim = cost_dim;
  std::size_t width = feature_dim;
  for (std::size_t h : hidden_dims) {
    init(p.shared.emplace_back(make_layer(width, h, Activation::kRelu)));
    width = h;
  }
  if (mode == PredictorMode::kSingleCost) {
    init(p.shared.emplace_back(make_layer(width, cost_dim, Activation::kSoftplus)));
  } else {
    for (std::size_t t = 0; t < task_count; ++t) {
      p.heads.emplace_back();
      init(p.heads.back().emplace_back(make_layer(width, cost_dim, Activation::kSoftplus)));
    }
  }
  return p;
}

ForwardResult forward(const PredictorParams& params, std::span<const double> x,
                      std::optional<std::size_t> task) {
  check_task(params, task);
  require(x.size() == params.feature_dim, ErrorKind::kInvalidInput,
          "feature vector has " + std::to_string(x.size()) + " entries, expected " +
              std::to_string(params.feature_dim));
  Tape tape;
  tape.generation = params.generation;
  tape.task = task;
  tape.input.assign(x.begin(), x.end());
  const std::vector<double>* in = &tape.input;
  for (const DenseLayer* l : chain(params, task)) {
    std::vector<double> z(l->bias);
    for (std::size_t o = 0; o < l->out; ++o) {
      const double* row = &l->weights[o * l->in];
      double acc = 0.0;
      for (std::size_t i = 0; i < l->in; ++i) acc += row[i] * (*in)[i];
      z[o] += acc;
    }
    std::vector<double> a(l->out);
    for (std::size_t o = 0; o < l->out; ++o) a[o] = activate(l->activation, z[o]);
    tape.pre.push_back(std::move(z));
    tape.post.push_back(std::move(a));
    in = &tape.post.back();
  }
  std::vector<double> out = tape.post.back();
  // softplus underflows to 0 below z ~ -745; keep the output strictly positive.
  for (double& c : out) {
    require(std::isfinite(c), ErrorKind::kTrainingDiverged, "prediction overflowed");
    c = std::max(c, std::numeric_limits<double>::min());
  }
  return {CostVector(std::move(out)), std::move(tape)};
}

void backward(const PredictorParams& params, Tape& tape,
              std::span<const double> grad_cost, Gradients& grads) {
  require(!tape.consumed, ErrorKind::kInvalidState, "tape already consumed");
  require(tape.generation == params.generation, ErrorKind::kInvalidState,
          "tape was recorded against an older parameter generation");
  check_task(params, tape.task);
  const auto layers = chain(params, tape.task);
  require(tape.pre.size() == layers.size() && grad_cost.size() == params.cost_dim,
          ErrorKind::kInvalidState, "tape does not match the parameters");
  tape.consumed = true;

  const std::size_t shared_count = params.shared.size();
  std::vector<double> delta(grad_cost.begin(), grad_cost.end());
  for (std::size_t k = layers.size(); k-- > 0;) {
    const DenseLayer& l = *layers[k];
    const auto& z = tape.pre[k];
    for (std::size_t o = 0; o < l.out; ++o) delta[o] *= activation_slope(l.activation, z[o]);
    const std::vector<double>& input = k == 0 ? tape.input : tape.post[k - 1];
    DenseLayer& g = k < shared_count ? grads.shared[k]
                                     : grads.heads[*tape.task][k - shared_count];
    for (std::size_t o = 0; o < l.out; ++o) {
      if (delta[o] == 0.0) continue;
      double* row = &g.weights[o * l.in];
      for (std::size_t i = 0; i < l.in; ++i) row[i] += delta[o] * input[i];
      g.bias[o] += delta[o];
    }
    if (k == 0) break;
    std::vector<double> next(l.in, 0.0);
    for (std::size_t o = 0; o < l.out; ++o) {
      if (delta[o] == 0.0) continue;
      const double* row = &l.weights[o * l.in];
      for (std::size_t i = 0; i < l.in; ++i) next[i] += row[i] * delta[o];
    }
    delta = std::move(next);
  }
}

std::string to_string(OptimizerKind kind) {
  return kind == OptimizerKind::kSgd ? "sgd" : "adam";
}

OptimizerKind parse_optimizer(const std::string& text) {
  if (text == "sgd") return OptimizerKind::kSgd;
  if (text == "adam") return OptimizerKind::kAdam;
  throw Error(ErrorKind::kInvalidConfig, "unknown optimizer '" + text + "'");
}

OptimizerState make_optimizer(OptimizerKind kind, double learning_rate) {
  require(learning_rate > 0.0 && std::isfinite(learning_rate),
          ErrorKind::kInvalidConfig, "learning rate must be positive");
  OptimizerState s;
  s.kind = kind;
  s.learning_rate = learning_rate;
  return s;
}

void apply_update(OptimizerState& opt, PredictorParams& params,
                  const Gradients& grads) {
  require(grads.shared.size() == params.shared.size() &&
              grads.heads.size() == params.heads.size(),
          ErrorKind::kInvalidInput, "gradient shape differs from parameters");
  require(grads.all_finite(), ErrorKind::kTrainingDiverged,
          "non-finite gradient");
  ++opt.step;
  if (opt.kind == OptimizerKind::kSgd) {
    const double lr = opt.learning_rate;
    zip_layers(params, grads, [lr](DenseLayer& p, const DenseLayer& g) {
      for (std::size_t i = 0; i < p.weights.size(); ++i) p.weights[i] -= lr * g.weights[i];
      for (std::size_t i = 0; i < p.bias.size(); ++i) p.bias[i] -= lr * g.bias[i];
    });
  } else {
    if (!opt.first_moment) {
      opt.first_moment = Gradients::zeros_like(params);
      opt.second_moment = Gradients::zeros_like(params);
    }
    const double b1 = opt.beta1;
    const double b2 = opt.beta2;
    const double t = static_cast<double>(opt.step);
    const double c1 = 1.0 - std::pow(b1, t);
    const double c2 = 1.0 - std::pow(b2, t);
    const double lr = opt.learning_rate;
    const double eps = opt.epsilon;
    auto step = [&](std::vector<double>& p, const std::vector<double>& g,
                    std::vector<double>& m, std::vector<double>& v) {
      for (std::size_t i = 0; i < p.size(); ++i) {
        m[i] = b1 * m[i] + (1.0 - b1) * g[i];
        v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
        p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
      }
    };
    auto visit = [&](DenseLayer& p, const DenseLayer& g, DenseLayer& m, DenseLayer& v) {
      step(p.weights, g.weights, m.weights, v.weights);
      step(p.bias, g.bias, m.bias, v.bias);
    };
    for (std::size_t i = 0; i < params.shared.size(); ++i) {
      visit(params.shared[i], grads.shared[i], opt.first_moment->shared[i],
            opt.second_moment->shared[i]);
    }
    for (std::size_t h = 0; h < params.heads.size(); ++h) {
      for (std::size_t i = 0; i < params.heads[h].size(); ++i) {
        visit(params.heads[h][i], grads.heads[h][i],
              opt.first_moment->heads[h][i], opt.second_moment->heads[h][i]);
      }
    }
  }
  ++params.generation;
}

nlohmann::json params_manifest(const PredictorParams& params) {
  auto layer_json = [](const DenseLayer& l) {
    return nlohmann::json{{"in", l.in}, {"out", l.out},
                          {"activation", to_string(l.activation)}};
  };
  nlohmann::json shared = nlohmann::json::array();
  for (const auto& l : params.shared) shared.push_back(layer_json(l));
  nlohmann::json heads = nlohmann::json::array();
  for (const auto& head : params.heads) {
    nlohmann::json h = nlohmann::json::array();
    for (const auto& l : head) h.push_back(layer_json(l));
    heads.push_back(std::move(h));
  }
  return {{"mode", to_string(params.mode)},
          {"feature_dim", params.feature_dim},
          {"cost_dim", params.cost_dim},
          {"shared", std::move(shared)},
          {"heads", std::move(heads)},
          {"values", params.parameter_count()}};
}

void append_params_blob(const PredictorParams& params, std::vector<double>& blob) {
  auto put = [&blob](const DenseLayer& l) {
    blob.insert(blob.end(), l.weights.begin(), l.weights.end());
    blob.insert(blob.end(), l.bias.begin(), l.bias.end());
  };
  for (const auto& l : params.shared) put(l);
  for (const auto& head : params.heads) {
    for (const auto& l : head) put(l);
  }
}

PredictorParams params_from_manifest(const nlohmann::json& manifest,
                                     std::span<const double> blob,
                                     std::size_t& offset) {
  PredictorParams p;
  p.mode = parse_predictor_mode(manifest.at("mode").get<std::string>());
  p.feature_dim = manifest.at("feature_dim").get<std::size_t>();
  p.cost_dim = manifest.at("cost_dim").get<std::size_t>();
  auto take = [&](const nlohmann::json& j) {
    DenseLayer l = make_layer(j.at("in").get<std::size_t>(), j.at("out").get<std::size_t>(),
                              parse_activation(j.at("activation").get<std::string>()));
    const std::size_t need = l.weights.size() + l.bias.size();
    require(offset + need <= blob.size(), ErrorKind::kInvalidInput,
            "checkpoint blob is shorter than its manifest");
    std::copy_n(blob.begin() + offset, l.weights.size(), l.weights.begin());
    std::copy_n(blob.begin() + offset + l.weights.size(), l.bias.size(), l.bias.begin());
    offset += need;
    return l;
  };
  for (const auto& j : manifest.at("shared")) p.shared.push_back(take(j));
  for (const auto& h : manifest.at("heads")) {
    auto& head = p.heads.emplace_back();
    for (const auto& j : h) head.push_back(take(j));
  }
  p.validate();
  return p;
}

void write_blob(const std::filesystem::path& path, std::span<const double> values) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorKind::kIo, "cannot write " + path.string());
  for (double v : values) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    char bytes[8];
    for (int b = 0; b < 8; ++b) bytes[b] = static_cast<char>((bits >> (8 * b)) & 0xff);
    out.write(bytes, 8);
  }
  require(out.good(), ErrorKind::kIo, "failed writing " + path.string());
}

std::vector<double> read_blob(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::kIo, "cannot read " + path.string());
  std::vector<double> values;
  char bytes[8];
  while (in.read(bytes, 8)) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) {
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[b])) << (8 * b);
    }
    values.push_back(std::bit_cast<double>(bits));
  }
  require(in.gcount() == 0, ErrorKind::kInvalidInput,
          path.string() + " is not a whole number of fp64 values");
  return values;
}

void save_checkpoint(const PredictorParams& params,
                     const std::filesystem::path& stem) {
  nlohmann::json manifest = params_manifest(params);
  manifest["blob"] = stem.filename().string() + ".bin";
  std::vector<double> blob;
  append_params_blob(params, blob);
  write_blob(stem.string() + ".bin", blob);
  std::ofstream out(stem.string() + ".json", std::ios::trunc);
  require(out.good(), ErrorKind::kIo, "cannot write " + stem.string() + ".json");
  out << manifest.dump(2) << '\n';
}

PredictorParams load_checkpoint(const std::filesystem::path& stem) {
  std::ifstream in(stem.string() + ".json");
  require(in.good(), ErrorKind::kIo, "cannot read " + stem.string() + ".json");
  const auto manifest = nlohmann::json::parse(in);
  const auto blob = read_blob(stem.string() + ".bin");
  std::size_t offset = 0;
  PredictorParams p = params_from_manifest(manifest, blob, offset);
  require(offset == blob.size(), ErrorKind::kInvalidInput,
          "checkpoint blob is longer than its manifest");
  return p;
}

}  // namespace mtpo
