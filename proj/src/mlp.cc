// Copyright 2026 The fedpeft Authors. All Rights Reserved.
//
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

#include "fedpeft/mlp.h"

#include <atomic>
#include <cmath>

#include "fedpeft/rng.h"

namespace fedpeft {

namespace {

std::uint64_t next_generation() {
  static std::atomic<std::uint64_t> counter{0};
  return ++counter;
}

double activate(Activation act, double x) {
  switch (act) {
    case Activation::kRelu:
      return x > 0.0 ? x : 0.0;
    case Activation::kSigmoid:
      return sigmoid(x);
    case Activation::kIdentity:
      break;
  }
  return x;
}

double activation_derivative(Activation act, double pre, double post) {
  switch (act) {
    case Activation::kRelu:
      return pre > 0.0 ? 1.0 : 0.0;
    case Activation::kSigmoid:
      return post * (1.0 - post);
    case Activation::kIdentity:
      break;
  }
  return 1.0;
}

}  // namespace

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Mlp::Mlp(std::vector<std::size_t> sizes, std::vector<Activation> activations, double dropout)
    : dropout_(dropout), generation_(next_generation()) {
  FEDPEFT_CHECK(sizes.size() >= 2, "an MLP needs at least an input and an output size");
  FEDPEFT_CHECK(activations.size() + 1 == sizes.size(),
                "MLP with {} sizes needs {} activations, got {}", sizes.size(), sizes.size() - 1,
                activations.size());
  FEDPEFT_CHECK(dropout >= 0.0 && dropout < 1.0, "dropout rate {} outside [0, 1)", dropout);
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    FEDPEFT_CHECK(sizes[l] > 0 && sizes[l + 1] > 0, "MLP layer sizes must be positive");
    layers_.push_back({Matrix(sizes[l + 1], sizes[l]), Matrix(1, sizes[l + 1]), activations[l]});
  }
}

Mlp Mlp::glorot(std::vector<std::size_t> sizes, std::vector<Activation> activations,
                double dropout, RngStream& rng) {
  Mlp model(std::move(sizes), std::move(activations), dropout);
  for (DenseLayer& layer : model.layers_) {
    const double bound =
        std::sqrt(6.0 / static_cast<double>(layer.weight.rows() + layer.weight.cols()));
    layer.weight = random_uniform(layer.weight.rows(), layer.weight.cols(), bound, rng);
  }
  return model;
}

std::size_t Mlp::input_size() const { return layers_.empty() ? 0 : layers_.front().weight.cols(); }

std::size_t Mlp::output_size() const { return layers_.empty() ? 0 : layers_.back().weight.rows(); }

std::vector<std::size_t> Mlp::sizes() const {
  std::vector<std::size_t> out;
  if (layers_.empty()) return out;
  out.push_back(input_size());
  for (const DenseLayer& layer : layers_) out.push_back(layer.weight.rows());
  return out;
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const DenseLayer& layer : layers_) n += layer.weight.size() + layer.bias.size();
  return n;
}

std::vector<DenseLayer>& Mlp::mutable_layers() {
  generation_ = next_generation();
  return layers_;
}

MlpGrads MlpGrads::zeros_like(const Mlp& model) {
  MlpGrads g;
  for (const DenseLayer& layer : model.layers()) {
    g.weight.emplace_back(layer.weight.rows(), layer.weight.cols());
    g.bias.emplace_back(layer.bias.cols(), 0.0);
  }
  return g;
}

void MlpGrads::clear() {
  for (GradMatrix& w : weight) w.fill(0.0);
  for (Vector& b : bias) std::fill(b.begin(), b.end(), 0.0);
}

Vector mlp_forward(const Mlp& model, std::span<const double> input, Mode mode, RngStream* rng,
                   MlpCache* cache) {
  FEDPEFT_CHECK(model.layer_count() > 0, "forward through an empty MLP");
  FEDPEFT_CHECK(input.size() == model.input_size(), "MLP input has {} values, expected {}",
                input.size(), model.input_size());
  FEDPEFT_CHECK(all_finite(input), "MLP input contains non-finite values");
  const bool use_dropout = mode == Mode::kTrain && model.dropout() > 0.0;
  FEDPEFT_CHECK(!use_dropout || rng != nullptr, "training-mode dropout requires an RngStream");

  if (cache != nullptr) {
    *cache = MlpCache{};
    cache->generation = model.generation();
  }
  Vector x(input.begin(), input.end());
  const auto& layers = model.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const DenseLayer& layer = layers[l];
    Vector pre(layer.weight.rows());
    for (std::size_t o = 0; o < pre.size(); ++o) {
      pre[o] = dot(layer.weight.row(o), x) + static_cast<double>(layer.bias(0, o));
    }
    Vector out(pre.size());
    for (std::size_t o = 0; o < pre.size(); ++o) out[o] = activate(layer.activation, pre[o]);

    if (cache != nullptr) {
      cache->inputs.push_back(x);
      cache->pre.push_back(pre);
      cache->outputs.push_back(out);
    }
    const bool hidden = l + 1 < layers.size();
    if (hidden && use_dropout) {
      const double keep = 1.0 - model.dropout();
      Vector scale(out.size());
      for (std::size_t o = 0; o < out.size(); ++o) {
        scale[o] = rng->bernoulli(keep) ? 1.0 / keep : 0.0;
        out[o] *= scale[o];
      }
      if (cache != nullptr) cache->dropout_scale.push_back(std::move(scale));
    }
    x = std::move(out);
  }
  return x;
}

Vector mlp_backward(const Mlp& model, const MlpCache& cache, std::span<const double> output_grad,
                    MlpGrads& grads) {
  const auto& layers = model.layers();
  FEDPEFT_CHECK(cache.generation == model.generation() && cache.pre.size() == layers.size(),
                "MLP cache does not belong to the current model state");
  FEDPEFT_CHECK(output_grad.size() == model.output_size(),
                "MLP output gradient has {} values, expected {}", output_grad.size(),
                model.output_size());
  if (grads.weight.size() != layers.size()) grads = MlpGrads::zeros_like(model);

  Vector upstream(output_grad.begin(), output_grad.end());
  for (std::size_t l = layers.size(); l-- > 0;) {
    const DenseLayer& layer = layers[l];
    const bool hidden = l + 1 < layers.size();
    if (hidden && !cache.dropout_scale.empty()) {
      const Vector& scale = cache.dropout_scale[l];
      for (std::size_t o = 0; o < upstream.size(); ++o) upstream[o] *= scale[o];
    }
    Vector delta(upstream.size());
    for (std::size_t o = 0; o < delta.size(); ++o) {
      delta[o] = upstream[o] *
                 activation_derivative(layer.activation, cache.pre[l][o], cache.outputs[l][o]);
    }
    const Vector& in = cache.inputs[l];
    GradMatrix& gw = grads.weight[l];
    Vector& gb = grads.bias[l];
    Vector down(in.size(), 0.0);
    for (std::size_t o = 0; o < delta.size(); ++o) {
      const double d = delta[o];
      if (d == 0.0) continue;
      gb[o] += d;
      auto grow = gw.row(o);
      auto wrow = layer.weight.row(o);
      for (std::size_t i = 0; i < in.size(); ++i) {
        grow[i] += d * in[i];
        down[i] += d * static_cast<double>(wrow[i]);
      }
    }
    upstream = std::move(down);
  }
  return upstream;
}

void sgd_step(Mlp& model, const MlpGrads& grads, double lr) {
  FEDPEFT_CHECK(grads.weight.size() == model.layer_count(),
                "gradient has {} layers, model has {}", grads.weight.size(), model.layer_count());
  auto& layers = model.mutable_layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    sgd_step(layers[l].weight, grads.weight[l], lr);
    sgd_step(layers[l].bias.values(), grads.bias[l], lr);
  }
}

std::vector<Matrix> to_tensors(const Mlp& model) {
  std::vector<Matrix> out;
  for (const DenseLayer& layer : model.layers()) {
    out.push_back(layer.weight);
    out.push_back(layer.bias);
  }
  return out;
}

void assign_tensors(Mlp& model, std::span<const Matrix> tensors) {
  FEDPEFT_CHECK(tensors.size() == 2 * model.layer_count(),
                "expected {} MLP tensors, got {}", 2 * model.layer_count(), tensors.size());
  auto& layers = model.mutable_layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    FEDPEFT_CHECK(tensors[2 * l].same_shape(layers[l].weight) &&
                      tensors[2 * l + 1].same_shape(layers[l].bias),
                  "MLP tensor shape mismatch at layer {}", l);
    layers[l].weight = tensors[2 * l];
    layers[l].bias = tensors[2 * l + 1];
  }
}

}  // namespace fedpeft
