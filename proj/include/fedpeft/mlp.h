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

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fedpeft/tensor.h"

namespace fedpeft {

class RngStream;

enum class Activation : std::uint8_t { kIdentity = 0, kRelu = 1, kSigmoid = 2 };
enum class Mode : std::uint8_t { kTrain, kEval };

double sigmoid(double x);

struct DenseLayer {
  Matrix weight;  // out x in
  Matrix bias;    // 1 x out
  Activation activation = Activation::kIdentity;
};

// Fully connected network. Dropout (inverted, rate `dropout`) follows every
// hidden layer's activation in training mode; the output layer is never
// dropped.
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::vector<std::size_t> sizes, std::vector<Activation> activations, double dropout = 0.0);

  // Weights ~ U(-b, b) with b = sqrt(6 / (fan_in + fan_out)); zero biases.
  static Mlp glorot(std::vector<std::size_t> sizes, std::vector<Activation> activations,
                    double dropout, RngStream& rng);

  std::size_t input_size() const;
  std::size_t output_size() const;
  std::size_t layer_count() const { return layers_.size(); }
  std::vector<std::size_t> sizes() const;
  std::size_t parameter_count() const;
  double dropout() const { return dropout_; }

  const std::vector<DenseLayer>& layers() const { return layers_; }
  // Mutable access invalidates caches taken from earlier forward passes.
  std::vector<DenseLayer>& mutable_layers();

  // Changes whenever the weights may have changed; copies share it.
  std::uint64_t generation() const { return generation_; }

 private:
  std::vector<DenseLayer> layers_;
  double dropout_ = 0.0;
  std::uint64_t generation_ = 0;
};

struct MlpCache {
  std::uint64_t generation = 0;
  std::vector<Vector> inputs;       // input seen by each layer (after dropout)
  std::vector<Vector> pre;          // pre-activation per layer
  std::vector<Vector> outputs;      // post-activation per layer, before dropout
  std::vector<Vector> dropout_scale;  // per hidden layer: 0 or 1/(1-p); empty in eval
};

struct MlpGrads {
  std::vector<GradMatrix> weight;
  std::vector<Vector> bias;

  static MlpGrads zeros_like(const Mlp& model);
  void clear();
};

// `rng` is only consulted in training mode with a non-zero dropout rate.
Vector mlp_forward(const Mlp& model, std::span<const double> input, Mode mode,
                   RngStream* rng = nullptr, MlpCache* cache = nullptr);

// Accumulates parameter gradients into `grads` and returns dL/dinput.
Vector mlp_backward(const Mlp& model, const MlpCache& cache, std::span<const double> output_grad,
                    MlpGrads& grads);

void sgd_step(Mlp& model, const MlpGrads& grads, double lr);

// Flattened view used for upload, aggregation and checkpoints:
// [W_0, b_0, W_1, b_1, ...].
std::vector<Matrix> to_tensors(const Mlp& model);
void assign_tensors(Mlp& model, std::span<const Matrix> tensors);

}  // namespace fedpeft
