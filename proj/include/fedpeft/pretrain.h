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

#include "fedpeft/embedding.h"
#include "fedpeft/mlp.h"

namespace fedpeft {

// Encoder [k_p, hidden..., k] with ReLU hidden layers and a linear latent;
// the decoder mirrors it.
struct AutoencoderConfig {
  std::vector<std::size_t> hidden = {512, 256, 128};
  std::size_t latent = 32;
  std::size_t steps = 10000;
  std::size_t batch = 256;
  double lr = 1e-3;
  std::uint64_t seed = 1;
  bool zero_init = false;
};

struct AutoencoderModel {
  Mlp encoder;
  Mlp decoder;
};

AutoencoderModel make_autoencoder(std::size_t input_dim, const AutoencoderConfig& config);

struct AutoencoderResult {
  AutoencoderModel model;
  Matrix embeddings;                // n x k encoder latents
  std::vector<double> epoch_loss;   // mean per-item ||x - x_hat||^2 per epoch
};

// Minimizes ||x - D(E(x))||^2 with minibatch SGD; the latents of the trained
// encoder become the initial full item embeddings.
AutoencoderResult train_autoencoder(const Matrix& features, const AutoencoderConfig& config);

// Mean per-item reconstruction loss over the whole feature matrix.
double reconstruction_loss(const AutoencoderModel& model, const Matrix& features);
Matrix encode_items(const Mlp& encoder, const Matrix& features);

struct RqVaeConfig {
  AutoencoderConfig net;
  std::size_t levels = 3;
  std::size_t codebook_size = 256;
  double beta = 0.25;
  std::size_t kmeans_iters = 10;
};

struct RqVaeModel {
  Mlp encoder;
  Mlp decoder;
  std::vector<Matrix> codebooks;  // levels x (d_R x k)
};

struct RqEncoding {
  std::vector<std::uint32_t> codes;
  std::vector<Vector> residuals;  // r_0 = z, ..., r_l
  Vector quantized;               // z_hat = sum of selected rows
};

// Greedy residual quantization: c_j = argmin_t ||r_j - C_j[t]|| (ties to the
// lowest index), r_{j+1} = r_j - C_j[c_j].
RqEncoding rq_encode(std::span<const double> z, std::span<const Matrix> codebooks);

// Quantization loss sum_j ||sg[r_j] - o_j||^2 + beta ||r_j - sg[o_j]||^2 and
// its gradients: codebook rows receive only the first term, the latent only
// the commitment term.
struct QuantizationGrad {
  double loss = 0.0;
  Vector latent;                  // dL/dz from the commitment term
  std::vector<Vector> codebook;   // dL/d C_j[c_j], one per level
};
QuantizationGrad quantization_gradient(const RqEncoding& encoding,
                                       std::span<const Matrix> codebooks, double beta);

struct RqVaeResult {
  RqVaeModel model;
  CodeTable codes;
  std::vector<double> step_loss;  // mean per-item total loss per step
};

// Joint training of encoder, decoder and codebooks with a straight-through
// estimator over the quantizer. Codebooks are initialized by k-means over
// each level's residuals on the first batch.
RqVaeResult train_rqvae(const Matrix& features, const RqVaeConfig& config);

CodeTable assign_codes(const Matrix& features, const RqVaeModel& model);

}  // namespace fedpeft
