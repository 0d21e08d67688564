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

#include "fedpeft/pretrain.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fedpeft/kmeans.h"
#include "fedpeft/rng.h"

namespace fedpeft {

namespace {

std::vector<Activation> hidden_relu(std::size_t layers) {
  std::vector<Activation> acts(layers, Activation::kRelu);
  acts.back() = Activation::kIdentity;
  return acts;
}

// Shuffled item order for one epoch, then consumed batch by batch.
class BatchSampler {
 public:
  BatchSampler(std::size_t items, std::size_t batch, std::uint64_t seed)
      : items_(items), batch_(std::max<std::size_t>(1, std::min(batch, items))), seed_(seed) {
    reshuffle();
  }

  std::span<const std::size_t> next() {
    if (cursor_ >= order_.size()) {
      ++epoch_;
      reshuffle();
    }
    const std::size_t end = std::min(order_.size(), cursor_ + batch_);
    std::span<const std::size_t> out(order_.data() + cursor_, end - cursor_);
    cursor_ = end;
    return out;
  }

  std::size_t epoch() const { return epoch_; }
  bool epoch_finished() const { return cursor_ >= order_.size(); }

 private:
  void reshuffle() {
    order_.resize(items_);
    for (std::size_t i = 0; i < items_; ++i) order_[i] = i;
    RngStream rng(seed_, {Purpose::kPretrain, 0, epoch_, 0});
    rng.shuffle(std::span(order_));
    cursor_ = 0;
  }

  std::size_t items_;
  std::size_t batch_;
  std::uint64_t seed_;
  std::size_t epoch_ = 0;
  std::size_t cursor_ = 0;
  std::vector<std::size_t> order_;
};

double squared_error_grad(std::span<const double> target, std::span<const double> output,
                          Vector& grad) {
  grad.resize(output.size());
  double loss = 0.0;
  for (std::size_t d = 0; d < output.size(); ++d) {
    const double diff = output[d] - target[d];
    loss += diff * diff;
    grad[d] = 2.0 * diff;
  }
  return loss;
}

void check_finite_loss(double loss, std::size_t epoch, const char* what) {
  FEDPEFT_CHECK(std::isfinite(loss), "{} training diverged at epoch {} (loss is not finite)", what,
                epoch);
}

void check_finite_model(const Mlp& model, std::size_t epoch, const char* what) {
  for (const DenseLayer& layer : model.layers()) {
    FEDPEFT_CHECK(all_finite(layer.weight.values()) && all_finite(layer.bias.values()),
                  "{} training diverged at epoch {} (non-finite weights)", what, epoch);
  }
}

}  // namespace

AutoencoderModel make_autoencoder(std::size_t input_dim, const AutoencoderConfig& config) {
  FEDPEFT_CHECK(input_dim > 0 && config.latent > 0, "autoencoder dimensions must be positive");
  std::vector<std::size_t> enc_sizes = {input_dim};
  enc_sizes.insert(enc_sizes.end(), config.hidden.begin(), config.hidden.end());
  enc_sizes.push_back(config.latent);
  std::vector<std::size_t> dec_sizes(enc_sizes.rbegin(), enc_sizes.rend());
  const auto acts = hidden_relu(enc_sizes.size() - 1);
  if (config.zero_init) {
    return {Mlp(enc_sizes, acts), Mlp(dec_sizes, acts)};
  }
  RngStream rng(config.seed, {Purpose::kInit, 0, 0, 0xae});
  Mlp encoder = Mlp::glorot(enc_sizes, acts, 0.0, rng);
  Mlp decoder = Mlp::glorot(dec_sizes, acts, 0.0, rng);
  return {std::move(encoder), std::move(decoder)};
}

Matrix encode_items(const Mlp& encoder, const Matrix& features) {
  Matrix out(features.rows(), encoder.output_size());
  for (std::size_t i = 0; i < features.rows(); ++i) {
    const Vector z = mlp_forward(encoder, to_vector(features.row(i)), Mode::kEval);
    for (std::size_t d = 0; d < z.size(); ++d) out(i, d) = static_cast<float>(z[d]);
  }
  return out;
}

double reconstruction_loss(const AutoencoderModel& model, const Matrix& features) {
  FEDPEFT_CHECK(features.rows() > 0, "reconstruction loss over no items");
  double total = 0.0;
  Vector grad;
  for (std::size_t i = 0; i < features.rows(); ++i) {
    const Vector x = to_vector(features.row(i));
    const Vector z = mlp_forward(model.encoder, x, Mode::kEval);
    const Vector x_hat = mlp_forward(model.decoder, z, Mode::kEval);
    total += squared_error_grad(x, x_hat, grad);
  }
  return total / static_cast<double>(features.rows());
}

AutoencoderResult train_autoencoder(const Matrix& features, const AutoencoderConfig& config) {
  FEDPEFT_CHECK(features.rows() > 0 && features.cols() > 0, "autoencoder needs item features");
  AutoencoderResult result{make_autoencoder(features.cols(), config), {}, {}};
  AutoencoderModel& model = result.model;

  BatchSampler sampler(features.rows(), config.batch, config.seed);
  MlpGrads enc_grads = MlpGrads::zeros_like(model.encoder);
  MlpGrads dec_grads = MlpGrads::zeros_like(model.decoder);
  double epoch_sum = 0.0;
  std::size_t epoch_count = 0;
  MlpCache enc_cache;
  MlpCache dec_cache;
  Vector grad;

  for (std::size_t step = 0; step < config.steps; ++step) {
    const std::size_t epoch = sampler.epoch();
    const auto batch = sampler.next();
    enc_grads.clear();
    dec_grads.clear();
    for (std::size_t idx : batch) {
      const Vector x = to_vector(features.row(idx));
      const Vector z = mlp_forward(model.encoder, x, Mode::kTrain, nullptr, &enc_cache);
      const Vector x_hat = mlp_forward(model.decoder, z, Mode::kTrain, nullptr, &dec_cache);
      const double loss = squared_error_grad(x, x_hat, grad);
      check_finite_loss(loss, epoch, "autoencoder");
      epoch_sum += loss;
      ++epoch_count;
      const Vector dz = mlp_backward(model.decoder, dec_cache, grad, dec_grads);
      mlp_backward(model.encoder, enc_cache, dz, enc_grads);
    }
    const double lr = config.lr / static_cast<double>(batch.size());
    sgd_step(model.decoder, dec_grads, lr);
    sgd_step(model.encoder, enc_grads, lr);
    check_finite_model(model.decoder, epoch, "autoencoder");
    check_finite_model(model.encoder, epoch, "autoencoder");
    if (sampler.epoch_finished() || step + 1 == config.steps) {
      result.epoch_loss.push_back(epoch_sum / static_cast<double>(epoch_count));
      epoch_sum = 0.0;
      epoch_count = 0;
    }
  }
  result.embeddings = encode_items(model.encoder, features);
  FEDPEFT_CHECK(all_finite(result.embeddings.values()),
                "autoencoder produced non-finite embeddings");
  return result;
}

RqEncoding rq_encode(std::span<const double> z, std::span<const Matrix> codebooks) {
  RqEncoding out;
  out.residuals.emplace_back(z.begin(), z.end());
  out.quantized.assign(z.size(), 0.0);
  for (const Matrix& book : codebooks) {
    FEDPEFT_CHECK(book.rows() > 0 && book.cols() == z.size(),
                  "codebook of shape {}x{} cannot quantize a {}-dim latent", book.rows(),
                  book.cols(), z.size());
    const Vector& r = out.residuals.back();
    std::uint32_t best = 0;
    double best_dist = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < book.rows(); ++t) {
      double d = 0.0;
      const auto row = book.row(t);
      for (std::size_t c = 0; c < r.size(); ++c) {
        const double diff = r[c] - static_cast<double>(row[c]);
        d += diff * diff;
      }
      if (d < best_dist) {
        best_dist = d;
        best = static_cast<std::uint32_t>(t);
      }
    }
    out.codes.push_back(best);
    Vector next(r.size());
    const auto row = book.row(best);
    for (std::size_t c = 0; c < r.size(); ++c) {
      next[c] = r[c] - static_cast<double>(row[c]);
      out.quantized[c] += static_cast<double>(row[c]);
    }
    out.residuals.push_back(std::move(next));
  }
  return out;
}

QuantizationGrad quantization_gradient(const RqEncoding& encoding,
                                       std::span<const Matrix> codebooks, double beta) {
  QuantizationGrad out;
  const std::size_t k = encoding.residuals.front().size();
  out.latent.assign(k, 0.0);
  for (std::size_t j = 0; j < encoding.codes.size(); ++j) {
    const Vector& r = encoding.residuals[j];
    const auto row = codebooks[j].row(encoding.codes[j]);
    Vector code_grad(k);
    double sq = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      const double diff = r[c] - static_cast<double>(row[c]);
      sq += diff * diff;
      code_grad[c] = -2.0 * diff;
      out.latent[c] += 2.0 * beta * diff;
    }
    out.loss += (1.0 + beta) * sq;
    out.codebook.push_back(std::move(code_grad));
  }
  return out;
}

namespace {

void kmeans_init(RqVaeModel& model, const Matrix& features, std::span<const std::size_t> batch,
                 const RqVaeConfig& config) {
  std::vector<Vector> residuals;
  for (std::size_t idx : batch) {
    residuals.push_back(mlp_forward(model.encoder, to_vector(features.row(idx)), Mode::kEval));
  }
  for (std::size_t j = 0; j < config.levels; ++j) {
    RngStream rng(config.net.seed, {Purpose::kKMeans, 0, j, 0x59});
    const KMeansResult km = kmeans(residuals, config.codebook_size, config.kmeans_iters, rng);
    Matrix& book = model.codebooks[j];
    for (std::size_t t = 0; t < km.centroids.size(); ++t) {
      for (std::size_t c = 0; c < book.cols(); ++c) {
        book(t, c) = static_cast<float>(km.centroids[t][c]);
      }
    }
    for (std::size_t p = 0; p < residuals.size(); ++p) {
      const auto row = book.row(km.assignments[p]);
      for (std::size_t c = 0; c < row.size(); ++c) residuals[p][c] -= static_cast<double>(row[c]);
    }
  }
}

}  // namespace

RqVaeResult train_rqvae(const Matrix& features, const RqVaeConfig& config) {
  FEDPEFT_CHECK(features.rows() > 0 && features.cols() > 0, "RQ-VAE needs item features");
  FEDPEFT_CHECK(config.levels >= 1 && config.codebook_size >= 1,
                "RQ-VAE needs at least one level and one code per codebook");
  FEDPEFT_CHECK(config.beta >= 0.0, "commitment weight must be non-negative");
  AutoencoderModel net = make_autoencoder(features.cols(), config.net);
  RqVaeResult result;
  RqVaeModel& model = result.model;
  model.encoder = std::move(net.encoder);
  model.decoder = std::move(net.decoder);
  model.codebooks.assign(config.levels, Matrix(config.codebook_size, config.net.latent));

  BatchSampler sampler(features.rows(), config.net.batch, config.net.seed);
  MlpGrads enc_grads = MlpGrads::zeros_like(model.encoder);
  MlpGrads dec_grads = MlpGrads::zeros_like(model.decoder);
  std::vector<RowGrad> book_grads(config.levels, RowGrad(config.net.latent));
  MlpCache enc_cache;
  MlpCache dec_cache;
  Vector recon_grad;

  for (std::size_t step = 0; step < config.net.steps; ++step) {
    const std::size_t epoch = sampler.epoch();
    const auto batch = sampler.next();
    if (step == 0) kmeans_init(model, features, batch, config);
    enc_grads.clear();
    dec_grads.clear();
    for (RowGrad& g : book_grads) g.clear();
    double batch_loss = 0.0;
    for (std::size_t idx : batch) {
      const Vector x = to_vector(features.row(idx));
      const Vector z = mlp_forward(model.encoder, x, Mode::kTrain, nullptr, &enc_cache);
      const RqEncoding enc = rq_encode(z, model.codebooks);
      const Vector x_hat =
          mlp_forward(model.decoder, enc.quantized, Mode::kTrain, nullptr, &dec_cache);
      const double recon = squared_error_grad(x, x_hat, recon_grad);
      const QuantizationGrad quant = quantization_gradient(enc, model.codebooks, config.beta);
      const double loss = recon + quant.loss;
      check_finite_loss(loss, epoch, "RQ-VAE");
      batch_loss += loss;

      // Straight-through: dL/dz_hat flows to z unchanged.
      Vector dz = mlp_backward(model.decoder, dec_cache, recon_grad, dec_grads);
      for (std::size_t c = 0; c < dz.size(); ++c) dz[c] += quant.latent[c];
      mlp_backward(model.encoder, enc_cache, dz, enc_grads);
      for (std::size_t j = 0; j < config.levels; ++j) {
        auto row = book_grads[j].row(enc.codes[j]);
        for (std::size_t c = 0; c < row.size(); ++c) row[c] += quant.codebook[j][c];
      }
    }
    result.step_loss.push_back(batch_loss / static_cast<double>(batch.size()));
    const double lr = config.net.lr / static_cast<double>(batch.size());
    sgd_step(model.decoder, dec_grads, lr);
    sgd_step(model.encoder, enc_grads, lr);
    for (std::size_t j = 0; j < config.levels; ++j) sgd_step(model.codebooks[j], book_grads[j], lr);
    check_finite_model(model.decoder, epoch, "RQ-VAE");
    check_finite_model(model.encoder, epoch, "RQ-VAE");
    for (const Matrix& book : model.codebooks) {
      FEDPEFT_CHECK(all_finite(book.values()),
                    "RQ-VAE training diverged at epoch {} (non-finite codebook)", epoch);
    }
  }
  result.codes = assign_codes(features, model);
  return result;
}

CodeTable assign_codes(const Matrix& features, const RqVaeModel& model) {
  FEDPEFT_CHECK(!model.codebooks.empty(), "RQ-VAE model has no codebooks");
  CodeTable codes;
  codes.levels = model.codebooks.size();
  codes.codebook_size = model.codebooks.front().rows();
  codes.codes.reserve(features.rows() * codes.levels);
  for (std::size_t i = 0; i < features.rows(); ++i) {
    const Vector z = mlp_forward(model.encoder, to_vector(features.row(i)), Mode::kEval);
    const RqEncoding enc = rq_encode(z, model.codebooks);
    codes.codes.insert(codes.codes.end(), enc.codes.begin(), enc.codes.end());
  }
  return codes;
}

}  // namespace fedpeft
