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

#include "fedpeft/tensor.h"

#include <algorithm>
#include <cmath>

#include "fedpeft/rng.h"

namespace fedpeft {

std::span<double> RowGrad::row(std::uint32_t r) {
  auto [it, inserted] = slots_.try_emplace(r, rows_.size());
  if (inserted) {
    rows_.push_back(r);
    values_.resize(values_.size() + cols_, 0.0);
  }
  return {values_.data() + it->second * cols_, cols_};
}

std::span<const double> RowGrad::find(std::uint32_t r) const {
  auto it = slots_.find(r);
  if (it == slots_.end()) return {};
  return slot(it->second);
}

void RowGrad::clear() {
  rows_.clear();
  values_.clear();
  slots_.clear();
}

bool all_finite(std::span<const float> values) {
  return std::all_of(values.begin(), values.end(), [](float v) { return std::isfinite(v); });
}

bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

double dot(std::span<const double> a, std::span<const double> b) {
  FEDPEFT_CHECK(a.size() == b.size(), "dot: length mismatch {} vs {}", a.size(), b.size());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double dot(std::span<const float> a, std::span<const double> b) {
  FEDPEFT_CHECK(a.size() == b.size(), "dot: length mismatch {} vs {}", a.size(), b.size());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
  return s;
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  FEDPEFT_CHECK(a.size() == b.size(), "distance: length mismatch {} vs {}", a.size(), b.size());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

Vector to_vector(std::span<const float> values) {
  return Vector(values.begin(), values.end());
}

Matrix random_uniform(std::size_t rows, std::size_t cols, double limit, RngStream& rng) {
  Matrix m(rows, cols);
  for (float& v : m.values()) v = static_cast<float>(rng.uniform(-limit, limit));
  return m;
}

void sgd_step(std::span<float> params, std::span<const double> grads, double lr) {
  FEDPEFT_CHECK(params.size() == grads.size(), "sgd_step: shape mismatch {} vs {}",
                params.size(), grads.size());
  FEDPEFT_CHECK(lr > 0.0, "sgd_step: learning rate must be positive");
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i] = static_cast<float>(static_cast<double>(params[i]) - lr * grads[i]);
  }
}

void sgd_step(Matrix& params, const GradMatrix& grads, double lr) {
  FEDPEFT_CHECK(params.rows() == grads.rows() && params.cols() == grads.cols(),
                "sgd_step: shape mismatch {}x{} vs {}x{}", params.rows(), params.cols(),
                grads.rows(), grads.cols());
  sgd_step(params.values(), grads.values(), lr);
}

void sgd_step(Matrix& params, const RowGrad& grads, double lr) {
  FEDPEFT_CHECK(params.cols() == grads.cols(), "sgd_step: width mismatch {} vs {}",
                params.cols(), grads.cols());
  for (std::size_t i = 0; i < grads.touched(); ++i) {
    const std::uint32_t r = grads.rows()[i];
    FEDPEFT_CHECK(r < params.rows(), "sgd_step: row {} out of range", r);
    sgd_step(params.row(r), grads.slot(i), lr);
  }
}

std::uint64_t fnv1a(std::span<const std::byte> bytes, std::uint64_t basis) {
  std::uint64_t h = basis;
  for (std::byte b : bytes) {
    h ^= static_cast<std::uint64_t>(b);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fingerprint(const Matrix& m, std::uint64_t basis) {
  const std::uint64_t dims[2] = {m.rows(), m.cols()};
  std::uint64_t h = fnv1a(std::as_bytes(std::span(dims)), basis);
  return fnv1a(std::as_bytes(m.values()), h);
}

}  // namespace fedpeft
