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

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "fedpeft/error.h"

namespace fedpeft {

class RngStream;

// Row-major dense matrix. Trainable parameters are stored as `Matrix`
// (32-bit); gradients and activations are carried in double precision.
template <typename T>
class BasicMatrix {
 public:
  using value_type = T;

  BasicMatrix() = default;
  BasicMatrix(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  bool same_shape(const BasicMatrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  friend bool operator==(const BasicMatrix&, const BasicMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

using Matrix = BasicMatrix<float>;
using GradMatrix = BasicMatrix<double>;
using Vector = std::vector<double>;

// Sparse accumulator of per-row gradients for a table-shaped parameter.
// Rows are kept in first-touch order so application order is deterministic.
class RowGrad {
 public:
  RowGrad() = default;
  explicit RowGrad(std::size_t cols) : cols_(cols) {}

  std::size_t cols() const { return cols_; }
  std::size_t touched() const { return rows_.size(); }
  const std::vector<std::uint32_t>& rows() const { return rows_; }

  // Zero-initialized on first access.
  std::span<double> row(std::uint32_t r);
  std::span<const double> slot(std::size_t i) const {
    return {values_.data() + i * cols_, cols_};
  }
  // Gradient for row r, or empty if the row was never touched.
  std::span<const double> find(std::uint32_t r) const;

  void clear();

 private:
  std::size_t cols_ = 0;
  std::vector<std::uint32_t> rows_;
  std::vector<double> values_;
  std::unordered_map<std::uint32_t, std::size_t> slots_;
};

bool all_finite(std::span<const float> values);
bool all_finite(std::span<const double> values);

double dot(std::span<const double> a, std::span<const double> b);
double dot(std::span<const float> a, std::span<const double> b);
double squared_distance(std::span<const double> a, std::span<const double> b);

Vector to_vector(std::span<const float> values);

// Entries drawn i.i.d. from U(-limit, limit).
Matrix random_uniform(std::size_t rows, std::size_t cols, double limit, RngStream& rng);

// p <- p - lr * g over matching shapes.
void sgd_step(std::span<float> params, std::span<const double> grads, double lr);
void sgd_step(Matrix& params, const GradMatrix& grads, double lr);
void sgd_step(Matrix& params, const RowGrad& grads, double lr);

// 64-bit FNV-1a over raw bytes; used to fingerprint tensors and configs.
std::uint64_t fnv1a(std::span<const std::byte> bytes,
                    std::uint64_t basis = 0xcbf29ce484222325ULL);
std::uint64_t fingerprint(const Matrix& m, std::uint64_t basis = 0xcbf29ce484222325ULL);

}  // namespace fedpeft
