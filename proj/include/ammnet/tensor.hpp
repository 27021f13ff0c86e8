// Copyright (c) 2026 The ammnet Authors. All Rights Reserved.
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
#include <random>
#include <string>
#include <vector>

#include "ammnet/error.hpp"

namespace ammnet {

// Dense row-major double tensor with at most four dimensions. The last
// dimension is contiguous; volumes use (channel, x, y, z) order so z runs
// fastest, images use (channel, row, col).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int> shape, double value);

  const std::vector<int>& shape() const { return shape_; }
  int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  int rank() const { return static_cast<int>(shape_.size()); }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  double& at(int a, int b) { return data_[static_cast<std::size_t>(idx2(a, b))]; }
  double at(int a, int b) const { return data_[static_cast<std::size_t>(idx2(a, b))]; }
  double& at(int a, int b, int c) { return data_[static_cast<std::size_t>(idx3(a, b, c))]; }
  double at(int a, int b, int c) const { return data_[static_cast<std::size_t>(idx3(a, b, c))]; }
  double& at(int a, int b, int c, int d) { return data_[static_cast<std::size_t>(idx4(a, b, c, d))]; }
  double at(int a, int b, int c, int d) const { return data_[static_cast<std::size_t>(idx4(a, b, c, d))]; }

  std::int64_t idx2(int a, int b) const {
    return static_cast<std::int64_t>(a) * shape_[1] + b;
  }
  std::int64_t idx3(int a, int b, int c) const {
    return (static_cast<std::int64_t>(a) * shape_[1] + b) * shape_[2] + c;
  }
  std::int64_t idx4(int a, int b, int c, int d) const {
    return ((static_cast<std::int64_t>(a) * shape_[1] + b) * shape_[2] + c) * shape_[3] + d;
  }

  void fill(double value);
  void zero() { fill(0.0); }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  std::string shape_str() const;

  // Elementwise in-place helpers used by the optimizers and loss plumbing.
  void scale(double factor);
  void add_scaled(const Tensor& other, double scale);
  double dot(const Tensor& other) const;
  double abs_max() const;
  bool all_finite() const;

  static std::int64_t numel(const std::vector<int>& shape);

 private:
  std::vector<int> shape_;
  std::vector<double> data_;
};

// Uniform fill in [lo, hi) drawn elementwise from rng.
void fill_uniform(Tensor& t, std::mt19937_64& rng, double lo, double hi);

// Zero-mean normal fill with the given standard deviation.
void fill_normal(Tensor& t, std::mt19937_64& rng, double stddev);

}  // namespace ammnet
