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

#include "ammnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace ammnet {

std::int64_t Tensor::numel(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (int d : shape) {
    AMM_CHECK(d > 0, ErrCode::kShapeMismatch, "tensor dimension must be positive, got " << d);
    n *= d;
  }
  return n;
}

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
  AMM_CHECK(!shape_.empty() && shape_.size() <= 4, ErrCode::kShapeMismatch,
            "tensor rank must be in [1, 4], got " << shape_.size());
  data_.assign(static_cast<std::size_t>(numel(shape_)), 0.0);
}

Tensor Tensor::full(std::vector<int> shape, double value) {
  Tensor t(std::move(shape));
  t.fill(value);
  return t;
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

std::string Tensor::shape_str() const {
  std::ostringstream out;
  out << "(";
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) out << ", ";
    out << shape_[i];
  }
  out << ")";
  return out.str();
}

void Tensor::scale(double factor) {
  double* dst = data();
  const std::int64_t n = size();
  for (std::int64_t i = 0; i < n; ++i) dst[i] *= factor;
}

void Tensor::add_scaled(const Tensor& other, double scale) {
  AMM_CHECK(same_shape(other), ErrCode::kShapeMismatch,
            "add_scaled shapes differ: " << shape_str() << " vs " << other.shape_str());
  const double* src = other.data();
  double* dst = data();
  const std::int64_t n = size();
  for (std::int64_t i = 0; i < n; ++i) dst[i] += scale * src[i];
}

double Tensor::dot(const Tensor& other) const {
  AMM_CHECK(same_shape(other), ErrCode::kShapeMismatch,
            "dot shapes differ: " << shape_str() << " vs " << other.shape_str());
  const double* a = data();
  const double* b = other.data();
  double acc = 0.0;
  const std::int64_t n = size();
  for (std::int64_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double Tensor::abs_max() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::fabs(v));
  return m;
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void fill_uniform(Tensor& t, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  double* p = t.data();
  const std::int64_t n = t.size();
  for (std::int64_t i = 0; i < n; ++i) p[i] = dist(rng);
}

void fill_normal(Tensor& t, std::mt19937_64& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  double* p = t.data();
  const std::int64_t n = t.size();
  for (std::int64_t i = 0; i < n; ++i) p[i] = dist(rng);
}

}  // namespace ammnet
