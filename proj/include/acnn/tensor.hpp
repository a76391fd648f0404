// Copyright 2026 The ACNN Triage Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#pragma once

#include <algorithm>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "acnn/error.hpp"

namespace acnn {

using Shape = std::vector<std::size_t>;

inline std::size_t ShapeSize(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

inline std::string ShapeString(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

// Dense row-major array of doubles. Dimensions are strictly positive.
// The optional gradient buffer, once allocated, always matches the shape.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, double fill = 0.0)
      : shape_(std::move(shape)), data_(CheckedSize(shape_), fill) {}

  Tensor(Shape shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    Require(data_.size() == CheckedSize(shape_), ErrorCode::kInvalidShape,
            "data length " + std::to_string(data_.size()) +
                " does not match shape " + ShapeString(shape_));
  }

  static Tensor Vector(std::vector<double> values) {
    const std::size_t n = values.size();
    return Tensor({n}, std::move(values));
  }

  static Tensor Matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> values) {
    return Tensor({rows, cols}, std::move(values));
  }

  static Tensor Scalar(double value) { return Tensor({1}, {value}); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(std::size_t row, std::size_t col) {
    return data_[row * shape_.back() + col];
  }
  double at(std::size_t row, std::size_t col) const {
    return data_[row * shape_.back() + col];
  }

  double item() const {
    Require(data_.size() == 1, ErrorCode::kInvalidShape,
            "item() on tensor of shape " + ShapeString(shape_));
    return data_[0];
  }

  // Row view for rank-2 tensors.
  std::span<const double> row(std::size_t r) const {
    const std::size_t cols = shape_.back();
    return std::span<const double>(data_).subspan(r * cols, cols);
  }
  std::span<double> row(std::size_t r) {
    const std::size_t cols = shape_.back();
    return std::span<double>(data_).subspan(r * cols, cols);
  }

  bool has_grad() const { return !grad_.empty(); }
  std::span<double> grad() { return grad_; }
  std::span<const double> grad() const { return grad_; }

  std::span<double> EnsureGrad() {
    if (grad_.size() != data_.size()) grad_.assign(data_.size(), 0.0);
    return grad_;
  }

  void ZeroGrad() {
    if (!grad_.empty()) std::fill(grad_.begin(), grad_.end(), 0.0);
  }

  void DropGrad() { grad_.clear(); }

  Tensor GradTensor() const {
    Tensor out(shape_);
    if (has_grad()) std::copy(grad_.begin(), grad_.end(), out.data_.begin());
    return out;
  }

  void Fill(double value) { std::fill(data_.begin(), data_.end(), value); }

  // Bitwise equality of shape and values; grad is ignored.
  friend bool operator==(const Tensor& a, const Tensor& b) {
    if (a.shape_ != b.shape_) return false;
    for (std::size_t i = 0; i < a.data_.size(); ++i) {
      if (std::bit_cast<std::uint64_t>(a.data_[i]) !=
          std::bit_cast<std::uint64_t>(b.data_[i]))
        return false;
    }
    return true;
  }

 private:
  static std::size_t CheckedSize(const Shape& shape) {
    Require(!shape.empty(), ErrorCode::kInvalidShape, "tensor needs a shape");
    for (std::size_t d : shape) {
      Require(d > 0, ErrorCode::kInvalidShape,
              "zero dimension in shape " + ShapeString(shape));
    }
    return ShapeSize(shape);
  }

  Shape shape_;
  std::vector<double> data_;
  std::vector<double> grad_;
};

}  // namespace acnn
