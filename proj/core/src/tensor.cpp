#include "repdiff/tensor.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace repdiff {

Tensor Tensor::scalar(double v) {
  Tensor t;
  t.data_ = {v};
  return t;
}

Tensor Tensor::zeros(std::size_t n) {
  Tensor t;
  t.shape_ = {n};
  t.data_.assign(n, 0.0);
  return t;
}

Tensor Tensor::zeros(std::size_t rows, std::size_t cols) {
  Tensor t;
  t.shape_ = {rows, cols};
  t.data_.assign(rows * cols, 0.0);
  return t;
}

Tensor Tensor::zeros_like(const Tensor& other) {
  Tensor t;
  t.shape_ = other.shape_;
  t.data_.assign(other.data_.size(), 0.0);
  return t;
}

Tensor Tensor::full(std::size_t rows, std::size_t cols, double v) {
  Tensor t = zeros(rows, cols);
  t.data_.assign(rows * cols, v);
  return t;
}

Tensor Tensor::vector(std::vector<double> data) {
  Tensor t;
  t.shape_ = {data.size()};
  t.data_.assign(data.begin(), data.end());
  return t;
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> data) {
  if (data.size() != rows * cols)
    throw std::invalid_argument("Tensor::matrix: data length " + std::to_string(data.size()) +
                                " does not match " + std::to_string(rows) + "x" +
                                std::to_string(cols));
  Tensor t;
  t.shape_ = {rows, cols};
  t.data_.assign(data.begin(), data.end());
  return t;
}

std::size_t Tensor::rows() const {
  if (shape_.size() == 2) return shape_[0];
  if (shape_.size() == 1) return 1;
  return 1;
}

std::size_t Tensor::cols() const {
  if (shape_.size() == 2) return shape_[1];
  if (shape_.size() == 1) return shape_[0];
  return 1;
}

double& Tensor::at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
double Tensor::at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

double Tensor::item() const {
  if (data_.size() != 1)
    throw std::invalid_argument("Tensor::item: expected scalar, got shape " + shape_str());
  return data_[0];
}

Tensor Tensor::reshaped(std::vector<std::size_t> shape) const {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  if (n != data_.size())
    throw std::invalid_argument("Tensor::reshaped: cannot view " + shape_str() + " as " +
                                repdiff::shape_str(shape));
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = data_;
  return t;
}

std::string Tensor::shape_str() const { return repdiff::shape_str(shape_); }

std::string shape_str(const std::vector<std::size_t>& shape) {
  if (shape.empty()) return "[scalar]";
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

}  // namespace repdiff
