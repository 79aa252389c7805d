#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace lsd::ad {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }
  static Tensor matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values);
  static Tensor vector(std::initializer_list<double> values);
  /// Glorot-uniform in +-sqrt(6 / (fan_in + fan_out)).
  static Tensor glorot(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng);
  static Tensor uniform(Shape shape, double lo, double hi, std::mt19937_64& rng);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  /// Leading dimension of a matrix view: rows = size / last dim.
  std::size_t rows() const { return shape_.empty() ? 1 : size() / shape_.back(); }
  std::size_t cols() const { return shape_.empty() ? 1 : shape_.back(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  double item() const { return data_.at(0); }

  Tensor reshaped(Shape shape) const;
  void fill(double v);
  bool all_finite() const;

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

/// Named learnable tensors; ordered so iteration is deterministic.
using ParamMap = std::map<std::string, Tensor>;

}  // namespace lsd::ad
