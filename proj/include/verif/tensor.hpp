#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace verif {

using Shape = std::vector<int64_t>;

enum class DType { Float32, Float64 };

int64_t element_count(std::span<const int64_t> shape);
std::string shape_to_string(std::span<const int64_t> shape);

/// Dense row-major tensor. Values are always held as float64; `dtype` records
/// the storage type the tensor was loaded from so it can be written back.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, DType dtype = DType::Float64);
  Tensor(Shape shape, std::vector<double> data, DType dtype = DType::Float64);

  static Tensor scalar(double value);
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(int64_t rows, int64_t cols, std::vector<double> values);
  static Tensor zeros(Shape shape);

  const Shape& shape() const noexcept { return shape_; }
  int64_t rank() const noexcept { return static_cast<int64_t>(shape_.size()); }
  int64_t size() const noexcept { return static_cast<int64_t>(data_.size()); }
  DType dtype() const noexcept { return dtype_; }
  void set_dtype(DType dtype) noexcept { dtype_ = dtype; }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }
  double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }
  double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }

  double at(std::initializer_list<int64_t> index) const;
  double& at(std::initializer_list<int64_t> index);

  Tensor reshaped(Shape shape) const;

  bool operator==(const Tensor& other) const;

 private:
  int64_t offset(std::initializer_list<int64_t> index) const;

  Shape shape_;
  std::vector<double> data_;
  DType dtype_ = DType::Float64;
};

/// Row-major strides for a shape.
std::vector<int64_t> strides_of(std::span<const int64_t> shape);

/// Numpy-style broadcast of two shapes; throws ShapeMismatch when incompatible.
Shape broadcast_shapes(std::span<const int64_t> a, std::span<const int64_t> b);

/// Maps a flat index in `out_shape` to the flat index of a broadcast operand.
class BroadcastIndexer {
 public:
  BroadcastIndexer(std::span<const int64_t> operand_shape, std::span<const int64_t> out_shape);
  int64_t operator()(int64_t out_index) const;

 private:
  std::vector<int64_t> out_strides_;
  std::vector<int64_t> operand_strides_;  // 0 on broadcast axes
  std::vector<int64_t> out_shape_;
};

}  // namespace verif
